#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "imt/decoder.hpp"
#include "imt/error.hpp"
#include "imt/model_core.hpp"
#include "imt/tm_index.hpp"
#include "imt/tokenizer.hpp"

namespace imt {

// Defaults are the values tuned on the development sets for both evaluation
// domains (k=4, lambda=0.4, temperature=5, tau=5).
struct KnnConfig {
  std::size_t k = 4;
  double lambda = 0.4;
  double temperature = 5.0;
  double tau = 5.0;

  void validate() const {
    if (k < 1) throw Error(ErrorCode::invalid_argument, "knn k must be >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "knn lambda must be in [0, 1]");
    }
    if (!(temperature > 0.0)) {
      throw Error(ErrorCode::invalid_argument, "knn temperature must be positive");
    }
    if (!(tau >= 0.0)) throw Error(ErrorCode::invalid_argument, "knn tau must be >= 0");
  }

  friend bool operator==(const KnnConfig&, const KnnConfig&) = default;
};

inline nlohmann::json to_json(const KnnConfig& c) {
  nlohmann::json j = {{"k", c.k}, {"lambda", c.lambda}, {"temperature", c.temperature}};
  if (std::isinf(c.tau)) {
    j["tau"] = "inf";
  } else {
    j["tau"] = c.tau;
  }
  return j;
}

inline KnnConfig knn_config_from_json(const nlohmann::json& j, KnnConfig base = {}) {
  if (j.contains("k")) base.k = j.at("k").get<std::size_t>();
  if (j.contains("lambda")) base.lambda = j.at("lambda").get<double>();
  if (j.contains("temperature")) base.temperature = j.at("temperature").get<double>();
  if (j.contains("tau")) {
    const auto& t = j.at("tau");
    base.tau = t.is_string() && t.get<std::string>() == "inf"
                   ? std::numeric_limits<double>::infinity()
                   : t.get<double>();
  }
  base.validate();
  return base;
}

struct KnnProvenance {
  TmId tm_id = 0;
  std::size_t step = 0;
};

// Condensed datastore for one source sentence: one (context vector, next
// target token) record per force-decoded step of every pooled TM target.
struct KnnDatastore {
  std::size_t dim = 0;
  std::vector<double> keys;  // size() * dim, row-major
  std::vector<TokenId> values;
  std::vector<KnnProvenance> provenance;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  std::span<const double> key(std::size_t i) const { return {keys.data() + i * dim, dim}; }
};

inline KnnDatastore build_datastore(const SequenceModel& model, std::span<const TmEntry> pool) {
  const Vocabulary* src_vocab = model.source_vocab();
  if (!src_vocab) throw Error(ErrorCode::invalid_argument, "datastore needs a source vocabulary");
  const Vocabulary& tgt_vocab = model.target_vocab();
  KnnDatastore ds;
  ds.dim = model.context_dim();
  for (const auto& entry : pool) {
    const auto source = tokenize(entry.source, *src_vocab).ids;
    const auto target = tokenize(entry.target, tgt_vocab).ids;
    const bool has_unk = std::find(target.begin(), target.end(), tgt_vocab.specials().unk) !=
                         target.end();
    if (source.empty() || target.empty() || has_unk) {
      ds.warnings.push_back("TM " + std::to_string(entry.id) + " skipped: untokenizable pair");
      continue;
    }
    for (std::size_t t = 0; t <= target.size(); ++t) {
      const auto out = model.step(source, std::span<const TokenId>(target.data(), t), nullptr);
      if (out.state.context.size() != ds.dim) {
        throw Error(ErrorCode::invalid_argument, "datastore/model mismatch");
      }
      ds.keys.insert(ds.keys.end(), out.state.context.begin(), out.state.context.end());
      ds.values.push_back(t < target.size() ? target[t] : tgt_vocab.specials().eos);
      ds.provenance.push_back({entry.id, t});
    }
  }
  return ds;
}

inline double squared_l2(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// The k records nearest to `query`, by distance then record index.
inline std::vector<Neighbor> nearest_neighbors(const KnnDatastore& ds,
                                               std::span<const double> query, std::size_t k) {
  if (!ds.empty() && query.size() != ds.dim) {
    throw Error(ErrorCode::invalid_argument, "datastore/model mismatch");
  }
  std::vector<Neighbor> all(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) all[i] = {i, squared_l2(ds.key(i), query)};
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      if (a.distance != b.distance) return a.distance < b.distance;
                      return a.index < b.index;
                    });
  all.resize(keep);
  return all;
}

// lambda * p_knn + (1 - lambda) * p_mt over neighbors strictly closer than
// tau; p_mt unchanged when none qualify.
inline Distribution interpolate_knn(const Distribution& p_mt, const KnnDatastore& ds,
                                    std::span<const Neighbor> neighbors, const KnnConfig& config) {
  if (config.lambda == 0.0) return p_mt;
  std::vector<double> weights;
  std::vector<TokenId> values;
  for (const auto& n : neighbors) {
    if (n.distance < config.tau) {
      weights.push_back(std::exp(-n.distance / config.temperature));
      values.push_back(ds.values[n.index]);
    }
  }
  if (weights.empty()) return p_mt;
  const double z = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> p_knn(p_mt.size(), 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    p_knn[static_cast<std::size_t>(values[i])] += weights[i] / z;
  }
  Distribution out;
  out.probs.resize(p_mt.size());
  for (std::size_t i = 0; i < p_mt.size(); ++i) {
    out.probs[i] = config.lambda * p_knn[i] + (1.0 - config.lambda) * p_mt.probs[i];
  }
  return out;
}

inline Distribution knn_step(const SequenceModel& model, const KnnDatastore& ds,
                             const KnnConfig& config, std::span<const TokenId> source,
                             std::span<const TokenId> prefix, const TmContext* tm = nullptr) {
  auto out = model.step(source, prefix, tm);
  if (!ds.empty() && out.state.context.size() != ds.dim) {
    throw Error(ErrorCode::invalid_argument, "datastore/model mismatch");
  }
  if (ds.empty() || config.lambda == 0.0) return std::move(out.dist);
  const auto neighbors = nearest_neighbors(ds, out.state.context, config.k);
  return interpolate_knn(out.dist, ds, neighbors, config);
}

inline auto knn_step_fn(const SequenceModel& model, const KnnDatastore& ds,
                        const KnnConfig& config, std::span<const TokenId> source,
                        const TmContext* tm = nullptr) {
  return [&model, &ds, &config, source, tm](std::span<const TokenId> prefix) {
    return knn_step(model, ds, config, source, prefix, tm);
  };
}

// Beam search with kNN-interpolated step distributions; prefix forcing and
// word completion behave exactly as in beam_decode.
inline DecodeResult knn_decode(const SequenceModel& model, const KnnDatastore& ds,
                               const KnnConfig& config, std::span<const TokenId> source,
                               const PrefixSpec& spec, const BeamConfig& beam = {}) {
  config.validate();
  return beam_decode(knn_step_fn(model, ds, config, source), model.target_vocab(), spec, beam);
}

}  // namespace imt
