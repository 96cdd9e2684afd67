// imt: train toy models, translate, evaluate, tune kNN settings and serve.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "imt/engine.hpp"
#include "imt/eval_harness.hpp"
#include "imt/http_api.hpp"
#include "imt/io.hpp"
#include "imt/service.hpp"
#include "imt/toy_corpus.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitMissingInput = 2;

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw MissingInput("no such file: " + path);
}

void require_model_dir(const std::string& dir) {
  if (!fs::is_regular_file(fs::path(dir) / imt::ModelBundle::kModelFile)) {
    throw MissingInput("no model artifacts in: " + dir);
  }
}

// Engine flags shared by translate, eval and tune-knn.
struct EngineOptions {
  std::string engine = "plain";
  std::string tm_path;
  double min_match_rate = 0.7;
  std::size_t beam = 4;
  std::size_t knn_k = 4;
  double knn_lambda = 0.4;
  double knn_temperature = 5.0;
  std::string knn_tau = "5";
  double knn_pool_min_match_rate = 0.0;

  void add_to(CLI::App* app) {
    app->add_option("--engine", engine, "plain, tm or knn")->check(CLI::IsMember({"plain", "tm", "tm_conditioned", "knn"}));
    app->add_option("--tm", tm_path, "translation memory (TSV or JSONL)");
    app->add_option("--min-match-rate", min_match_rate, "TM display/conditioning threshold");
    app->add_option("--beam", beam, "beam size");
    app->add_option("--knn-k", knn_k, "neighbors per step");
    app->add_option("--knn-lambda", knn_lambda, "kNN interpolation weight");
    app->add_option("--knn-temperature", knn_temperature, "kNN softmax temperature");
    app->add_option("--knn-tau", knn_tau, "kNN distance threshold (number or inf)");
    app->add_option("--knn-pool-min-match-rate", knn_pool_min_match_rate,
                    "match-rate floor for the kNN TM pool");
  }

  imt::EngineSettings settings() const {
    nlohmann::json knn = {{"k", knn_k}, {"lambda", knn_lambda}, {"temperature", knn_temperature}};
    if (knn_tau == "inf") {
      knn["tau"] = "inf";
    } else {
      try {
        knn["tau"] = std::stod(knn_tau);
      } catch (const std::exception&) {
        throw imt::Error(imt::ErrorCode::invalid_argument, "bad --knn-tau: " + knn_tau);
      }
    }
    return imt::engine_settings_from_json({{"engine", engine},
                                           {"min_match_rate", min_match_rate},
                                           {"beam", beam},
                                           {"knn", knn},
                                           {"knn_pool_min_match_rate", knn_pool_min_match_rate}});
  }

  void load_tm(imt::TmStore& store) const {
    if (tm_path.empty()) return;
    require_file(tm_path);
    auto parsed = imt::io::read_pairs(tm_path);
    for (const auto& w : parsed.warnings) std::cerr << tm_path << ": " << w << "\n";
    store.add_entries(parsed.pairs, imt::TmOrigin::uploaded);
  }
};

imt::TestSet load_test_set(const std::string& path) {
  require_file(path);
  auto parsed = imt::io::read_pairs(path);
  for (const auto& w : parsed.warnings) std::cerr << path << ": " << w << "\n";
  return std::move(parsed.pairs);
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoul(item));
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    out.push_back(item == "inf" ? std::numeric_limits<double>::infinity() : std::stod(item));
  }
  return out;
}

void emit(const imt::EvalReport& report, bool json) {
  if (json) {
    std::cout << report.to_json().dump(2) << "\n";
  } else {
    std::cout << report.table();
  }
}

int run_train(const std::string& parallel, const std::string& mono, std::size_t merges,
              const std::string& out) {
  require_file(parallel);
  if (!mono.empty()) require_file(mono);
  auto pairs = imt::io::read_pairs(parallel);
  for (const auto& w : pairs.warnings) std::cerr << parallel << ": " << w << "\n";
  std::vector<std::string> mono_lines;
  if (!mono.empty()) {
    for (auto& line : imt::io::read_lines(mono)) {
      auto clean = imt::utf8::normalize_whitespace(line);
      if (!clean.empty()) mono_lines.push_back(std::move(clean));
    }
  }
  if (pairs.pairs.empty()) throw imt::Error(imt::ErrorCode::invalid_argument, "empty parallel corpus");
  imt::ModelBundle::train(pairs.pairs, mono_lines, merges).save(out);
  std::cerr << "trained on " << pairs.pairs.size() << " pairs; artifacts in " << out << "\n";
  return 0;
}

int run_translate(const std::string& model_dir, const std::string& input, const std::string& output,
                  const EngineOptions& opts) {
  require_model_dir(model_dir);
  require_file(input);
  imt::TmStore tm;
  opts.load_tm(tm);
  const imt::Engine engine(imt::ModelBundle::load(model_dir), opts.settings(), &tm);
  std::string result;
  for (const auto& line : imt::io::lines(imt::io::read_file(input))) {
    const auto source = imt::utf8::normalize_whitespace(line);
    result += (source.empty() ? std::string() : engine.translate(source)) + "\n";
  }
  if (output.empty() || output == "-") {
    std::cout << result;
  } else {
    imt::io::write_file(output, result);
  }
  return 0;
}

int run_tune(const std::string& model_dir, const std::string& dev_path, const EngineOptions& opts,
             const std::string& grid_k, const std::string& grid_lambda,
             const std::string& grid_temperature, const std::string& grid_tau,
             const std::string& objective) {
  require_model_dir(model_dir);
  const auto dev = load_test_set(dev_path);
  imt::TmStore tm;
  opts.load_tm(tm);
  const auto models = imt::ModelBundle::load(model_dir);
  auto base = opts.settings();
  base.engine = imt::EngineKind::knn;

  // Grid points in lexicographic (k, lambda, temperature, tau) order; only a
  // strictly better score replaces the incumbent, so ties keep the smallest.
  std::vector<imt::KnnConfig> grid;
  for (auto k : parse_size_list(grid_k)) {
    for (auto l : parse_double_list(grid_lambda)) {
      for (auto t : parse_double_list(grid_temperature)) {
        for (auto tau : parse_double_list(grid_tau)) {
          imt::KnnConfig c{k, l, t, tau};
          c.validate();
          grid.push_back(c);
        }
      }
    }
  }
  std::sort(grid.begin(), grid.end(), [](const imt::KnnConfig& a, const imt::KnnConfig& b) {
    return std::tie(a.k, a.lambda, a.temperature, a.tau) <
           std::tie(b.k, b.lambda, b.temperature, b.tau);
  });
  if (grid.empty()) throw imt::Error(imt::ErrorCode::invalid_argument, "empty grid");

  std::optional<imt::KnnConfig> best;
  double best_score = -1.0;
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& c : grid) {
    auto settings = base;
    settings.knn = c;
    imt::EnginePredictor predictor(imt::Engine(models, settings, &tm));
    double score;
    if (objective == "bleu") {
      std::vector<std::string> hyps;
      std::vector<std::string> refs;
      for (const auto& [src, ref] : dev) {
        hyps.push_back(predictor.engine().translate(src));
        refs.push_back(ref);
      }
      score = imt::corpus_bleu(hyps, refs);
    } else {
      score = imt::ngram_accuracy(predictor, dev, 1).value();
    }
    trials.push_back({{"knn", imt::to_json(c)}, {"score", score}});
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  std::cout << nlohmann::json{{"best", imt::to_json(*best)},
                              {"objective", objective},
                              {"score", best_score},
                              {"trials", trials}}
                   .dump(2)
            << "\n";
  return 0;
}

int run_serve(const std::string& model_dir, std::string data_dir, const std::string& host,
              int port) {
  require_model_dir(model_dir);
  if (data_dir.empty()) {
    const char* env = std::getenv("IMT_DATA_DIR");
    data_dir = env && *env ? env : "imt-data";
  }
  imt::Service service(data_dir, imt::ModelBundle::load(model_dir));
  httplib::Server server;
  imt::http::register_routes(server, service);
  std::cerr << "serving on " << host << ":" << port << " with data in " << data_dir << "\n";
  if (!server.listen(host, port)) {
    throw imt::Error(imt::ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
  }
  return 0;
}

int run_toy_data(const std::string& out, std::uint64_t seed) {
  fs::create_directories(out);
  auto write_pairs = [&](const std::string& name, const imt::toy::Pairs& pairs) {
    std::string content;
    for (const auto& [s, t] : pairs) content += s + "\t" + t + "\n";
    imt::io::write_file(fs::path(out) / name, content);
  };
  const auto shift = imt::toy::lexicon_shift_corpus(seed);
  write_pairs("shift.train.tsv", shift.train);
  write_pairs("shift.tm.tsv", shift.tm);
  write_pairs("shift.dev.tsv", shift.dev);
  write_pairs("shift.test.tsv", shift.test);
  const auto amb = imt::toy::ambiguous_corpus(seed + 4);
  write_pairs("ambiguous.train.tsv", amb.train);
  write_pairs("ambiguous.test.tsv", amb.test);
  write_pairs("walkthrough.tsv", imt::toy::walkthrough_corpus());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive machine-translation workbench"};
  app.require_subcommand(1);

  std::string parallel, mono, out = "model";
  std::size_t merges = 1000;
  auto* train = app.add_subcommand("train", "train vocabularies, lexicon model and LM");
  train->add_option("--parallel", parallel, "parallel corpus (TSV or JSONL)")->required();
  train->add_option("--mono", mono, "monolingual target corpus for the LM");
  train->add_option("--merges", merges, "BPE merge operations");
  train->add_option("--out", out, "output directory");

  std::string model_dir = "model", input, output;
  EngineOptions translate_opts;
  auto* translate = app.add_subcommand("translate", "translate one sentence per line");
  translate->add_option("--model", model_dir, "model directory");
  translate->add_option("--input", input, "input file")->required();
  translate->add_option("--output", output, "output file (default stdout)");
  translate_opts.add_to(translate);

  auto* eval = app.add_subcommand("eval", "evaluation harness");
  eval->require_subcommand(1);
  std::string hyp_path, ref_path;
  bool json = false;
  auto* bleu = eval->add_subcommand("bleu", "corpus BLEU of a hypothesis file");
  bleu->add_option("--hyp", hyp_path, "hypotheses, one per line")->required();
  bleu->add_option("--ref", ref_path, "references, one per line")->required();
  bleu->add_flag("--json", json, "JSON output");

  std::string test_path, orders = "1,2,3", policy = "accept_prefix";
  bool any_suggestion = false;
  std::uint64_t seed = 0;
  EngineOptions eval_opts;
  auto* ngram = eval->add_subcommand("ngram-acc", "N-gram accuracy under prefix replay");
  ngram->add_option("--model", model_dir, "model directory");
  ngram->add_option("--test", test_path, "test pairs (TSV or JSONL)")->required();
  ngram->add_option("--n", orders, "comma-separated N values");
  ngram->add_flag("--any-suggestion", any_suggestion, "count a hit in any displayed suggestion");
  ngram->add_option("--seed", seed, "LM sampling seed");
  ngram->add_flag("--json", json, "JSON output");
  eval_opts.add_to(ngram);

  auto* simulate = eval->add_subcommand("simulate", "simulated post-editing keystrokes");
  simulate->add_option("--model", model_dir, "model directory");
  simulate->add_option("--test", test_path, "test pairs (TSV or JSONL)")->required();
  simulate->add_option("--policy", policy, "accept_prefix or type_through")
      ->check(CLI::IsMember({"accept_prefix", "type_through"}));
  simulate->add_flag("--json", json, "JSON output");
  eval_opts.add_to(simulate);

  std::string dev_path, grid_k = "1,2,4,8", grid_lambda = "0.2,0.4,0.6,0.8",
                        grid_temperature = "1,5,10", grid_tau = "3,5,10,inf",
                        objective = "acc1";
  EngineOptions tune_opts;
  auto* tune = app.add_subcommand("tune-knn", "grid-search kNN settings on a dev set");
  tune->add_option("--model", model_dir, "model directory");
  tune->add_option("--dev", dev_path, "dev pairs (TSV or JSONL)")->required();
  tune->add_option("--grid-k", grid_k, "comma-separated k values");
  tune->add_option("--grid-lambda", grid_lambda, "comma-separated lambda values");
  tune->add_option("--grid-temperature", grid_temperature, "comma-separated temperatures");
  tune->add_option("--grid-tau", grid_tau, "comma-separated tau values (inf allowed)");
  tune->add_option("--objective", objective, "acc1 or bleu")->check(CLI::IsMember({"acc1", "bleu"}));
  tune_opts.add_to(tune);

  std::string data_dir, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--model", model_dir, "model directory");
  serve->add_option("--data-dir", data_dir, "data directory (default $IMT_DATA_DIR)");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");

  std::string toy_out = "data";
  std::uint64_t toy_seed = 7;
  auto* toy = app.add_subcommand("toy-data", "write the synthetic toy corpora");
  toy->add_option("--out", toy_out, "output directory");
  toy->add_option("--seed", toy_seed, "corpus seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(parallel, mono, merges, out);
    if (*translate) return run_translate(model_dir, input, output, translate_opts);
    if (*bleu) {
      require_file(hyp_path);
      require_file(ref_path);
      auto hyps = imt::io::read_lines(hyp_path);
      auto refs = imt::io::read_lines(ref_path);
      imt::EvalReport report;
      report.bleu = imt::corpus_bleu(hyps, refs);
      report.counts["sentences"] = hyps.size();
      emit(report, json);
      return 0;
    }
    if (*ngram || *simulate) {
      require_model_dir(model_dir);
      const auto test = load_test_set(test_path);
      imt::TmStore tm;
      eval_opts.load_tm(tm);
      imt::EnginePredictor predictor(
          imt::Engine(imt::ModelBundle::load(model_dir), eval_opts.settings(), &tm));
      predictor.set_seed(seed);
      imt::EvalReport report;
      report.counts["sentences"] = test.size();
      if (*ngram) {
        std::size_t failures = 0;
        for (auto n : parse_size_list(orders)) {
          const auto acc = imt::ngram_accuracy(predictor, test, n, any_suggestion);
          report.ngram_acc[n] = acc.value();
          report.counts["hits_" + std::to_string(n)] = acc.hits;
          report.counts["total_" + std::to_string(n)] = acc.total;
          failures += acc.failures;
          for (const auto& e : acc.errors) std::cerr << "engine failure: " << e << "\n";
        }
        report.counts["engine_failures"] = failures;
      } else {
        const auto ks = imt::simulate_post_edit(predictor, test, imt::edit_policy_from_string(policy));
        report.keystroke_savings = ks.savings();
        report.counts["keystrokes"] = ks.keystrokes();
        report.counts["reference_chars"] = ks.reference_chars;
        report.counts["tab_accepts"] = ks.accepts;
      }
      emit(report, json);
      return 0;
    }
    if (*tune) {
      return run_tune(model_dir, dev_path, tune_opts, grid_k, grid_lambda, grid_temperature,
                      grid_tau, objective);
    }
    if (*serve) return run_serve(model_dir, data_dir, host, port);
    if (*toy) return run_toy_data(toy_out, toy_seed);
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
