#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "imt/engine.hpp"
#include "imt/tokenizer.hpp"
#include "imt/toy_corpus.hpp"

namespace imt::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("imt-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

// Vocabulary from explicit entries, no merges.
inline std::shared_ptr<const Vocabulary> make_vocab(const std::vector<std::string>& entries) {
  return std::make_shared<const Vocabulary>(entries);
}

inline const ModelBundle& shift_models() {
  static const ModelBundle models = ModelBundle::train(toy::lexicon_shift_corpus().train, {}, 1000);
  return models;
}

inline const ModelBundle& walkthrough_models() {
  static const ModelBundle models = ModelBundle::train(toy::walkthrough_corpus(), {}, 1000);
  return models;
}

inline std::string random_word(std::mt19937_64& rng, const std::string& alphabet,
                               std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + rng() % (max_len - min_len + 1);
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += alphabet[rng() % alphabet.size()];
  return w;
}

}  // namespace imt::testing
