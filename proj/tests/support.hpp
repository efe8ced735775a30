#pragma once

#include <unistd.h>

#include <atomic>
#include <deque>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "rankft/sampler.hpp"
#include "rankft/tiny_lm.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rankft-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline oracle::ToyLm to_oracle(const rankft::TinyLm& lm) {
  oracle::ToyLm o;
  o.vocab = lm.vocabulary();
  o.d = lm.config().embed_dim;
  o.h = lm.config().hidden_dim;
  o.theta.assign(lm.parameters().begin(), lm.parameters().end());
  return o;
}

inline rankft::TinyLm small_lm(const std::vector<std::string>& words, std::uint64_t seed = 1, int d = 4, int h = 6,
                               double init_std = 0.3) {
  rankft::TinyLmConfig cfg;
  cfg.embed_dim = d;
  cfg.hidden_dim = h;
  cfg.max_new_tokens = 6;
  cfg.init_std = init_std;
  cfg.seed = seed;
  rankft::TinyLm lm(words, cfg);
  // Non-zero biases so every parameter block is exercised.
  rankft::Rng rng(seed + 99);
  for (auto& p : lm.parameters()) p += rng.normal(0.0, 0.05);
  return lm;
}

// Replays texts in order and records the temperature of every call.
class ScriptedGenerator final : public rankft::ResponseGenerator {
 public:
  explicit ScriptedGenerator(std::vector<std::string> texts) : texts_(texts.begin(), texts.end()) {}
  std::string generate(const rankft::InstructionRecord&, double temperature, rankft::Rng&) override {
    temperatures.push_back(temperature);
    if (texts_.empty()) throw std::runtime_error("script exhausted");
    auto t = texts_.front();
    texts_.pop_front();
    return t;
  }
  std::vector<double> temperatures;
  std::size_t remaining() const { return texts_.size(); }

 private:
  std::deque<std::string> texts_;
};

// Echoes the prompt input back; used for self-evaluation.
class EchoGenerator final : public rankft::ResponseGenerator {
 public:
  std::string generate(const rankft::InstructionRecord& p, double, rankft::Rng&) override { return p.input; }
};

inline std::vector<std::string> random_tokens(std::mt19937_64& gen, int max_len, int alphabet) {
  std::uniform_int_distribution<int> len(0, max_len), sym(0, alphabet - 1);
  std::vector<std::string> out(static_cast<std::size_t>(len(gen)));
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + sym(gen)));
  return out;
}

}  // namespace testing
