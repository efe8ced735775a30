#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/json_io.hpp"
#include "rankft/llm_io.hpp"

namespace rankft {

// Deterministic 64-bit seed from arbitrary text.
std::uint64_t text_seed(std::string_view text);

// Word pools shared by the synthetic teacher, judges and data generator.
// Response quality is the fraction of tokens drawn from `good`.
struct SyntheticWorld {
  std::vector<std::string> good;
  std::vector<std::string> filler;
  std::vector<std::string> topics;

  static const SyntheticWorld& standard();
  bool is_good(std::string_view token) const;
  // Fraction of whitespace tokens that are good words; 0 for empty text.
  double quality(std::string_view text) const;
};

// Instructions "Describe the <topic> ..." with good-word reference responses.
std::vector<InstructionRecord> make_synthetic_instructions(int count, std::uint64_t seed,
                                                           const SyntheticWorld& world = SyntheticWorld::standard());

// Counts calls; base for every mock.
class CountingBackend : public LlmBackend {
 public:
  std::int64_t calls() const noexcept { return calls_.load(); }

 protected:
  void count() { ++calls_; }

 private:
  std::atomic<std::int64_t> calls_{0};
};

// Replays fixture replies. Entries with a `contains` string answer every
// prompt containing it; the rest are served first-in first-out. Fixture file:
//   {"replies": [{"contains": "...", "completion": {...}}, {"completion": {...}}]}
class ScriptedBackend final : public CountingBackend {
 public:
  explicit ScriptedBackend(std::string id = "scripted", bool logprobs = true);
  static std::shared_ptr<ScriptedBackend> from_fixture(const std::filesystem::path& path, std::string id = "scripted");

  void push(Completion reply);
  void push_text(std::string text);
  void on_prompt_containing(std::string needle, Completion reply);

  std::string id() const override { return id_; }
  bool supports_logprobs() const override { return logprobs_; }
  Completion complete(const CompletionRequest& request, const std::string& model) override;

 private:
  std::string id_;
  bool logprobs_;
  std::mutex mu_;
  std::deque<Completion> queue_;
  std::vector<std::pair<std::string, Completion>> keyed_;
};

// Teacher whose responses mix good and filler words. A response's quality q
// sets both its good-word rate and its length (3 + 6q words), so better
// responses are longer and have lower total log-likelihood. Good tokens carry
// log-probability near -0.4, filler near -1.6.
class SyntheticTeacher final : public CountingBackend {
 public:
  explicit SyntheticTeacher(std::uint64_t seed = 0, SyntheticWorld world = SyntheticWorld::standard());
  std::string id() const override { return "synthetic-teacher"; }
  bool supports_logprobs() const override { return true; }
  Completion complete(const CompletionRequest& request, const std::string& model) override;

 private:
  std::uint64_t seed_;
  SyntheticWorld world_;
};

// Judge for the contextual-ranking prompt. It scores each response block by
// quality plus seeded noise, keeps the first of any identical responses and
// answers in the prompt's grammar. `garbage_first` makes the first attempt at
// every prompt unparseable; `always_garbage` makes every attempt unparseable.
class SyntheticJudge final : public CountingBackend {
 public:
  struct Options {
    std::uint64_t seed = 0;
    double noise = 0.0;
    bool garbage_first = false;
    bool always_garbage = false;
  };
  explicit SyntheticJudge(Options options, SyntheticWorld world = SyntheticWorld::standard());
  SyntheticJudge() : SyntheticJudge(Options{}) {}
  std::string id() const override { return "synthetic-judge"; }
  bool supports_logprobs() const override { return false; }
  Completion complete(const CompletionRequest& request, const std::string& model) override;

 private:
  Options options_;
  SyntheticWorld world_;
};

// Splits a filled contextual-ranking prompt into its response texts.
std::vector<std::string> extract_judge_responses(std::string_view prompt);

// Pairwise judges for the compare prompt.
class PairwiseMockJudge final : public CountingBackend {
 public:
  enum class Rule {
    longer,      // more whitespace tokens wins; equal lengths tie
    quality,     // higher synthetic quality wins; equal quality ties
    first_shown  // always picks answer 1
  };
  explicit PairwiseMockJudge(Rule rule, SyntheticWorld world = SyntheticWorld::standard());
  std::string id() const override;
  bool supports_logprobs() const override { return false; }
  Completion complete(const CompletionRequest& request, const std::string& model) override;

 private:
  Rule rule_;
  SyntheticWorld world_;
};

// Builds a backend from a JSON description:
//   {"type": "synthetic_teacher", "seed": 0}
//   {"type": "synthetic_judge", "seed": 0, "noise": 0.0}
//   {"type": "pairwise_longer" | "pairwise_quality" | "pairwise_first"}
//   {"type": "scripted", "fixture": "<file>"}
//   {"type": "openai", "base_url": "...", "api": "completions" | "chat", "api_key_env": "OPENAI_API_KEY"}
// A bare string is shorthand for {"type": <string>}.
std::shared_ptr<LlmBackend> make_backend(const Json& config);

}  // namespace rankft
