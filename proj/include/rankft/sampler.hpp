#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/errors.hpp"
#include "rankft/policy_model.hpp"
#include "rankft/rng.hpp"

namespace rankft {

struct DiversityPolicy {
  int n = 4;
  double tau = 0.8;
  double temperature_start = 1.0;
  double temperature_step = 0.1;
  // Samples drawn per slot, the first one included.
  int max_trials = 3;

  void validate() const;
};

// Anything that can produce a response at a given temperature.
class ResponseGenerator {
 public:
  virtual ~ResponseGenerator() = default;
  virtual std::string generate(const InstructionRecord& prompt, double temperature, Rng& rng) = 0;
};

// Adapts a PolicyModel to ResponseGenerator.
class PolicyGenerator final : public ResponseGenerator {
 public:
  explicit PolicyGenerator(const PolicyModel& model) : model_(model) {}
  std::string generate(const InstructionRecord& prompt, double temperature, Rng& rng) override {
    return model_.sample(prompt, temperature, rng);
  }

 private:
  const PolicyModel& model_;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

// One draw made by sample_diverse, for auditing the schedule.
struct SampleTrace {
  int slot = 0;
  int trial = 0;
  double temperature = 0.0;
  // Highest ROUGE-L against the responses accepted so far (0 when none).
  double max_similarity = 0.0;
  bool accepted = false;
  bool fallback = false;
};

// Draws policy.n responses. A draw is accepted when its ROUGE-L against every
// previously accepted response is below tau; otherwise the slot's temperature
// rises by temperature_step and it resamples. After max_trials draws without
// success the least similar draw is kept (ties go to the later draw) and
// flagged as a fallback. Empty or failing generations are retried up to
// kGenerationRetries times per draw before SamplingError.
inline constexpr int kGenerationRetries = 3;
std::vector<CandidateResponse> sample_diverse(ResponseGenerator& model, const InstructionRecord& prompt,
                                              const DiversityPolicy& policy, std::uint64_t seed,
                                              const Tokenizer& tokenizer = Tokenizer{},
                                              std::vector<SampleTrace>* trace = nullptr);

}  // namespace rankft
