#include "rankft/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "rankft/rouge.hpp"

namespace rankft {

void DiversityPolicy::validate() const {
  if (n < 1) throw ValidationError("n", "must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("tau", "must lie in (0, 1]");
  if (max_trials < 1) throw ValidationError("max_trials", "must be >= 1");
  if (!(temperature_step >= 0.0)) throw ValidationError("temperature_step", "must be >= 0");
  if (!(temperature_start >= 0.0)) throw ValidationError("temperature_start", "must be >= 0");
}

namespace {

struct Draw {
  std::string text;
  Tokens tokens;
  double temperature;
  double similarity;
  int trial;
};

Draw generate_once(ResponseGenerator& model, const InstructionRecord& prompt, double temperature, Rng& rng,
                   const Tokenizer& tok) {
  std::string last_error = "empty response";
  for (int attempt = 0; attempt < kGenerationRetries; ++attempt) {
    try {
      std::string text = model.generate(prompt, temperature, rng);
      auto tokens = tok.tokenize(text);
      if (!tokens.empty()) return {std::move(text), std::move(tokens), temperature, 0.0, 0};
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw SamplingError("generation failed for '" + prompt.id + "' after " + std::to_string(kGenerationRetries) +
                      " attempts: " + last_error);
}

}  // namespace

std::vector<CandidateResponse> sample_diverse(ResponseGenerator& model, const InstructionRecord& prompt,
                                              const DiversityPolicy& policy, std::uint64_t seed,
                                              const Tokenizer& tokenizer, std::vector<SampleTrace>* trace) {
  policy.validate();
  Rng rng(seed);
  std::vector<Tokens> accepted_tokens;
  std::vector<CandidateResponse> out;
  out.reserve(static_cast<std::size_t>(policy.n));

  for (int slot = 0; slot < policy.n; ++slot) {
    std::vector<Draw> draws;
    std::optional<std::size_t> chosen;
    for (int trial = 0; trial < policy.max_trials; ++trial) {
      const double temperature = policy.temperature_start + policy.temperature_step * trial;
      Draw d = generate_once(model, prompt, temperature, rng, tokenizer);
      d.trial = trial;
      for (const auto& prev : accepted_tokens) d.similarity = std::max(d.similarity, rouge_l(d.tokens, prev));
      const bool ok = d.similarity < policy.tau;
      if (trace) trace->push_back({slot, trial, temperature, d.similarity, ok, false});
      draws.push_back(std::move(d));
      if (ok) {
        chosen = draws.size() - 1;
        break;
      }
    }
    bool fallback = false;
    if (!chosen) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < draws.size(); ++i) {
        if (draws[i].similarity <= draws[best].similarity) best = i;
      }
      chosen = best;
      fallback = true;
      if (trace) {
        trace->push_back({slot, draws[best].trial, draws[best].temperature, draws[best].similarity, true, true});
      }
    }
    Draw& pick = draws[*chosen];
    CandidateResponse c;
    c.text = pick.text;
    c.source = ResponseSource::student;
    c.temperature = pick.temperature;
    c.length = static_cast<int>(pick.tokens.size());
    c.resamples = pick.trial;
    c.fallback = fallback;
    out.push_back(std::move(c));
    accepted_tokens.push_back(std::move(pick.tokens));
  }
  return out;
}

}  // namespace rankft
