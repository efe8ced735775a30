#include "rankft/losses.hpp"

#include <cmath>
#include <numeric>

#include "rankft/errors.hpp"

namespace rankft {

void RankHyper::validate() const {
  if (!(margin > 0.0)) throw ValidationError("margin", "must be > 0");
  if (!(lambda >= 0.0)) throw ValidationError("lambda", "must be >= 0");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate", "must be > 0");
  if (epochs < 0) throw ValidationError("epochs", "must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size", "must be >= 1");
  if (warmup_steps < 0) throw ValidationError("warmup_steps", "must be >= 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay", "must be >= 0");
}

double normalized_logprob(const PolicyModel& model, const InstructionRecord& prompt, std::string_view response) {
  const auto lps = model.token_logprobs(prompt, response);
  if (lps.empty()) throw DomainError("normalized_logprob: empty response");
  return std::accumulate(lps.begin(), lps.end(), 0.0) / static_cast<double>(lps.size());
}

double mean_nll(const PolicyModel& model, const InstructionRecord& prompt, std::string_view response) {
  return -normalized_logprob(model, prompt, response);
}

double pair_rank_loss(double v_j, double v_k, int j, int k, double margin) {
  if (j >= k) throw DomainError("pair_rank_loss requires j < k");
  return std::max(0.0, v_k - v_j + margin * static_cast<double>(k - j));
}

double rank_loss(std::span<const double> vs, double margin) {
  double total = 0.0;
  const int n = static_cast<int>(vs.size());
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) total += pair_rank_loss(vs[j], vs[k], j, k, margin);
  }
  return total;
}

std::vector<double> rank_loss_gradient(std::span<const double> vs, double margin) {
  std::vector<double> g(vs.size(), 0.0);
  const int n = static_cast<int>(vs.size());
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) {
      if (vs[k] - vs[j] + margin * static_cast<double>(k - j) > 0.0) {
        g[k] += 1.0;
        g[j] -= 1.0;
      }
    }
  }
  return g;
}

namespace {

void check_inputs(const RankedSet& ranked, std::string_view original, const RankHyper& hyper) {
  if (ranked.candidates.empty()) throw DomainError("combined_loss: ranked set is empty");
  if (hyper.lambda > 0.0 && whitespace_tokens(original).empty()) {
    throw DomainError("combined_loss: original response is empty");
  }
}

struct Normalized {
  double value;
  double length;
};

Normalized score(const PolicyModel& model, const InstructionRecord& prompt, std::string_view response) {
  const auto lps = model.token_logprobs(prompt, response);
  if (lps.empty()) throw DomainError("normalized_logprob: empty response");
  const double len = static_cast<double>(lps.size());
  return {std::accumulate(lps.begin(), lps.end(), 0.0) / len, len};
}

}  // namespace

double combined_loss(const PolicyModel& model, const InstructionRecord& prompt, const RankedSet& ranked,
                     std::string_view original_response, const RankHyper& hyper) {
  check_inputs(ranked, original_response, hyper);
  std::vector<double> vs;
  vs.reserve(ranked.candidates.size());
  for (const auto& c : ranked.candidates) vs.push_back(normalized_logprob(model, prompt, c.text));
  double loss = rank_loss(vs, hyper.margin);
  if (hyper.lambda > 0.0) loss += hyper.lambda * mean_nll(model, prompt, original_response);
  return loss;
}

double combined_loss_with_gradient(const PolicyModel& model, const InstructionRecord& prompt,
                                   const RankedSet& ranked, std::string_view original_response,
                                   const RankHyper& hyper, double scale, std::span<double> grad) {
  check_inputs(ranked, original_response, hyper);
  std::vector<Normalized> scored;
  std::vector<double> vs;
  for (const auto& c : ranked.candidates) {
    scored.push_back(score(model, prompt, c.text));
    vs.push_back(scored.back().value);
  }
  double loss = rank_loss(vs, hyper.margin);
  const auto dv = rank_loss_gradient(vs, hyper.margin);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (dv[i] != 0.0) {
      model.accumulate_logprob_gradient(prompt, ranked.candidates[i].text, scale * dv[i] / scored[i].length, grad);
    }
  }
  if (hyper.lambda > 0.0) {
    loss += hyper.lambda * mean_nll_with_gradient(model, prompt, original_response, scale * hyper.lambda, grad);
  }
  return loss;
}

double mean_nll_with_gradient(const PolicyModel& model, const InstructionRecord& prompt,
                              std::string_view response, double scale, std::span<double> grad) {
  const auto s = score(model, prompt, response);
  model.accumulate_logprob_gradient(prompt, response, -scale / s.length, grad);
  return -s.value;
}

}  // namespace rankft
