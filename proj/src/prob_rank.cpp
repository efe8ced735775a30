#include "rankft/prob_rank.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rankft/errors.hpp"

namespace rankft {

double length_penalized_score(double logprob_sum, int length, double beta) {
  if (length < 1) throw DomainError("length_penalized_score: length must be >= 1");
  if (!(beta > 0.0)) throw DomainError("length_penalized_score: beta must be > 0");
  if (!(logprob_sum <= 0.0)) throw DomainError("length_penalized_score: log-probability must be <= 0");
  if (length == 1) return logprob_sum;
  return logprob_sum / std::pow(static_cast<double>(length), beta);
}

RankedSet rank_by_score(const std::string& instruction_id, const std::vector<CandidateResponse>& candidates,
                        double beta) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!c.teacher_logprob_sum) {
      throw ValidationError("candidates[" + std::to_string(i) + "].teacher_logprob_sum", "missing");
    }
    scores.push_back(length_penalized_score(*c.teacher_logprob_sum, c.length, beta));
  }
  return make_ranked_set(instruction_id, candidates, scores, RankingSource::probabilistic);
}

double heldout_token_nll(const PolicyModel& model, std::span<const InstructionRecord> heldout) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& r : heldout) {
    for (double lp : model.token_logprobs(r, r.original_response)) {
      total -= lp;
      ++tokens;
    }
  }
  if (tokens == 0) throw ValidationError("heldout", "no held-out tokens");
  return total / static_cast<double>(tokens);
}

BetaSweepResult select_beta(std::span<const CandidateSet> teacher_sets, std::span<const InstructionRecord> heldout,
                            std::span<const double> betas, const BetaTrainFn& train) {
  if (betas.empty()) throw ValidationError("betas", "must be non-empty");
  std::set<std::string> train_ids;
  for (const auto& s : teacher_sets) train_ids.insert(s.instruction_id);
  for (const auto& r : heldout) {
    if (train_ids.contains(r.id)) {
      throw ValidationError("heldout", "instruction '" + r.id + "' also appears in the training data");
    }
  }

  BetaSweepResult result;
  for (double beta : betas) {
    std::unique_ptr<PolicyModel> model;
    try {
      std::vector<RankedSet> ranked;
      ranked.reserve(teacher_sets.size());
      for (const auto& s : teacher_sets) ranked.push_back(rank_by_score(s.instruction_id, s.candidates, beta));
      model = train(ranked, beta);
      if (!model) throw Error("trainer returned no model");
    } catch (const std::exception& e) {
      throw SweepError(beta, e.what());
    }
    result.betas.push_back(beta);
    result.mean_nll.push_back(heldout_token_nll(*model, heldout));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.betas.size(); ++i) {
    const double a = result.mean_nll[i];
    const double b = result.mean_nll[best];
    if (a < b || (a == b && result.betas[i] < result.betas[best])) best = i;
  }
  result.best_beta = result.betas[best];
  return result;
}

}  // namespace rankft
