#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/errors.hpp"
#include "rankft/policy_model.hpp"

namespace rankft {

inline constexpr double kDefaultBeta = 1.3;

// Teacher quality score: logprob_sum / length^beta. Throws DomainError for
// length < 1, beta <= 0 or a positive log-probability.
double length_penalized_score(double logprob_sum, int length, double beta);

// Ranks teacher candidates by length_penalized_score, best first, keeping
// input order on ties. Throws ValidationError if a candidate has no teacher
// log-probability.
RankedSet rank_by_score(const std::string& instruction_id, const std::vector<CandidateResponse>& candidates,
                        double beta = kDefaultBeta);

struct BetaSweepResult {
  std::vector<double> betas;
  std::vector<double> mean_nll;
  double best_beta = 0.0;
};

class SweepError : public Error {
 public:
  SweepError(double beta, const std::string& what)
      : Error("beta " + std::to_string(beta) + ": " + what), beta_(beta) {}
  double beta() const noexcept { return beta_; }

 private:
  double beta_;
};

// Trains one model on data ranked with a given beta.
using BetaTrainFn =
    std::function<std::unique_ptr<PolicyModel>(const std::vector<RankedSet>& ranked, double beta)>;

// Token-level NLL averaged over every token of every held-out response.
double heldout_token_nll(const PolicyModel& model, std::span<const InstructionRecord> heldout);

// For each beta: rank every teacher candidate set, train via `train`, and
// measure held-out token NLL. best_beta is the argmin (ties -> smaller beta).
// Throws SweepError naming the beta whose training failed.
BetaSweepResult select_beta(std::span<const CandidateSet> teacher_sets, std::span<const InstructionRecord> heldout,
                            std::span<const double> betas, const BetaTrainFn& train);

}  // namespace rankft
