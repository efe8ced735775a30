#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/policy_model.hpp"

namespace rankft {

// Hyperparameters of one ranking stage. Defaults are the published ones for
// the first ranking stage off an instruction-tuned model.
struct RankHyper {
  double margin = 0.1;
  double lambda = 1.0;
  double learning_rate = 1e-5;
  int epochs = 1;
  int batch_size = 128;
  int warmup_steps = 2;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Mean per-token log-probability of `response`; <= 0.
double normalized_logprob(const PolicyModel& model, const InstructionRecord& prompt, std::string_view response);

// Negative mean per-token log-likelihood, -(1/|r|) log p(r | i).
double mean_nll(const PolicyModel& model, const InstructionRecord& prompt, std::string_view response);

// Hinge on one ranked pair j < k: max(0, v_k - v_j + m (k - j)).
double pair_rank_loss(double v_j, double v_k, int j, int k, double margin);

// Sum of pair_rank_loss over every j < k of `vs`, which is aligned with the
// ranked order (index 0 best).
double rank_loss(std::span<const double> vs, double margin);

// d rank_loss / d v_i. Hinges exactly at zero contribute nothing.
std::vector<double> rank_loss_gradient(std::span<const double> vs, double margin);

// rank_loss over the model's normalized log-probs of the ranked candidates
// plus lambda times mean_nll of the original response.
double combined_loss(const PolicyModel& model, const InstructionRecord& prompt, const RankedSet& ranked,
                     std::string_view original_response, const RankHyper& hyper);

// Same value as combined_loss; also adds `scale` * dL/dtheta into `grad`.
double combined_loss_with_gradient(const PolicyModel& model, const InstructionRecord& prompt,
                                   const RankedSet& ranked, std::string_view original_response,
                                   const RankHyper& hyper, double scale, std::span<double> grad);

// mean_nll and its gradient (scaled) in one pass.
double mean_nll_with_gradient(const PolicyModel& model, const InstructionRecord& prompt,
                              std::string_view response, double scale, std::span<double> grad);

}  // namespace rankft
