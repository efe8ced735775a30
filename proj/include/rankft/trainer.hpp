#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/errors.hpp"
#include "rankft/losses.hpp"
#include "rankft/policy_model.hpp"

namespace rankft {

// One training example for a ranking stage: the instruction (whose
// original_response feeds the regulariser) and its ranked candidates.
struct RankedExample {
  InstructionRecord instruction;
  RankedSet ranked;
};

// Joins ranked sets to their instructions by id. Throws ValidationError when
// a ranked set names an unknown instruction.
std::vector<RankedExample> join_ranked(std::span<const InstructionRecord> instructions,
                                       std::span<const RankedSet> ranked);

// Decoupled-weight-decay Adam.
class AdamW {
 public:
  AdamW(std::size_t size, double beta1, double beta2, double eps, double weight_decay);
  void step(std::span<double> params, std::span<const double> grad, double learning_rate);
  std::int64_t steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

// Linear warmup over `warmup` steps, constant afterwards.
double warmup_learning_rate(double base, int warmup, std::int64_t step);

// Fraction of ranked pairs j < k whose normalized log-probs satisfy v_j > v_k.
double pairwise_agreement(const PolicyModel& model, std::span<const RankedExample> data);

struct TrainReport {
  std::vector<double> step_losses;
  std::int64_t steps = 0;
  double agreement_before = 0.0;
  double agreement_after = 0.0;
  std::size_t skipped_examples = 0;
};

class TrainingError : public Error {
 public:
  TrainingError(std::int64_t batch, const std::string& what)
      : Error("batch " + std::to_string(batch) + ": " + what), batch_(batch) {}
  std::int64_t batch() const noexcept { return batch_; }

 private:
  std::int64_t batch_;
};

// Minimises the mean over each batch of combined_loss. Deterministic for a
// given seed. `probe` (defaults to the training data) is where pairwise
// agreement is measured before and after.
TrainReport train_stage(PolicyModel& model, std::span<const RankedExample> data, const RankHyper& hyper,
                        std::span<const RankedExample> probe = {});

// Supervised finetuning on (instruction -> original_response) with mean-token
// NLL, averaged over each batch. Examples with empty responses are skipped.
// Only the optimiser fields of `hyper` are used.
TrainReport mle_finetune(PolicyModel& model, std::span<const InstructionRecord> data, const RankHyper& hyper);

// Flattens every ranked candidate into its own instruction-response pair,
// appended after the original pairs.
std::vector<InstructionRecord> flatten_responses(std::span<const InstructionRecord> instructions,
                                                 std::span<const RankedSet> ranked);

// A combined_loss evaluation to verify numerically.
struct LossCase {
  InstructionRecord prompt;
  RankedSet ranked;
  RankHyper hyper;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  std::size_t parameters = 0;
  // Margin actually used after nudging hinge arguments off zero.
  double margin_used = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Central differences with step `h` over every parameter, compared as
// |analytic - numeric| / (|numeric| + kGradCheckEps).
inline constexpr double kGradCheckEps = 1e-6;
GradientCheckResult gradient_check(const PolicyModel& model, const LossCase& loss_case, double h = 1e-4);

}  // namespace rankft
