#include "rankft/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "rankft/errors.hpp"

namespace rankft {

std::vector<RankedExample> join_ranked(std::span<const InstructionRecord> instructions,
                                       std::span<const RankedSet> ranked) {
  std::unordered_map<std::string, const InstructionRecord*> by_id;
  for (const auto& r : instructions) by_id.emplace(r.id, &r);
  std::vector<RankedExample> out;
  out.reserve(ranked.size());
  for (const auto& set : ranked) {
    const auto it = by_id.find(set.instruction_id);
    if (it == by_id.end()) {
      throw ValidationError("instruction_id", "ranked set refers to unknown instruction '" + set.instruction_id + "'");
    }
    out.push_back({*it->second, set});
  }
  return out;
}

AdamW::AdamW(std::size_t size, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= learning_rate * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * params[i]);
  }
}

double warmup_learning_rate(double base, int warmup, std::int64_t step) {
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  return base;
}

double pairwise_agreement(const PolicyModel& model, std::span<const RankedExample> data) {
  std::size_t agree = 0;
  std::size_t pairs = 0;
  for (const auto& ex : data) {
    std::vector<double> vs;
    for (const auto& c : ex.ranked.candidates) vs.push_back(normalized_logprob(model, ex.instruction, c.text));
    for (std::size_t j = 0; j < vs.size(); ++j) {
      for (std::size_t k = j + 1; k < vs.size(); ++k) {
        ++pairs;
        if (vs[j] > vs[k]) ++agree;
      }
    }
  }
  return pairs ? static_cast<double>(agree) / static_cast<double>(pairs) : 0.0;
}

namespace {

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

// Shared epoch/batch loop. `batch_loss` adds (1/B)-scaled gradients into
// grad and returns the summed (unscaled) loss of the examples in the batch.
template <typename Example, typename BatchLoss>
void run_epochs(PolicyModel& model, std::span<const Example> data, const RankHyper& hyper, TrainReport& report,
                BatchLoss&& batch_loss) {
  auto params = model.parameters();
  AdamW opt(params.size(), hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps, hyper.weight_decay);
  Rng rng(hyper.seed);
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(data.size());
  const std::size_t batch = static_cast<std::size_t>(hyper.batch_size);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) loss += batch_loss(data[order[i]], scale, grad);
      loss *= scale;
      if (!std::isfinite(loss) || !all_finite(grad)) {
        throw TrainingError(report.steps, "non-finite loss or gradient");
      }
      opt.step(params, grad, warmup_learning_rate(hyper.learning_rate, hyper.warmup_steps, report.steps));
      report.step_losses.push_back(loss);
      ++report.steps;
    }
  }
}

}  // namespace

TrainReport train_stage(PolicyModel& model, std::span<const RankedExample> data, const RankHyper& hyper,
                        std::span<const RankedExample> probe) {
  hyper.validate();
  if (data.empty()) throw ValidationError("dataset", "ranking stage needs at least one example");
  if (probe.empty()) probe = data;
  TrainReport report;
  report.agreement_before = pairwise_agreement(model, probe);
  run_epochs(model, data, hyper, report, [&](const RankedExample& ex, double scale, std::span<double> grad) {
    return combined_loss_with_gradient(model, ex.instruction, ex.ranked, ex.instruction.original_response, hyper,
                                       scale, grad);
  });
  report.agreement_after = pairwise_agreement(model, probe);
  return report;
}

TrainReport mle_finetune(PolicyModel& model, std::span<const InstructionRecord> data, const RankHyper& hyper) {
  hyper.validate();
  std::vector<InstructionRecord> kept;
  TrainReport report;
  for (const auto& r : data) {
    if (model.tokenize(r.original_response).empty()) {
      spdlog::warn("mle_finetune: skipping '{}' (empty response)", r.id);
      ++report.skipped_examples;
      continue;
    }
    kept.push_back(r);
  }
  if (kept.empty()) throw ValidationError("dataset", "no non-empty responses to finetune on");
  run_epochs(model, std::span<const InstructionRecord>(kept), hyper, report,
             [&](const InstructionRecord& r, double scale, std::span<double> grad) {
               return mean_nll_with_gradient(model, r, r.original_response, scale, grad);
             });
  return report;
}

std::vector<InstructionRecord> flatten_responses(std::span<const InstructionRecord> instructions,
                                                 std::span<const RankedSet> ranked) {
  std::vector<InstructionRecord> out(instructions.begin(), instructions.end());
  const auto joined = join_ranked(instructions, ranked);
  for (const auto& ex : joined) {
    for (std::size_t k = 0; k < ex.ranked.candidates.size(); ++k) {
      InstructionRecord r = ex.instruction;
      r.id = ex.instruction.id + "#" + std::to_string(k);
      r.original_response = ex.ranked.candidates[k].text;
      out.push_back(std::move(r));
    }
  }
  return out;
}

GradientCheckResult gradient_check(const PolicyModel& model, const LossCase& loss_case, double h) {
  auto work = model.clone();
  GradientCheckResult result;
  RankHyper hyper = loss_case.hyper;

  // Move every active or inactive hinge at least this far from its kink.
  constexpr double kKinkClearance = 1e-3;
  std::vector<double> vs;
  for (const auto& c : loss_case.ranked.candidates) vs.push_back(normalized_logprob(*work, loss_case.prompt, c.text));
  for (int attempt = 0; attempt < 200; ++attempt) {
    double closest = INFINITY;
    for (std::size_t j = 0; j < vs.size(); ++j) {
      for (std::size_t k = j + 1; k < vs.size(); ++k) {
        closest = std::min(closest, std::abs(vs[k] - vs[j] + hyper.margin * static_cast<double>(k - j)));
      }
    }
    if (closest >= kKinkClearance) break;
    hyper.margin += kKinkClearance;
  }
  result.margin_used = hyper.margin;

  auto params = work->parameters();
  result.parameters = params.size();
  result.analytic.assign(params.size(), 0.0);
  const auto& original = loss_case.prompt.original_response;
  combined_loss_with_gradient(*work, loss_case.prompt, loss_case.ranked, original, hyper, 1.0, result.analytic);

  result.numeric.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = combined_loss(*work, loss_case.prompt, loss_case.ranked, original, hyper);
    params[i] = saved - h;
    const double down = combined_loss(*work, loss_case.prompt, loss_case.ranked, original, hyper);
    params[i] = saved;
    result.numeric[i] = (up - down) / (2.0 * h);
    const double rel = std::abs(result.analytic[i] - result.numeric[i]) / (std::abs(result.numeric[i]) + kGradCheckEps);
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = i;
    }
  }
  return result;
}

}  // namespace rankft
