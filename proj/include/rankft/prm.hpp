#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/trainer.hpp"

namespace rankft {

// Pointwise quality scorer; higher is better.
class ResponseScorer {
 public:
  virtual ~ResponseScorer() = default;
  virtual double score(const InstructionRecord& prompt, std::string_view response) const = 0;
};

// Adapts any callable to ResponseScorer.
class FunctionScorer final : public ResponseScorer {
 public:
  using Fn = std::function<double(const InstructionRecord&, std::string_view)>;
  explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
  double score(const InstructionRecord& prompt, std::string_view response) const override {
    return fn_(prompt, response);
  }

 private:
  Fn fn_;
};

struct PrmConfig {
  int hidden_dim = 16;
  double init_std = 0.1;
  std::uint64_t seed = 0;
};

// Proxy ranking model. With bag-of-words vectors r (response) and q (prompt),
// both normalised by their token counts, the score is
//   u . tanh(W [r; q; r*q] + b) + c.
class PrmModel final : public ResponseScorer {
 public:
  static constexpr std::string_view kKind = "prm";

  PrmModel(std::vector<std::string> vocabulary, const PrmConfig& config);
  static PrmModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  double score(const InstructionRecord& prompt, std::string_view response) const override;
  // grad += weight * d score / d theta.
  void accumulate_score_gradient(const InstructionRecord& prompt, std::string_view response, double weight,
                                 std::span<double> grad) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  const PrmConfig& config() const noexcept { return config_; }

  // Id of the judge dataset the model was trained on.
  std::string provenance;

 private:
  PrmModel(std::vector<std::string> vocabulary, const PrmConfig& config, std::vector<double> params);
  void build();
  std::vector<double> features(const InstructionRecord& prompt, std::string_view response) const;
  double forward(const std::vector<double>& x, std::vector<double>* hidden) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  PrmConfig config_;
  std::size_t in_dim_ = 0;
  std::vector<double> params_;
};

struct PrmHyper {
  double margin = 0.1;
  double learning_rate = 0.01;
  int epochs = 60;
  double heldout_fraction = 0.2;
  std::uint64_t seed = 0;
  PrmConfig model;

  void validate() const;
};

struct PrmTrainReport {
  std::size_t train_pairs = 0;
  std::size_t heldout_pairs = 0;
  std::size_t skipped_sets = 0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  std::vector<double> epoch_losses;
  std::vector<std::string> heldout_ids;
};

class NoTrainablePairsError : public Error {
 public:
  using Error::Error;
};

// Trains a PrmModel with the pairwise margin hinge on judge-ranked sets,
// holding out a seeded fraction of instructions for accuracy. Pairs whose
// judge scores are equal carry no preference and are not used. Singleton sets
// are skipped. Throws NoTrainablePairsError when no pair remains.
PrmModel train_prm(std::span<const RankedExample> judge_data, const PrmHyper& hyper, PrmTrainReport* report = nullptr,
                   const std::string& provenance = "");

// Fraction of strictly ordered pairs (judge score j > score k) that the
// scorer orders the same way. Returns 0 when there are no such pairs.
double pairwise_accuracy(const ResponseScorer& scorer, std::span<const RankedExample> data);

// Candidates by descending score, ties in input order; ranking_source = prm.
RankedSet prm_rank(const ResponseScorer& scorer, const InstructionRecord& instruction,
                   const std::vector<CandidateResponse>& candidates);

}  // namespace rankft
