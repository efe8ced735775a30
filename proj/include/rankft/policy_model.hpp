#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/rng.hpp"

namespace rankft {

// What the trainer, sampler and evaluators need from a causal LM. A model
// conditions on the instruction record (instruction text plus input) and
// scores or generates the response.
class PolicyModel {
 public:
  virtual ~PolicyModel() = default;

  virtual std::string_view kind() const = 0;

  virtual Tokens tokenize(std::string_view text) const = 0;

  // log p(y_t | y_<t, prompt) for every response token; finite, <= 0, one
  // entry per token of `response` under tokenize().
  virtual std::vector<double> token_logprobs(const InstructionRecord& prompt,
                                             std::string_view response) const = 0;

  // grad += weight * d/dtheta sum_t log p(y_t | y_<t, prompt).
  virtual void accumulate_logprob_gradient(const InstructionRecord& prompt, std::string_view response,
                                           double weight, std::span<double> grad) const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  // Temperature 0 means greedy decoding.
  virtual std::string sample(const InstructionRecord& prompt, double temperature, Rng& rng) const = 0;

  virtual void save(const std::filesystem::path& path) const = 0;
  virtual std::unique_ptr<PolicyModel> clone() const = 0;
};

// Loads any checkpoint written by PolicyModel::save.
std::unique_ptr<PolicyModel> load_policy(const std::filesystem::path& path);

}  // namespace rankft
