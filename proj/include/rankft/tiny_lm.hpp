#pragma once

#include <cstdint>
#include <unordered_map>

#include "rankft/policy_model.hpp"

namespace rankft {

struct TinyLmConfig {
  int embed_dim = 8;
  int hidden_dim = 16;
  // Responses are generated to exactly this many tokens; the vocabulary has
  // no end-of-sequence marker.
  int max_new_tokens = 12;
  double init_std = 0.1;
  std::uint64_t seed = 0;

  bool operator==(const TinyLmConfig&) const = default;
};

// Word-level causal LM small enough for exhaustive finite differences.
//
// The prompt is summarised as the mean of its context embeddings C[t]. Each
// response position sees the previous token embedding E[y_{t-1}] (or <bos>)
// concatenated with that summary:
//
//   a_t = tanh(W [E[y_{t-1}]; ctx] + b),   logits_t = U a_t + c
//
// Token 0 is <unk> and token 1 is <bos>; neither is ever generated.
class TinyLm final : public PolicyModel {
 public:
  static constexpr std::string_view kKind = "tiny_lm";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kBos = "<bos>";

  // `vocabulary` must not contain the two special tokens; they are prepended.
  TinyLm(std::vector<std::string> vocabulary, const TinyLmConfig& config);

  static TinyLm load(const std::filesystem::path& path);

  std::string_view kind() const override { return kKind; }
  Tokens tokenize(std::string_view text) const override;
  std::vector<double> token_logprobs(const InstructionRecord& prompt, std::string_view response) const override;
  void accumulate_logprob_gradient(const InstructionRecord& prompt, std::string_view response, double weight,
                                   std::span<double> grad) const override;
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  std::string sample(const InstructionRecord& prompt, double temperature, Rng& rng) const override;
  void save(const std::filesystem::path& path) const override;
  std::unique_ptr<PolicyModel> clone() const override { return std::make_unique<TinyLm>(*this); }

  const TinyLmConfig& config() const noexcept { return config_; }
  // Full vocabulary including the special tokens.
  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  int vocab_size() const noexcept { return static_cast<int>(vocab_.size()); }
  int token_id(std::string_view token) const;

  // Flat parameter layout, exposed for independent re-implementations in tests.
  struct Layout {
    std::size_t embed, context, w, b, u, c, total;
  };
  Layout layout() const noexcept { return layout_; }

 private:
  TinyLm(std::vector<std::string> full_vocabulary, const TinyLmConfig& config, std::vector<double> params);
  void build_index();
  std::vector<int> encode(std::string_view text) const;
  std::vector<int> encode_prompt(const InstructionRecord& prompt) const;
  void context_vector(const std::vector<int>& prompt_ids, std::span<double> ctx) const;
  // Hidden activation and log-softmax for one position.
  void forward_step(int prev, std::span<const double> ctx, std::span<double> hidden,
                    std::span<double> logprobs) const;

  TinyLmConfig config_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  Layout layout_{};
  std::vector<double> params_;
};

// Sorted unique whitespace tokens of every instruction, input and response.
std::vector<std::string> build_vocabulary(std::span<const InstructionRecord> records,
                                          std::span<const std::string> extra_texts = {});

}  // namespace rankft
