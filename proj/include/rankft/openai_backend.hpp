#pragma once

#include <chrono>
#include <string>

#include "rankft/llm_io.hpp"

namespace rankft {

// OpenAI-compatible HTTP endpoint. The completions API is used for teachers
// (it can return per-token log-probabilities), the chat API for judges. The
// key is read from the environment variable `api_key_env` at call time.
class OpenAiBackend final : public LlmBackend {
 public:
  enum class Api { completions, chat };
  struct Options {
    std::string base_url = "https://api.openai.com/v1";
    Api api = Api::completions;
    std::string api_key_env = "OPENAI_API_KEY";
    bool logprobs = true;
    std::chrono::seconds timeout{120};
  };

  explicit OpenAiBackend(Options options);

  std::string id() const override;
  bool supports_logprobs() const override { return options_.logprobs; }
  Completion complete(const CompletionRequest& request, const std::string& model) override;

 private:
  Options options_;
  std::string host_;  // scheme://host[:port]
  std::string path_prefix_;
};

}  // namespace rankft
