#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/errors.hpp"
#include "rankft/json_io.hpp"

namespace rankft {

enum class BackendKind { teacher, judge };

struct RetryPolicy {
  int max_retries = 3;
  // Delay before retry i; the last entry repeats.
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500), std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(8000)};
};

struct BackendSpec {
  BackendKind kind = BackendKind::teacher;
  std::string endpoint_id;
  std::string model;
  double temperature = 1.0;
  int max_concurrent_requests = 4;
  RetryPolicy retry;
  int max_tokens = 512;
  // USD per 1K tokens, for cost accounting only.
  double prompt_price_per_1k = 0.0;
  double completion_price_per_1k = 0.0;

  // Judge defaults to temperature 0, teacher to 1.
  static BackendSpec teacher(std::string endpoint_id, std::string model);
  static BackendSpec judge(std::string endpoint_id, std::string model);
};

struct CompletionRequest {
  std::string prompt;
  int n = 1;
  double temperature = 1.0;
  bool want_logprobs = false;
  int max_tokens = 512;
  // Distinguishes deliberate re-queries of the same prompt.
  int attempt = 0;
};

struct Choice {
  std::string text;
  std::vector<double> token_logprobs;
  // Overrides the sum of token_logprobs when the backend reports it directly.
  std::optional<double> logprob_sum;

  bool operator==(const Choice&) const = default;
};

struct Completion {
  std::vector<Choice> choices;
  int prompt_tokens = 0;
  int completion_tokens = 0;

  bool operator==(const Completion&) const = default;
};

// Raised by backends for transport failures; `retryable` covers rate limits
// and 5xx-style errors. `retry_after` is honoured when the server sends it.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool retryable,
                 std::optional<std::chrono::milliseconds> retry_after = std::nullopt)
      : Error(what), retryable_(retryable), retry_after_(retry_after) {}
  bool retryable() const noexcept { return retryable_; }
  std::optional<std::chrono::milliseconds> retry_after() const noexcept { return retry_after_; }

 private:
  bool retryable_;
  std::optional<std::chrono::milliseconds> retry_after_;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

// A raw model endpoint. Implementations must be safe to call concurrently.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string id() const = 0;
  virtual bool supports_logprobs() const = 0;
  virtual Completion complete(const CompletionRequest& request, const std::string& model) = 0;
};

struct CacheKey {
  std::string backend_id;
  std::string model;
  std::string prompt_hash;
  std::string params_hash;

  // File-name-safe digest of all four fields.
  std::string digest() const;
  bool operator==(const CacheKey&) const = default;
};

CacheKey make_cache_key(const std::string& backend_id, const std::string& model, const CompletionRequest& request);

// One JSON file per key: {"key": ..., "request": ..., "reply": ...}.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<Completion> get(const CacheKey& key) const;
  void put(const CacheKey& key, const CompletionRequest& request, const Completion& reply);
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const CacheKey& key) const;
  std::filesystem::path dir_;
};

struct CostEntry {
  std::int64_t calls = 0;
  std::int64_t cache_hits = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double cost_usd = 0.0;

  bool operator==(const CostEntry&) const = default;
};

// Per-stage aggregation of live-call usage.
class CostLedger {
 public:
  void record_call(const std::string& stage, const BackendSpec& spec, const Completion& reply);
  void record_hit(const std::string& stage);
  std::map<std::string, CostEntry> entries() const;
  CostEntry stage(const std::string& stage) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, CostEntry> entries_;
};

// Blocking facade over a backend: caching with per-key request coalescing,
// bounded concurrency, retries with backoff, and cost accounting.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<LlmBackend> backend, BackendSpec spec, std::shared_ptr<ResponseCache> cache = nullptr,
            std::shared_ptr<CostLedger> ledger = nullptr);

  Completion request(const CompletionRequest& request);

  const BackendSpec& spec() const noexcept { return spec_; }
  LlmBackend& backend() noexcept { return *backend_; }
  void set_stage(std::string stage);
  std::int64_t live_calls() const noexcept { return live_calls_.load(); }
  // Replaces the sleep used between retries (tests use a no-op).
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

 private:
  Completion call_with_retries(const CompletionRequest& request);

  std::shared_ptr<LlmBackend> backend_;
  BackendSpec spec_;
  std::shared_ptr<ResponseCache> cache_;
  std::shared_ptr<CostLedger> ledger_;
  std::counting_semaphore<1024> slots_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<Completion>> inflight_;
  std::string stage_ = "default";
  std::atomic<std::int64_t> live_calls_{0};
  std::function<void(std::chrono::milliseconds)> sleeper_;
};

// Alpaca-style generation prompt used for the teacher.
std::string teacher_prompt(const InstructionRecord& instruction);

// Queries the teacher for `n` responses with per-token log-probabilities.
// Lengths use `tokenizer` when it is local, otherwise the teacher's own token
// count. Throws CapabilityError when the backend cannot return log-probs.
std::vector<CandidateResponse> fetch_teacher_responses(const InstructionRecord& instruction, int n,
                                                       LlmClient& client, const Tokenizer& tokenizer = Tokenizer{});

void to_json(Json& j, const Completion& c);
void from_json(const Json& j, Completion& c);

}  // namespace rankft
