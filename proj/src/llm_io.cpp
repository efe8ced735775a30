#include "rankft/llm_io.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include "rankft/hashing.hpp"

namespace rankft {

BackendSpec BackendSpec::teacher(std::string endpoint_id, std::string model) {
  BackendSpec s;
  s.kind = BackendKind::teacher;
  s.endpoint_id = std::move(endpoint_id);
  s.model = std::move(model);
  s.temperature = 1.0;
  return s;
}

BackendSpec BackendSpec::judge(std::string endpoint_id, std::string model) {
  BackendSpec s;
  s.kind = BackendKind::judge;
  s.endpoint_id = std::move(endpoint_id);
  s.model = std::move(model);
  s.temperature = 0.0;
  return s;
}

// ---- JSON ----

void to_json(Json& j, const Completion& c) {
  Json choices = Json::array();
  for (const auto& ch : c.choices) {
    Json x{{"text", ch.text}, {"token_logprobs", ch.token_logprobs}};
    if (ch.logprob_sum) x["logprob_sum"] = *ch.logprob_sum;
    choices.push_back(std::move(x));
  }
  j = Json{{"choices", choices}, {"prompt_tokens", c.prompt_tokens}, {"completion_tokens", c.completion_tokens}};
}

void from_json(const Json& j, Completion& c) {
  c.choices.clear();
  for (const auto& x : j.at("choices")) {
    Choice ch;
    ch.text = x.at("text").get<std::string>();
    ch.token_logprobs = x.value("token_logprobs", std::vector<double>{});
    if (x.contains("logprob_sum") && !x["logprob_sum"].is_null()) ch.logprob_sum = x["logprob_sum"].get<double>();
    c.choices.push_back(std::move(ch));
  }
  c.prompt_tokens = j.value("prompt_tokens", 0);
  c.completion_tokens = j.value("completion_tokens", 0);
}

namespace {

Json request_json(const CompletionRequest& r) {
  return Json{{"prompt", r.prompt},
              {"n", r.n},
              {"temperature", r.temperature},
              {"want_logprobs", r.want_logprobs},
              {"max_tokens", r.max_tokens},
              {"attempt", r.attempt}};
}

}  // namespace

// ---- cache ----

std::string CacheKey::digest() const {
  return sha256_hex(backend_id + "\n" + model + "\n" + prompt_hash + "\n" + params_hash);
}

CacheKey make_cache_key(const std::string& backend_id, const std::string& model, const CompletionRequest& request) {
  Json params = request_json(request);
  params.erase("prompt");
  return {backend_id, model, sha256_hex(request.prompt), sha256_hex(params.dump())};
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const CacheKey& key) const { return dir_ / (key.digest() + ".json"); }

std::optional<Completion> ResponseCache::get(const CacheKey& key) const {
  const auto path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  const auto j = Json::parse(read_file(path));
  const auto& k = j.at("key");
  if (k.at("backend_id") != key.backend_id || k.at("model") != key.model || k.at("prompt_hash") != key.prompt_hash ||
      k.at("params_hash") != key.params_hash) {
    return std::nullopt;
  }
  return j.at("reply").get<Completion>();
}

void ResponseCache::put(const CacheKey& key, const CompletionRequest& request, const Completion& reply) {
  const Json j{{"key",
                {{"backend_id", key.backend_id},
                 {"model", key.model},
                 {"prompt_hash", key.prompt_hash},
                 {"params_hash", key.params_hash}}},
               {"request", request_json(request)},
               {"reply", reply}};
  write_file_atomic(path_for(key), j.dump(2) + "\n");
}

// ---- costs ----

void CostLedger::record_call(const std::string& stage, const BackendSpec& spec, const Completion& reply) {
  std::lock_guard lock(mu_);
  auto& e = entries_[stage];
  ++e.calls;
  e.prompt_tokens += reply.prompt_tokens;
  e.completion_tokens += reply.completion_tokens;
  e.cost_usd += reply.prompt_tokens / 1000.0 * spec.prompt_price_per_1k +
                reply.completion_tokens / 1000.0 * spec.completion_price_per_1k;
}

void CostLedger::record_hit(const std::string& stage) {
  std::lock_guard lock(mu_);
  ++entries_[stage].cache_hits;
}

std::map<std::string, CostEntry> CostLedger::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

CostEntry CostLedger::stage(const std::string& stage) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(stage);
  return it == entries_.end() ? CostEntry{} : it->second;
}

// ---- client ----

LlmClient::LlmClient(std::shared_ptr<LlmBackend> backend, BackendSpec spec, std::shared_ptr<ResponseCache> cache,
                     std::shared_ptr<CostLedger> ledger)
    : backend_(std::move(backend)),
      spec_(std::move(spec)),
      cache_(std::move(cache)),
      ledger_(std::move(ledger)),
      slots_(std::clamp(spec_.max_concurrent_requests, 1, 1024)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (!backend_) throw ValidationError("backend", "must not be null");
}

void LlmClient::set_stage(std::string stage) {
  std::lock_guard lock(mu_);
  stage_ = std::move(stage);
}

Completion LlmClient::request(const CompletionRequest& request) {
  const CacheKey key = make_cache_key(backend_->id(), spec_.model, request);
  const std::string digest = key.digest();
  std::promise<Completion> promise;
  std::string stage;
  {
    std::unique_lock lock(mu_);
    stage = stage_;
    if (const auto it = inflight_.find(digest); it != inflight_.end()) {
      auto fut = it->second;
      lock.unlock();
      if (ledger_) ledger_->record_hit(stage);
      return fut.get();
    }
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        lock.unlock();
        if (ledger_) ledger_->record_hit(stage);
        return *hit;
      }
    }
    inflight_.emplace(digest, promise.get_future().share());
  }

  try {
    Completion reply = call_with_retries(request);
    if (ledger_) ledger_->record_call(stage, spec_, reply);
    std::lock_guard lock(mu_);
    if (cache_) cache_->put(key, request, reply);
    promise.set_value(reply);
    inflight_.erase(digest);
    return reply;
  } catch (...) {
    std::lock_guard lock(mu_);
    promise.set_exception(std::current_exception());
    inflight_.erase(digest);
    throw;
  }
}

Completion LlmClient::call_with_retries(const CompletionRequest& request) {
  for (int attempt = 0;; ++attempt) {
    slots_.acquire();
    try {
      ++live_calls_;
      Completion reply = backend_->complete(request, spec_.model);
      slots_.release();
      return reply;
    } catch (const TransportError& e) {
      slots_.release();
      if (!e.retryable() || attempt >= spec_.retry.max_retries) throw;
      std::chrono::milliseconds delay{0};
      if (e.retry_after()) {
        delay = *e.retry_after();
      } else if (!spec_.retry.backoff.empty()) {
        delay = spec_.retry.backoff[std::min<std::size_t>(static_cast<std::size_t>(attempt),
                                                          spec_.retry.backoff.size() - 1)];
      }
      sleeper_(delay);
    } catch (...) {
      slots_.release();
      throw;
    }
  }
}

// ---- teacher ----

std::string teacher_prompt(const InstructionRecord& r) {
  if (r.input.empty()) {
    return "Below is an instruction that describes a task. Write a response that appropriately completes the "
           "request.\n\n### Instruction:\n" +
           r.instruction + "\n\n### Response:\n";
  }
  return "Below is an instruction that describes a task, paired with an input that provides further context. "
         "Write a response that appropriately completes the request.\n\n### Instruction:\n" +
         r.instruction + "\n\n### Input:\n" + r.input + "\n\n### Response:\n";
}

std::vector<CandidateResponse> fetch_teacher_responses(const InstructionRecord& instruction, int n,
                                                       LlmClient& client, const Tokenizer& tokenizer) {
  if (n < 0) throw DomainError("fetch_teacher_responses: n must be >= 0");
  if (n == 0) return {};
  if (client.spec().kind != BackendKind::teacher) throw CapabilityError("backend is not configured as a teacher");
  if (!client.backend().supports_logprobs()) {
    throw CapabilityError("teacher backend '" + client.backend().id() + "' does not return log-probabilities");
  }
  CompletionRequest req;
  req.prompt = teacher_prompt(instruction);
  req.n = n;
  req.temperature = client.spec().temperature;
  req.want_logprobs = true;
  req.max_tokens = client.spec().max_tokens;
  const Completion reply = client.request(req);
  if (reply.choices.size() != static_cast<std::size_t>(n)) {
    throw TransportError("teacher returned " + std::to_string(reply.choices.size()) + " choices, expected " +
                             std::to_string(n),
                         false);
  }
  std::vector<CandidateResponse> out;
  for (const auto& ch : reply.choices) {
    if (!ch.logprob_sum && ch.token_logprobs.empty()) {
      throw CapabilityError("teacher reply is missing log-probabilities");
    }
    CandidateResponse c;
    c.text = ch.text;
    c.source = ResponseSource::teacher;
    c.temperature = req.temperature;
    c.teacher_logprob_sum =
        ch.logprob_sum ? *ch.logprob_sum : std::accumulate(ch.token_logprobs.begin(), ch.token_logprobs.end(), 0.0);
    c.length = static_cast<int>(tokenizer.is_local() ? tokenizer.count(c.text) : ch.token_logprobs.size());
    validate(c, tokenizer);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace rankft
