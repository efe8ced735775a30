#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "rankft/openai_backend.hpp"

#include <cstdlib>

#include "httplib.h"

namespace rankft {

OpenAiBackend::OpenAiBackend(Options options) : options_(std::move(options)) {
  const auto scheme = options_.base_url.find("://");
  if (scheme == std::string::npos) throw ValidationError("base_url", "missing scheme in '" + options_.base_url + "'");
  const auto slash = options_.base_url.find('/', scheme + 3);
  host_ = options_.base_url.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : options_.base_url.substr(slash);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string OpenAiBackend::id() const {
  return "openai:" + options_.base_url + (options_.api == Api::chat ? "#chat" : "#completions");
}

namespace {

std::optional<std::chrono::milliseconds> retry_after(const httplib::Result& res) {
  if (!res || !res->has_header("Retry-After")) return std::nullopt;
  try {
    return std::chrono::milliseconds(static_cast<long long>(std::stod(res->get_header_value("Retry-After")) * 1000));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

Completion OpenAiBackend::complete(const CompletionRequest& request, const std::string& model) {
  Json body{{"model", model}, {"n", request.n}, {"temperature", request.temperature}, {"max_tokens", request.max_tokens}};
  std::string path = path_prefix_;
  if (options_.api == Api::completions) {
    path += "/completions";
    body["prompt"] = request.prompt;
    if (request.want_logprobs) body["logprobs"] = 0;
  } else {
    path += "/chat/completions";
    body["messages"] = Json::array({{{"role", "user"}, {"content", request.prompt}}});
    if (request.want_logprobs) body["logprobs"] = true;
  }

  httplib::Client client(host_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + host_ + path + " failed: " + httplib::to_string(res.error()), true);
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + host_ + path, true, retry_after(res));
  }
  if (res->status != 200) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + host_ + path + ": " + res->body, false);
  }

  Completion out;
  try {
    const auto j = Json::parse(res->body);
    for (const auto& c : j.at("choices")) {
      Choice ch;
      if (options_.api == Api::completions) {
        ch.text = c.at("text").get<std::string>();
        if (c.contains("logprobs") && c["logprobs"].is_object()) {
          for (const auto& lp : c["logprobs"].at("token_logprobs")) {
            if (!lp.is_null()) ch.token_logprobs.push_back(lp.get<double>());
          }
        }
      } else {
        ch.text = c.at("message").at("content").get<std::string>();
        if (c.contains("logprobs") && c["logprobs"].is_object()) {
          for (const auto& t : c["logprobs"].at("content")) ch.token_logprobs.push_back(t.at("logprob").get<double>());
        }
      }
      out.choices.push_back(std::move(ch));
    }
    if (j.contains("usage")) {
      out.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      out.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
  } catch (const Json::exception& e) {
    throw TransportError(std::string("malformed response body: ") + e.what(), false);
  }
  return out;
}

}  // namespace rankft
