#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <cstdlib>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "rankft/errors.hpp"
#include "rankft/json_io.hpp"
#include "rankft/openai_backend.hpp"

using namespace rankft;

namespace {

// Local HTTP server on an ephemeral port, stopped on destruction.
class FakeServer {
 public:
  FakeServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

CompletionRequest request(bool logprobs) {
  CompletionRequest r;
  r.prompt = "hello";
  r.n = 2;
  r.temperature = 0.7;
  r.want_logprobs = logprobs;
  r.max_tokens = 16;
  return r;
}

}  // namespace

TEST_SUITE("openai_backend") {
  TEST_CASE("completions API parses text, log-probs and usage") {
    FakeServer fake;
    std::mutex mu;
    Json seen;
    std::string auth;
    fake.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      seen = Json::parse(req.body);
      auth = req.get_header_value("Authorization");
      res.set_content(R"({"choices":[{"text":"a b","logprobs":{"token_logprobs":[-0.5,-1.0]}},)"
                      R"({"text":"c","logprobs":{"token_logprobs":[null,-2.0]}}],)"
                      R"("usage":{"prompt_tokens":5,"completion_tokens":3}})",
                      "application/json");
    });
    ::setenv("RANKFT_TEST_KEY", "sk-test", 1);
    OpenAiBackend::Options opt;
    opt.base_url = fake.base_url();
    opt.api_key_env = "RANKFT_TEST_KEY";
    OpenAiBackend backend(opt);
    const auto out = backend.complete(request(true), "davinci");
    REQUIRE(out.choices.size() == 2);
    CHECK(out.choices[0].text == "a b");
    CHECK(out.choices[0].token_logprobs == std::vector<double>{-0.5, -1.0});
    CHECK(out.choices[1].token_logprobs == std::vector<double>{-2.0});
    CHECK(out.prompt_tokens == 5);
    CHECK(out.completion_tokens == 3);
    CHECK(auth == "Bearer sk-test");
    CHECK(seen["model"] == "davinci");
    CHECK(seen["prompt"] == "hello");
    CHECK(seen["n"] == 2);
    CHECK(seen["logprobs"] == 0);
    CHECK(seen["max_tokens"] == 16);
    ::unsetenv("RANKFT_TEST_KEY");
  }

  TEST_CASE("chat API reads message content") {
    FakeServer fake;
    Json seen;
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      seen = Json::parse(req.body);
      res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"rank: [0]"},)"
                      R"("logprobs":{"content":[{"token":"rank","logprob":-0.1}]}}]})",
                      "application/json");
    });
    OpenAiBackend::Options opt;
    opt.base_url = fake.base_url() + "/";
    opt.api = OpenAiBackend::Api::chat;
    opt.api_key_env = "RANKFT_UNSET_KEY_VAR";
    OpenAiBackend backend(opt);
    const auto out = backend.complete(request(false), "gpt-4");
    REQUIRE(out.choices.size() == 1);
    CHECK(out.choices[0].text == "rank: [0]");
    CHECK(out.choices[0].token_logprobs == std::vector<double>{-0.1});
    CHECK(seen["messages"][0]["content"] == "hello");
    CHECK_FALSE(seen.contains("logprobs"));
    CHECK(backend.id().find("#chat") != std::string::npos);
  }

  TEST_CASE("status codes map to retryable and fatal errors") {
    FakeServer fake;
    fake.server().Post("/v1/completions", [](const httplib::Request& req, httplib::Response& res) {
      const auto prompt = Json::parse(req.body)["prompt"].get<std::string>();
      if (prompt == "limit") {
        res.status = 429;
        res.set_header("Retry-After", "2");
      } else if (prompt == "down") {
        res.status = 503;
      } else if (prompt == "bad") {
        res.status = 400;
        res.set_content("bad request", "text/plain");
      } else {
        res.set_content("{not json", "application/json");
      }
    });
    OpenAiBackend::Options opt;
    opt.base_url = fake.base_url();
    OpenAiBackend backend(opt);
    auto call = [&](const std::string& prompt) -> TransportError {
      auto r = request(false);
      r.prompt = prompt;
      try {
        backend.complete(r, "m");
      } catch (const TransportError& e) {
        return e;
      }
      FAIL("expected TransportError");
      return TransportError("", false);
    };
    const auto limit = call("limit");
    CHECK(limit.retryable());
    REQUIRE(limit.retry_after());
    CHECK(limit.retry_after()->count() == 2000);
    const auto down = call("down");
    CHECK(down.retryable());
    CHECK_FALSE(down.retry_after());
    CHECK_FALSE(call("bad").retryable());
    CHECK_FALSE(call("garbage").retryable());
  }

  TEST_CASE("unreachable host is retryable") {
    int port = 0;
    {
      httplib::Server probe;
      port = probe.bind_to_any_port("127.0.0.1");
    }
    OpenAiBackend::Options opt;
    opt.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    opt.timeout = std::chrono::seconds(2);
    OpenAiBackend backend(opt);
    try {
      backend.complete(request(false), "m");
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      CHECK(e.retryable());
    }
  }

  TEST_CASE("base url needs a scheme") {
    OpenAiBackend::Options opt;
    opt.base_url = "localhost:8080";
    CHECK_THROWS_AS(OpenAiBackend{opt}, ValidationError);
  }
}
