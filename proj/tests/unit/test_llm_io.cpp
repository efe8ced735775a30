#include <chrono>
#include <thread>

#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/llm_io.hpp"
#include "rankft/mock_backends.hpp"
#include "support.hpp"

using namespace rankft;
using namespace std::chrono_literals;

namespace {

// Fails `failures` times with the given error, then answers.
class FlakyBackend final : public CountingBackend {
 public:
  FlakyBackend(int failures, bool retryable, std::optional<std::chrono::milliseconds> retry_after = std::nullopt)
      : failures_(failures), retryable_(retryable), retry_after_(retry_after) {}
  std::string id() const override { return "flaky"; }
  bool supports_logprobs() const override { return true; }
  Completion complete(const CompletionRequest& req, const std::string&) override {
    count();
    if (failures_-- > 0) throw TransportError("boom", retryable_, retry_after_);
    return Completion{{Choice{"ok " + req.prompt, {-0.5, -0.25}, std::nullopt}}, 10, 2};
  }

 private:
  int failures_;
  bool retryable_;
  std::optional<std::chrono::milliseconds> retry_after_;
};

class SlowBackend final : public CountingBackend {
 public:
  std::string id() const override { return "slow"; }
  bool supports_logprobs() const override { return false; }
  Completion complete(const CompletionRequest& req, const std::string&) override {
    count();
    std::this_thread::sleep_for(100ms);
    return Completion{{Choice{req.prompt, {}, std::nullopt}}, 1, 1};
  }
};

CompletionRequest req(std::string prompt, int attempt = 0) {
  CompletionRequest r;
  r.prompt = std::move(prompt);
  r.attempt = attempt;
  return r;
}

}  // namespace

TEST_SUITE("llm_io") {
  TEST_CASE("cache keys separate every request field") {
    const auto base = make_cache_key("b", "m", req("p"));
    CHECK(base == make_cache_key("b", "m", req("p")));
    CHECK(base.digest() == make_cache_key("b", "m", req("p")).digest());
    CHECK_FALSE(base.digest() == make_cache_key("b", "m", req("p", 1)).digest());
    CHECK_FALSE(base.digest() == make_cache_key("b", "m2", req("p")).digest());
    CHECK_FALSE(base.digest() == make_cache_key("b2", "m", req("p")).digest());
    CHECK_FALSE(base.digest() == make_cache_key("b", "m", req("q")).digest());
    auto hot = req("p");
    hot.temperature = 0.5;
    CHECK_FALSE(base.digest() == make_cache_key("b", "m", hot).digest());
  }

  TEST_CASE("cache hits skip the backend and are counted") {
    testing::TempDir dir;
    auto cache = std::make_shared<ResponseCache>(dir.path());
    auto ledger = std::make_shared<CostLedger>();
    auto backend = std::make_shared<FlakyBackend>(0, true);
    auto spec = BackendSpec::teacher("flaky", "m");
    spec.prompt_price_per_1k = 1.0;
    spec.completion_price_per_1k = 2.0;
    LlmClient client(backend, spec, cache, ledger);
    client.set_stage("s1");
    const auto a = client.request(req("x"));
    const auto b = client.request(req("x"));
    CHECK(a == b);
    CHECK(backend->calls() == 1);
    const auto c = client.request(req("x", 1));
    CHECK(backend->calls() == 2);
    CHECK(c == a);

    // A fresh client over the same directory replays from disk.
    LlmClient again(std::make_shared<FlakyBackend>(0, true), spec, std::make_shared<ResponseCache>(dir.path()));
    CHECK(again.request(req("x")) == a);
    CHECK(again.live_calls() == 0);

    const auto e = ledger->stage("s1");
    CHECK(e.calls == 2);
    CHECK(e.cache_hits == 1);
    CHECK(e.prompt_tokens == 20);
    CHECK(e.completion_tokens == 4);
    CHECK(e.cost_usd == doctest::Approx(2 * (10 * 1.0 + 2 * 2.0) / 1000.0));
  }

  TEST_CASE("concurrent identical requests share one call") {
    auto backend = std::make_shared<SlowBackend>();
    LlmClient client(backend, BackendSpec::judge("slow", "m"));
    std::vector<std::thread> threads;
    std::vector<Completion> results(6);
    for (int i = 0; i < 6; ++i) {
      threads.emplace_back([&, i] { results[static_cast<std::size_t>(i)] = client.request(req("same")); });
    }
    for (auto& t : threads) t.join();
    CHECK(backend->calls() == 1);
    for (const auto& r : results) CHECK(r == results[0]);
  }

  TEST_CASE("retryable errors back off, others surface immediately") {
    std::vector<std::chrono::milliseconds> slept;
    auto flaky = std::make_shared<FlakyBackend>(2, true);
    LlmClient client(flaky, BackendSpec::teacher("flaky", "m"));
    client.set_sleeper([&](std::chrono::milliseconds d) { slept.push_back(d); });
    CHECK_NOTHROW(client.request(req("p")));
    CHECK(flaky->calls() == 3);
    CHECK(slept == std::vector<std::chrono::milliseconds>{500ms, 2000ms});

    slept.clear();
    auto limited = std::make_shared<FlakyBackend>(1, true, 1234ms);
    LlmClient c2(limited, BackendSpec::teacher("flaky", "m"));
    c2.set_sleeper([&](std::chrono::milliseconds d) { slept.push_back(d); });
    c2.request(req("p"));
    CHECK(slept == std::vector<std::chrono::milliseconds>{1234ms});

    auto hopeless = std::make_shared<FlakyBackend>(10, true);
    LlmClient c3(hopeless, BackendSpec::teacher("flaky", "m"));
    c3.set_sleeper([](std::chrono::milliseconds) {});
    CHECK_THROWS_AS(c3.request(req("p")), TransportError);
    CHECK(hopeless->calls() == 4);

    auto fatal = std::make_shared<FlakyBackend>(1, false);
    LlmClient c4(fatal, BackendSpec::teacher("flaky", "m"));
    c4.set_sleeper([](std::chrono::milliseconds) { FAIL("must not sleep"); });
    CHECK_THROWS_AS(c4.request(req("p")), TransportError);
    CHECK(fatal->calls() == 1);
  }

  TEST_CASE("teacher responses carry summed log-probabilities") {
    auto backend = std::make_shared<FlakyBackend>(0, true);
    LlmClient client(backend, BackendSpec::teacher("flaky", "m"));
    const auto out = fetch_teacher_responses({"i", "Do it.", "", ""}, 1, client);
    REQUIRE(out.size() == 1);
    CHECK(out[0].source == ResponseSource::teacher);
    REQUIRE(out[0].teacher_logprob_sum);
    CHECK(*out[0].teacher_logprob_sum == doctest::Approx(-0.75));
    CHECK(out[0].length == static_cast<int>(whitespace_tokens(out[0].text).size()));
    CHECK(fetch_teacher_responses({"i", "Do it.", "", ""}, 0, client).empty());
  }

  TEST_CASE("teacher capability checks") {
    LlmClient no_lp(std::make_shared<ScriptedBackend>("s", false), BackendSpec::teacher("s", "m"));
    CHECK_THROWS_AS(fetch_teacher_responses({"i", "Q", "", ""}, 2, no_lp), CapabilityError);
    LlmClient judge(std::make_shared<SyntheticTeacher>(), BackendSpec::judge("t", "m"));
    CHECK_THROWS_AS(fetch_teacher_responses({"i", "Q", "", ""}, 2, judge), CapabilityError);

    auto scripted = std::make_shared<ScriptedBackend>("s", true);
    scripted->push(Completion{{Choice{"bare", {}, std::nullopt}}, 0, 0});
    LlmClient c(scripted, BackendSpec::teacher("s", "m"));
    CHECK_THROWS_AS(fetch_teacher_responses({"i", "Q", "", ""}, 1, c), CapabilityError);
  }

  TEST_CASE("completion JSON round trip") {
    const Completion c{{Choice{"a", {-1.0, -2.0}, std::nullopt}, Choice{"b", {}, -3.5}}, 7, 9};
    Json j = c;
    CHECK(j.get<Completion>() == c);
  }

  TEST_CASE("spec defaults by role") {
    CHECK(BackendSpec::teacher("t", "m").temperature == 1.0);
    CHECK(BackendSpec::judge("j", "m").temperature == 0.0);
    CHECK(BackendSpec::judge("j", "m").kind == BackendKind::judge);
  }
}
