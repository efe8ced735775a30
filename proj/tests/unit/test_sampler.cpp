#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/sampler.hpp"
#include "rankft/tiny_lm.hpp"
#include "support.hpp"

using namespace rankft;

TEST_SUITE("sampler") {
  const InstructionRecord kPrompt{"q", "Say something.", "", ""};

  TEST_CASE("policy validation") {
    DiversityPolicy p;
    CHECK_NOTHROW(p.validate());
    p.tau = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = DiversityPolicy{};
    p.max_trials = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = DiversityPolicy{};
    p.n = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }

  TEST_CASE("trace records every draw and the fallback pick") {
    DiversityPolicy p;
    p.n = 2;
    testing::ScriptedGenerator gen({"a b", "a b", "a b", "a b"});
    std::vector<SampleTrace> trace;
    const auto out = sample_diverse(gen, kPrompt, p, 1, Tokenizer{}, &trace);
    REQUIRE(trace.size() == 5);
    CHECK(trace[0].accepted);
    CHECK_FALSE(trace[1].accepted);
    CHECK(trace[3].temperature == doctest::Approx(1.2));
    CHECK(trace[4].fallback);
    CHECK(trace[4].trial == 2);
    CHECK(out[1].fallback);
    CHECK(out[1].resamples == 2);
    CHECK(out[1].source == ResponseSource::student);
    CHECK(out[1].length == 2);
  }

  TEST_CASE("persistent empty generations raise SamplingError") {
    testing::ScriptedGenerator gen({"", "", ""});
    CHECK_THROWS_AS(sample_diverse(gen, kPrompt, DiversityPolicy{}, 1), SamplingError);
  }

  TEST_CASE("policy-model sampling is deterministic in the seed") {
    auto lm = testing::small_lm({"a", "b", "c", "d", "e", "f"}, 2);
    PolicyGenerator gen(lm);
    const auto x = sample_diverse(gen, kPrompt, DiversityPolicy{}, 42);
    const auto y = sample_diverse(gen, kPrompt, DiversityPolicy{}, 42);
    CHECK(x == y);
    CHECK(x.size() == 4);
  }
}
