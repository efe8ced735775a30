#include <cmath>

#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/tiny_lm.hpp"
#include "support.hpp"

using namespace rankft;

TEST_SUITE("tiny_lm") {
  const std::vector<std::string> kWords{"red", "green", "blue", "cyan", "pink"};

  TEST_CASE("forward pass equals the independent oracle") {
    auto lm = testing::small_lm(kWords, 3);
    const auto ora = testing::to_oracle(lm);
    const InstructionRecord p{"i", "red blue", "pink", ""};
    for (const char* r : {"green", "blue blue cyan", "unknown red", "pink green red cyan blue"}) {
      const auto got = lm.token_logprobs(p, r);
      const auto want = ora.logprobs("red blue", "pink", r);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("log-probabilities normalise over the vocabulary") {
    auto lm = testing::small_lm(kWords, 4);
    const InstructionRecord p{"i", "red", "", ""};
    double total = 0.0;
    for (const auto& w : lm.vocabulary()) total += std::exp(lm.token_logprobs(p, w).at(0));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("sampling emits max_new_tokens ordinary tokens") {
    auto lm = testing::small_lm(kWords, 5);
    Rng rng(1);
    const InstructionRecord p{"i", "red", "", ""};
    for (double t : {0.0, 0.7, 2.0}) {
      const auto toks = whitespace_tokens(lm.sample(p, t, rng));
      CHECK(toks.size() == static_cast<std::size_t>(lm.config().max_new_tokens));
      for (const auto& tok : toks) {
        CHECK(tok != TinyLm::kUnk);
        CHECK(tok != TinyLm::kBos);
      }
    }
    Rng a(9), b(9);
    CHECK(lm.sample(p, 1.0, a) == lm.sample(p, 1.0, b));
    CHECK(lm.sample(p, 0.0, a) == lm.sample(p, 0.0, b));
    CHECK_THROWS_AS(lm.sample(p, -1.0, a), DomainError);
  }

  TEST_CASE("checkpoint round trip is exact") {
    testing::TempDir tmp;
    auto lm = testing::small_lm(kWords, 6);
    lm.save(tmp / "m.ckpt");
    const auto back = TinyLm::load(tmp / "m.ckpt");
    CHECK(back.vocabulary() == lm.vocabulary());
    CHECK(back.config() == lm.config());
    CHECK(std::equal(back.parameters().begin(), back.parameters().end(), lm.parameters().begin()));
    const auto poly = load_policy(tmp / "m.ckpt");
    CHECK(poly->kind() == TinyLm::kKind);
  }

  TEST_CASE("vocabulary rules") {
    CHECK_THROWS_AS(TinyLm({"a", "a"}, TinyLmConfig{}), ValidationError);
    CHECK_THROWS_AS(TinyLm({"<bos>"}, TinyLmConfig{}), ValidationError);
    TinyLmConfig bad;
    bad.hidden_dim = 0;
    CHECK_THROWS_AS(TinyLm({"a"}, bad), ValidationError);
    const std::vector<InstructionRecord> recs{{"1", "b a", "c", "d <bos> a"}};
    CHECK(build_vocabulary(recs) == std::vector<std::string>{"a", "b", "c", "d"});
  }
}
