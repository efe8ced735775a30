#include <random>

#include "doctest.h"
#include "oracles/oracles.hpp"
#include "rankft/errors.hpp"
#include "rankft/losses.hpp"
#include "support.hpp"

using namespace rankft;

TEST_SUITE("losses") {
  TEST_CASE("pair loss is the hinge on the scaled margin") {
    CHECK(pair_rank_loss(-1.0, -2.0, 0, 1, 0.1) == 0.0);
    CHECK(pair_rank_loss(-2.0, -1.0, 0, 1, 0.1) == doctest::Approx(1.1));
    CHECK(pair_rank_loss(-1.0, -1.25, 1, 3, 0.25) == doctest::Approx(0.25));
    CHECK_THROWS_AS(pair_rank_loss(0, 0, 2, 2, 0.1), DomainError);
    CHECK_THROWS_AS(pair_rank_loss(0, 0, 3, 1, 0.1), DomainError);
  }

  TEST_CASE("rank loss on hand-computed sets") {
    CHECK(rank_loss(std::vector<double>{}, 0.1) == 0.0);
    CHECK(rank_loss(std::vector<double>{-3.0}, 0.1) == 0.0);
    // v = [-1, -1, -1], m = 0.5: pairs (0,1) 0.5, (0,2) 1.0, (1,2) 0.5
    CHECK(rank_loss(std::vector<double>{-1, -1, -1}, 0.5) == doctest::Approx(2.0));
    // Perfectly separated with room to spare.
    CHECK(rank_loss(std::vector<double>{0.0, -1.0, -2.0, -3.0}, 0.1) == 0.0);
  }

  TEST_CASE("rank loss gradient matches finite differences away from kinks") {
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> vd(-4.0, 0.0);
    for (int c = 0; c < 200; ++c) {
      std::vector<double> v(1 + c % 6);
      for (auto& x : v) x = vd(g);
      const auto grad = rank_loss_gradient(v, 0.1);
      for (std::size_t i = 0; i < v.size(); ++i) {
        auto up = v, down = v;
        up[i] += 1e-7;
        down[i] -= 1e-7;
        const double numeric = (rank_loss(up, 0.1) - rank_loss(down, 0.1)) / 2e-7;
        CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("combined loss equals the oracle and is non-negative") {
    const std::vector<std::string> words{"a", "b", "c", "d"};
    auto lm = testing::small_lm(words, 5);
    const auto ora = testing::to_oracle(lm);
    InstructionRecord p{"i", "a b", "c", "a b c"};
    RankedSet r;
    r.instruction_id = "i";
    r.n = 3;
    for (const char* t : {"a b", "c d a", "d"}) {
      CandidateResponse c;
      c.text = t;
      r.candidates.push_back(c);
      r.scores.push_back(0);
    }
    RankHyper h;
    const double got = combined_loss(lm, p, r, p.original_response, h);
    CHECK(got >= 0.0);
    CHECK(got == doctest::Approx(oracle::combined_loss(ora, "a b", "c", {"a b", "c d a", "d"}, "a b c", 0.1, 1.0)).epsilon(1e-12));
    std::vector<double> grad(lm.parameters().size(), 0.0);
    CHECK(combined_loss_with_gradient(lm, p, r, p.original_response, h, 1.0, grad) == doctest::Approx(got).epsilon(1e-14));
  }

  TEST_CASE("lambda zero drops the regulariser and allows an empty original") {
    auto lm = testing::small_lm({"a", "b"}, 2);
    InstructionRecord p{"i", "a", "", ""};
    RankedSet r;
    r.instruction_id = "i";
    r.n = 1;
    CandidateResponse c;
    c.text = "a b";
    r.candidates.push_back(c);
    r.scores.push_back(0);
    RankHyper h;
    h.lambda = 0.0;
    CHECK(combined_loss(lm, p, r, "", h) == 0.0);
    h.lambda = 1.0;
    CHECK_THROWS_AS(combined_loss(lm, p, r, "", h), DomainError);
    r.candidates.clear();
    CHECK_THROWS_AS(combined_loss(lm, p, r, "a", h), DomainError);
  }

  TEST_CASE("hyperparameter validation names the field") {
    RankHyper h;
    h.margin = 0.0;
    try {
      h.validate();
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "margin");
    }
    h = RankHyper{};
    h.batch_size = 0;
    CHECK_THROWS_AS(h.validate(), ValidationError);
    h = RankHyper{};
    h.lambda = -1;
    CHECK_THROWS_AS(h.validate(), ValidationError);
  }
}
