#include <cmath>

#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/prob_rank.hpp"
#include "rankft/tiny_lm.hpp"
#include "support.hpp"

using namespace rankft;

namespace {

CandidateResponse teacher(const std::string& text, double lp) {
  CandidateResponse c;
  c.text = text;
  c.source = ResponseSource::teacher;
  c.teacher_logprob_sum = lp;
  c.length = static_cast<int>(whitespace_tokens(text).size());
  return c;
}

}  // namespace

TEST_SUITE("prob_rank") {
  TEST_CASE("score definition and domain") {
    CHECK(length_penalized_score(-8.0, 4, 1.0) == doctest::Approx(-2.0));
    CHECK(length_penalized_score(-8.0, 4, 0.5) == doctest::Approx(-4.0));
    CHECK(length_penalized_score(-3.0, 1, 1.3) == -3.0);
    CHECK(length_penalized_score(0.0, 5, 1.3) == 0.0);
    CHECK_THROWS_AS(length_penalized_score(-1.0, 0, 1.0), DomainError);
    CHECK_THROWS_AS(length_penalized_score(-1.0, 2, 0.0), DomainError);
    CHECK_THROWS_AS(length_penalized_score(0.1, 2, 1.0), DomainError);
    CHECK_THROWS_AS(length_penalized_score(NAN, 2, 1.0), DomainError);
  }

  TEST_CASE("larger beta favours longer responses") {
    // Long: -6 over 6 tokens; short: -2 over 2 tokens.
    const std::vector<CandidateResponse> cs{teacher("a b", -2.0), teacher("a b c d e f", -6.0)};
    CHECK(rank_by_score("i", cs, 0.5).candidates[0].text == "a b");
    CHECK(rank_by_score("i", cs, 1.3).candidates[0].text == "a b c d e f");
    const auto tie = rank_by_score("i", cs, 1.0);
    CHECK(tie.candidates[0].text == "a b");
    CHECK(tie.ranking_source == RankingSource::probabilistic);
    auto missing = cs;
    missing[1].teacher_logprob_sum.reset();
    CHECK_THROWS_AS(rank_by_score("i", missing), ValidationError);
  }

  TEST_CASE("select_beta guards its inputs") {
    const std::vector<CandidateSet> sets{{"a", {teacher("x", -1.0)}}};
    const std::vector<InstructionRecord> held{{"a", "q", "", "x"}};
    const std::vector<double> betas{1.0};
    auto lm = testing::small_lm({"x"}, 1);
    const BetaTrainFn train = [&](const std::vector<RankedSet>&, double) { return lm.clone(); };
    CHECK_THROWS_AS(select_beta(sets, held, betas, train), ValidationError);
    const std::vector<InstructionRecord> held2{{"b", "q", "", "x"}};
    CHECK_THROWS_AS(select_beta(sets, held2, std::vector<double>{}, train), ValidationError);
    const BetaTrainFn failing = [&](const std::vector<RankedSet>&, double) -> std::unique_ptr<PolicyModel> {
      throw std::runtime_error("diverged");
    };
    try {
      select_beta(sets, held2, betas, failing);
      FAIL("expected SweepError");
    } catch (const SweepError& e) {
      CHECK(e.beta() == 1.0);
    }
    const auto res = select_beta(sets, held2, std::vector<double>{2.0, 1.0}, train);
    CHECK(res.mean_nll[0] == res.mean_nll[1]);
    CHECK(res.best_beta == 1.0);
  }
}
