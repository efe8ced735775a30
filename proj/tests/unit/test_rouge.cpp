#include <random>

#include "doctest.h"
#include "oracles/oracles.hpp"
#include "rankft/rouge.hpp"
#include "support.hpp"

using namespace rankft;

TEST_SUITE("rouge") {
  TEST_CASE("hand-worked values") {
    CHECK(rouge_l("the cat sat on the mat", "the cat on the mat") == doctest::Approx(2 * 1.0 * (5.0 / 6) / (1.0 + 5.0 / 6)));
    CHECK(rouge_l("a b c", "c b a") == doctest::Approx(1.0 / 3));
    CHECK(rouge_l("a b c", "d e") == 0.0);
    CHECK(rouge_l("", "") == 0.0);
    CHECK(rouge_l("", "a") == 0.0);
    CHECK(rouge_l("x y", "x y") == 1.0);
  }

  TEST_CASE("bit-parallel LCS agrees with the table beyond one machine word") {
    std::mt19937_64 g(8);
    for (int c = 0; c < 300; ++c) {
      const auto a = testing::random_tokens(g, 200, 2 + c % 5);
      const auto b = testing::random_tokens(g, 200, 2 + c % 5);
      CHECK(lcs_length(a, b) == oracle::lcs_dp(a, b));
      CHECK(rouge_l(a, b) == oracle::rouge_l_dp(a, b));
    }
  }

  TEST_CASE("character tokenizer counts code points") {
    const Tokenizer chars{std::string(Tokenizer::kChar)};
    CHECK(rouge_l("abc", "abd", chars) == doctest::Approx(2.0 / 3));
    CHECK(chars.count("héllo") == 5);
  }
}
