#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/judge.hpp"
#include "rankft/mock_backends.hpp"
#include "support.hpp"

using namespace rankft;

namespace {

std::vector<CandidateResponse> cands(const std::vector<std::string>& texts) {
  std::vector<CandidateResponse> out;
  for (const auto& t : texts) {
    CandidateResponse c;
    c.text = t;
    c.length = static_cast<int>(whitespace_tokens(t).size());
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST_SUITE("judge") {
  TEST_CASE("prompt size limits") {
    const InstructionRecord r{"i", "Q", "", ""};
    CHECK_THROWS_AS(build_judge_prompt(r, std::vector<std::string>{}), ValidationError);
    CHECK_THROWS_AS(build_judge_prompt(r, std::vector<std::string>(5, "x")), ValidationError);
    const auto three = build_judge_prompt(r, std::vector<std::string>{"a", "b", "c"});
    CHECK(three.find("Response 0/1/2 in reply") != std::string::npos);
    CHECK(three.find("Response 0/1/2/4") != std::string::npos);
    CHECK(three.find("###Response 3:") == std::string::npos);
    CHECK(extract_judge_responses(three) == std::vector<std::string>{"a", "b", "c"});
  }

  TEST_CASE("parser accepts the prompt's own format and variants") {
    const auto v = parse_judge_output(
        "The instruction is close-ended.\n###Response 4:\nFour.\nResponse 0: [3 + 4 + 5 = 12]\n"
        "Response 1: [2, 2, 2]\nResponse 2: [12]\nResponse 4: [15]\nrank: [0, 2, 1]\n",
        3);
    CHECK(v.question_type == QuestionType::close_ended);
    CHECK(v.totals == std::vector<std::optional<int>>{12, 6, 12});
    CHECK(v.subscores[1] == std::vector<int>{2, 2, 2});
    CHECK(v.subscores[2].empty());
    CHECK(v.rank == std::vector<int>{0, 2, 1});
    CHECK(v.duplicates_removed.empty());
  }

  TEST_CASE("a partial rank marks the rest as duplicates") {
    const auto v = parse_judge_output("Response 0: [9]\nResponse 1: [9]\nrank: [1]", 2);
    CHECK(v.rank == std::vector<int>{1});
    CHECK(v.duplicates_removed == std::set<int>{0});
    CHECK(v.question_type == QuestionType::unknown);
    const auto rs = verdict_to_ranked_set("i", cands({"x", "y"}), v);
    CHECK(rs.n == 1);
    CHECK(rs.candidates[0].text == "y");
    CHECK(rs.ranking_source == RankingSource::judge);
  }

  TEST_CASE("the last rank line wins") {
    const auto v = parse_judge_output("Response 0: [9]\nResponse 1: [3]\nrank: [1, 0] draft\nFinal rank: [0, 1]", 2);
    CHECK(v.rank == std::vector<int>{0, 1});
  }

  TEST_CASE("judge_rank retries an unparseable reply once under a new cache key") {
    auto backend = std::make_shared<ScriptedBackend>("s", false);
    backend->push_text("I refuse.");
    backend->push_text("Response 0: [4]\nResponse 1: [10]\nrank: [1, 0]");
    LlmClient client(backend, BackendSpec::judge("s", "m"));
    const auto out = judge_rank({"i", "Q", "", ""}, cands({"a", "b"}), client);
    REQUIRE(out.ranked);
    CHECK(out.ranked->candidates[0].text == "b");
    CHECK(backend->calls() == 2);

    backend->push_text("nope");
    backend->push_text("still nope");
    const auto skipped = judge_rank({"j", "Q2", "", ""}, cands({"a", "b"}), client, "ctx");
    REQUIRE(skipped.skip);
    CHECK_FALSE(skipped.ranked);
    CHECK(skipped.skip->instruction_id == "j");
    CHECK(skipped.skip->stage == "ctx");
  }

  TEST_CASE("judge_rank needs a judge-configured client") {
    LlmClient teacher(std::make_shared<SyntheticTeacher>(), BackendSpec::teacher("t", "m"));
    CHECK_THROWS_AS(judge_rank({"i", "Q", "", ""}, cands({"a"}), teacher), CapabilityError);
  }

  TEST_CASE("synthetic judge keeps the first of identical responses") {
    LlmClient client(std::make_shared<SyntheticJudge>(), BackendSpec::judge("synthetic-judge", "m"));
    const auto out = judge_rank({"i", "Q", "", ""}, cands({"um stuff", "clear precise", "clear precise"}), client);
    REQUIRE(out.verdict);
    CHECK(out.verdict->rank == std::vector<int>{1, 0});
    CHECK(out.verdict->duplicates_removed == std::set<int>{2});
  }
}
