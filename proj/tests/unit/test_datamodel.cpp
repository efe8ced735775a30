#include <fstream>

#include "doctest.h"
#include "rankft/datamodel.hpp"
#include "rankft/errors.hpp"
#include "rankft/json_io.hpp"
#include "support.hpp"

using namespace rankft;

namespace {

CandidateResponse cand(const std::string& text, ResponseSource src = ResponseSource::student) {
  CandidateResponse c;
  c.text = text;
  c.source = src;
  c.length = static_cast<int>(whitespace_tokens(text).size());
  if (src == ResponseSource::teacher) c.teacher_logprob_sum = -1.5;
  return c;
}

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_SUITE("datamodel") {
  TEST_CASE("enum names round trip") {
    for (auto s : {ResponseSource::teacher, ResponseSource::student, ResponseSource::original, ResponseSource::judge_reference}) {
      CHECK(parse_response_source(to_string(s)) == s);
    }
    for (auto s : {RankingSource::probabilistic, RankingSource::judge, RankingSource::prm}) {
      CHECK(parse_ranking_source(to_string(s)) == s);
    }
    for (auto q : {QuestionType::open_ended, QuestionType::close_ended, QuestionType::unknown}) {
      CHECK(parse_question_type(to_string(q)) == q);
    }
    CHECK_THROWS_AS(parse_ranking_source("oracle"), ValidationError);
  }

  TEST_CASE("candidate invariants") {
    const Tokenizer ws;
    CHECK_NOTHROW(validate(cand("a b"), ws));
    auto c = cand("a b");
    c.length = 3;
    CHECK_THROWS_AS(validate(c, ws), ValidationError);
    c = cand("a b");
    c.teacher_logprob_sum = -1.0;
    CHECK_THROWS_AS(validate(c, ws), ValidationError);
    c = cand("a b", ResponseSource::teacher);
    c.teacher_logprob_sum.reset();
    CHECK_THROWS_AS(validate(c, ws), ValidationError);
    c = cand("a b", ResponseSource::teacher);
    c.teacher_logprob_sum = 0.5;
    CHECK_THROWS_AS(validate(c, ws), ValidationError);
    // Lengths under a tokenizer only a remote backend knows are taken as given.
    c = cand("a b", ResponseSource::teacher);
    c.length = 7;
    CHECK_NOTHROW(validate(c, Tokenizer("teacher:remote")));
  }

  TEST_CASE("ranked set scores must be non-increasing and aligned") {
    const std::vector<CandidateResponse> cs{cand("x"), cand("y z"), cand("w")};
    const std::vector<double> scores{1.0, 3.0, 3.0};
    const auto r = make_ranked_set("i", cs, scores, RankingSource::prm);
    CHECK(r.candidates[0].text == "y z");
    CHECK(r.candidates[1].text == "w");
    CHECK(r.candidates[2].text == "x");
    CHECK(r.n == 3);
    CHECK_NOTHROW(validate(r, Tokenizer{}));
    auto bad = r;
    std::swap(bad.scores[0], bad.scores[2]);
    CHECK_THROWS_AS(validate(bad, Tokenizer{}), ValidationError);
    bad = r;
    bad.n = 2;
    CHECK_THROWS_AS(validate(bad, Tokenizer{}), ValidationError);
    CHECK_THROWS_AS(validate_size(r, 2), ValidationError);
  }

  TEST_CASE("datasets round trip through files") {
    testing::TempDir tmp;
    const std::vector<InstructionRecord> instr{{"1", "Say hi", "", "hi"}, {"2", "Add", "1 2", "3"}};
    save_dataset(instr, tmp / "i.jsonl");
    const auto back = load_dataset<InstructionRecord>(tmp / "i.jsonl");
    CHECK(back.records == instr);
    CHECK(back.header.schema == Schema::instructions);

    const std::vector<CandidateSet> sets{{"1", {cand("a b", ResponseSource::teacher), cand("c", ResponseSource::teacher)}}};
    save_dataset(sets, tmp / "c.jsonl");
    CHECK(load_dataset<CandidateSet>(tmp / "c.jsonl").records == sets);

    const std::vector<SkipRecord> skips{{"1", "judge", "reason"}};
    save_dataset(skips, tmp / "s.jsonl");
    CHECK(load_dataset<SkipRecord>(tmp / "s.jsonl").records == skips);
  }

  TEST_CASE("load errors carry the line") {
    testing::TempDir tmp;
    const std::string header = R"({"format":"rankft-dataset","version":1,"schema":"instructions","tokenizer":"whitespace"})";
    write(tmp / "a.jsonl", header + "\n" + R"({"id":"1","instruction":"x","input":"","original_response":"y"})" + "\n{oops\n");
    try {
      load_dataset<InstructionRecord>(tmp / "a.jsonl");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    write(tmp / "b.jsonl", header + "\n\n" + R"({"id":"1","instruction":"","input":"","original_response":"y"})" + "\n");
    try {
      load_dataset<InstructionRecord>(tmp / "b.jsonl");
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.line() == 3);
      CHECK(e.field() == "instruction");
    }
    write(tmp / "c.jsonl", header + "\n" + R"({"id":"1","instruction":"x","input":"","original_response":"y"})" + "\n" +
                               R"({"id":"1","instruction":"z","input":"","original_response":"y"})" + "\n");
    CHECK_THROWS_AS(load_dataset<InstructionRecord>(tmp / "c.jsonl"), ValidationError);
    write(tmp / "d.jsonl", header + "\n");
    CHECK_THROWS_AS(load_dataset<RankedSet>(tmp / "d.jsonl"), ValidationError);
    write(tmp / "e.jsonl", "");
    CHECK(load_dataset<InstructionRecord>(tmp / "e.jsonl").records.empty());
    CHECK_THROWS_AS(load_dataset<InstructionRecord>(tmp / "missing.jsonl"), IoError);
  }

  TEST_CASE("saving refuses invalid records and leaves no partial file") {
    testing::TempDir tmp;
    const std::vector<InstructionRecord> bad{{"1", "", "", ""}};
    CHECK_THROWS_AS(save_dataset(bad, tmp / "x.jsonl"), ValidationError);
    CHECK_FALSE(std::filesystem::exists(tmp / "x.jsonl"));
  }

  TEST_CASE("judge verdict JSON round trip") {
    JudgeVerdict v;
    v.question_type = QuestionType::close_ended;
    v.totals = {12, std::nullopt, 3};
    v.subscores = {{4, 4, 4}, {}, {}};
    v.duplicates_removed = {1};
    v.rank = {0, 2};
    v.raw_text = "raw";
    CHECK_NOTHROW(validate(v, 3));
    CHECK(Json(v).get<JudgeVerdict>() == v);
  }
}
