#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/eval.hpp"
#include "rankft/mock_backends.hpp"
#include "support.hpp"

using namespace rankft;

namespace {

TaskFile task(std::string id, std::vector<TaskInstance> instances) {
  TaskFile t;
  t.task_id = std::move(id);
  t.definition = "Copy the input.";
  t.positive_examples = {{"x y", "x y"}, {"z", "z"}};
  t.instances = std::move(instances);
  return t;
}

// Answers with a fixed string regardless of the prompt.
class ConstGenerator final : public ResponseGenerator {
 public:
  explicit ConstGenerator(std::string text) : text_(std::move(text)) {}
  std::string generate(const InstructionRecord&, double, Rng&) override { return text_; }

 private:
  std::string text_;
};

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("task files round trip and validate") {
    testing::TempDir dir;
    const auto t = task("t1", {{"a b", "a b"}});
    save_task_file(t, dir / "b.json");
    save_task_file(task("t0", {{"c", "c"}}), dir / "a.json");
    CHECK(load_task_file(dir / "b.json") == t);
    const auto all = load_task_dir(dir.path());
    REQUIRE(all.size() == 2);
    CHECK(all[0].task_id == "t0");
    CHECK_THROWS_AS(validate(task("t", {})), ValidationError);
    CHECK_THROWS_AS(validate(task("t", {{"a", ""}})), ValidationError);
    CHECK_THROWS_AS(validate(task("", {{"a", "a"}})), ValidationError);
  }

  TEST_CASE("prompts carry 0 or 2 positive examples") {
    const auto t = task("t", {{"in", "out"}});
    const auto zero = task_prompt(t, 0, 0);
    CHECK(zero.id == "t#0");
    CHECK(zero.instruction == "Definition: Copy the input.");
    CHECK(zero.input == "in");
    CHECK(zero.original_response == "out");
    const auto two = task_prompt(t, 0, 2);
    CHECK(two.instruction.find("Positive Example 2:\nInput: z\nOutput: z") != std::string::npos);
    CHECK_THROWS_AS(task_prompt(t, 0, 1), ValidationError);
    auto few = t;
    few.positive_examples.resize(1);
    CHECK_THROWS_AS(task_prompt(few, 0, 2), ValidationError);
  }

  TEST_CASE("rouge and exact-match averages") {
    const std::vector<TaskFile> tasks{task("t0", {{"a b", "a b"}, {"c d", "c e"}}), task("t1", {{"q", "q"}})};
    testing::EchoGenerator echo;
    const auto r = eval_rouge(echo, tasks, 0);
    REQUIRE(r.tasks.size() == 2);
    CHECK(r.tasks[0].instance_scores[1] == doctest::Approx(50.0));
    CHECK(r.tasks[0].score == doctest::Approx(75.0));
    CHECK(r.tasks[1].score == doctest::Approx(100.0));
    CHECK(r.overall == doctest::Approx(87.5));
    CHECK(r.metric == "rouge_l");

    const auto em = eval_exact_match(echo, tasks, 2);
    CHECK(em.tasks[0].score == doctest::Approx(50.0));
    CHECK(em.overall == doctest::Approx(75.0));
    CHECK(em.shots == 2);

    ConstGenerator padded("  q \n");
    CHECK(eval_exact_match(padded, {task("t1", {{"q", "q"}})}, 0).overall == doctest::Approx(100.0));
    CHECK_FALSE(format_table(r).empty());
  }

  TEST_CASE("compare prompt and reply grammar") {
    const auto p = build_compare_prompt("Why?", "Because.", "No idea\nat all.");
    const auto parts = split_compare_prompt(p);
    REQUIRE(parts);
    CHECK(parts->question == "Why?");
    CHECK(parts->answer_1 == "Because.");
    CHECK(parts->answer_2 == "No idea\nat all.");
    CHECK_FALSE(split_compare_prompt("unrelated text"));

    CHECK(parse_compare_reply("Answer 1 is better.\nwinner: 1") == 1);
    CHECK(parse_compare_reply("Winner: 2") == 2);
    CHECK(parse_compare_reply("winner: 1\nOn reflection\nwinner: tie") == 0);
    CHECK_THROWS_AS(parse_compare_reply("I like both."), ParseError);
  }

  TEST_CASE("pairwise needs agreement across both orders") {
    const std::vector<InstructionRecord> qs{{"q0", "Q0", "", ""}, {"q1", "Q1", "", ""}};
    ConstGenerator longer("clear precise helpful"), shorter("um");
    LlmClient longer_judge(std::make_shared<PairwiseMockJudge>(PairwiseMockJudge::Rule::longer),
                           BackendSpec::judge("pairwise", "m"));
    const auto win = eval_pairwise(longer, shorter, qs, longer_judge);
    CHECK(win.wins == 2);
    CHECK(win.win_pct == doctest::Approx(100.0));

    LlmClient position(std::make_shared<PairwiseMockJudge>(PairwiseMockJudge::Rule::first_shown),
                       BackendSpec::judge("pairwise", "m"));
    const auto biased = eval_pairwise(longer, shorter, qs, position);
    CHECK(biased.ties == 2);
    CHECK(biased.items[0].a_first == 1);
    CHECK(biased.items[0].b_first == 1);
  }

  TEST_CASE("unparseable pairwise replies drop the question") {
    auto scripted = std::make_shared<ScriptedBackend>("s", false);
    for (int i = 0; i < 2; ++i) scripted->push_text("no verdict");
    LlmClient judge(scripted, BackendSpec::judge("s", "m"));
    ConstGenerator a("a"), b("b");
    const auto r = eval_pairwise(a, b, {{"bad", "Q", "", ""}}, judge);
    CHECK(r.dropped == std::vector<std::string>{"bad"});
    CHECK(r.items.empty());
  }
}
