#include <cmath>

#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/mock_backends.hpp"
#include "rankft/trainer.hpp"
#include "support.hpp"

using namespace rankft;

namespace {

RankedSet two_way(const std::string& id, const std::string& good, const std::string& bad) {
  RankedSet r;
  r.instruction_id = id;
  r.n = 2;
  for (const auto* t : {&good, &bad}) {
    CandidateResponse c;
    c.text = *t;
    c.length = static_cast<int>(whitespace_tokens(*t).size());
    r.candidates.push_back(c);
  }
  r.scores = {2, 1};
  return r;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("warmup is linear then constant") {
    CHECK(warmup_learning_rate(1.0, 2, 0) == doctest::Approx(0.5));
    CHECK(warmup_learning_rate(1.0, 2, 1) == doctest::Approx(1.0));
    CHECK(warmup_learning_rate(1.0, 2, 50) == doctest::Approx(1.0));
    CHECK(warmup_learning_rate(0.3, 0, 0) == doctest::Approx(0.3));
  }

  TEST_CASE("AdamW first step moves each parameter by the learning rate against the gradient sign") {
    AdamW opt(3, 0.9, 0.999, 1e-8, 0.0);
    std::vector<double> p{1.0, 1.0, 1.0};
    const std::vector<double> g{0.5, -2.0, 0.0};
    opt.step(p, g, 0.1);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(1.1).epsilon(1e-6));
    CHECK(p[2] == 1.0);
    CHECK(opt.steps() == 1);
    AdamW decay(1, 0.9, 0.999, 1e-8, 0.5);
    std::vector<double> q{2.0};
    decay.step(q, std::vector<double>{0.0}, 0.1);
    CHECK(q[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  }

  TEST_CASE("join_ranked rejects unknown ids") {
    const std::vector<InstructionRecord> instr{{"a", "x", "", "y"}};
    const std::vector<RankedSet> ranked{two_way("b", "y", "z")};
    CHECK_THROWS_AS(join_ranked(instr, ranked), ValidationError);
    const std::vector<RankedSet> ok{two_way("a", "y", "z")};
    CHECK(join_ranked(instr, ok).size() == 1);
  }

  TEST_CASE("training lowers the loss and is deterministic for a seed") {
    const std::vector<std::string> words{"up", "down", "left", "right", "go"};
    std::vector<RankedExample> data;
    for (int i = 0; i < 6; ++i) {
      InstructionRecord r{"q" + std::to_string(i), "go", "", "up up"};
      data.push_back({r, two_way(r.id, "up up", "down left")});
    }
    RankHyper h;
    h.learning_rate = 0.05;
    h.epochs = 20;
    h.batch_size = 3;
    auto a = testing::small_lm(words, 1);
    auto b = testing::small_lm(words, 1);
    const auto ra = train_stage(a, data, h);
    const auto rb = train_stage(b, data, h);
    CHECK(ra.steps == 40);
    CHECK(ra.step_losses.back() < ra.step_losses.front());
    CHECK(ra.step_losses == rb.step_losses);
    CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
    CHECK(ra.agreement_after >= ra.agreement_before);
  }

  TEST_CASE("mle finetuning reduces the reference NLL") {
    const auto instr = make_synthetic_instructions(10, 3);
    TinyLmConfig cfg;
    TinyLm lm(build_vocabulary(instr), cfg);
    double before = 0.0;
    for (const auto& r : instr) before += mean_nll(lm, r, r.original_response);
    RankHyper h;
    h.learning_rate = 0.05;
    h.epochs = 5;
    h.batch_size = 4;
    mle_finetune(lm, instr, h);
    double after = 0.0;
    for (const auto& r : instr) after += mean_nll(lm, r, r.original_response);
    CHECK(after < before);
  }

  TEST_CASE("flatten_responses appends one pair per ranked candidate") {
    const std::vector<InstructionRecord> instr{{"a", "x", "", "y"}};
    const std::vector<RankedSet> ranked{two_way("a", "p", "q")};
    const auto flat = flatten_responses(instr, ranked);
    REQUIRE(flat.size() == 3);
    CHECK(flat[0].original_response == "y");
    CHECK(flat[1].original_response == "p");
    CHECK(flat[2].original_response == "q");
    CHECK(flat[1].id != flat[2].id);
  }

  TEST_CASE("gradient_check reports small error on a toy case") {
    auto lm = testing::small_lm({"a", "b", "c"}, 2);
    LossCase lc{{"i", "a b", "", "c a"}, two_way("i", "a b c", "c"), RankHyper{}};
    const auto res = gradient_check(lm, lc);
    CHECK(res.parameters == lm.parameters().size());
    CHECK(res.max_relative_error < 1e-4);
  }
}
