#include <cmath>

#include "doctest.h"
#include "rankft/errors.hpp"
#include "rankft/prm.hpp"
#include "support.hpp"

using namespace rankft;

namespace {

RankedExample example(const std::string& id, const std::vector<std::string>& texts, const std::vector<double>& scores,
                      RankingSource src = RankingSource::judge) {
  RankedExample ex;
  ex.instruction = {id, "describe the " + id, "", ""};
  ex.ranked.instruction_id = id;
  ex.ranked.ranking_source = src;
  for (const auto& t : texts) {
    CandidateResponse c;
    c.text = t;
    c.length = static_cast<int>(whitespace_tokens(t).size());
    ex.ranked.candidates.push_back(c);
  }
  ex.ranked.scores = scores;
  ex.ranked.n = static_cast<int>(texts.size());
  return ex;
}

const std::vector<std::string> kVocab{"good", "fine", "bad", "poor", "describe", "the", "a", "b", "c", "d"};

}  // namespace

TEST_SUITE("prm") {
  TEST_CASE("score gradient matches finite differences") {
    PrmConfig cfg;
    cfg.hidden_dim = 5;
    cfg.init_std = 0.5;
    cfg.seed = 3;
    PrmModel m(kVocab, cfg);
    const InstructionRecord p{"a", "describe the a", "", ""};
    const std::string resp = "good fine the a unknownword";
    std::vector<double> grad(m.parameters().size(), 0.0);
    m.accumulate_score_gradient(p, resp, 1.0, grad);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double keep = m.parameters()[i];
      m.parameters()[i] = keep + h;
      const double up = m.score(p, resp);
      m.parameters()[i] = keep - h;
      const double down = m.score(p, resp);
      m.parameters()[i] = keep;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - grad[i]));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("save and load preserve scores") {
    testing::TempDir dir;
    PrmModel m(kVocab, PrmConfig{4, 0.3, 9});
    m.provenance = "judge.jsonl";
    m.save(dir / "prm.json");
    const auto back = PrmModel::load(dir / "prm.json");
    const InstructionRecord p{"x", "describe the b", "", ""};
    CHECK(back.score(p, "good bad c") == m.score(p, "good bad c"));
    CHECK(back.provenance == "judge.jsonl");
    CHECK(back.vocabulary() == m.vocabulary());
  }

  TEST_CASE("training learns a simple preference") {
    std::vector<RankedExample> data;
    for (const char* id : {"a", "b", "c", "d"}) {
      for (int k = 0; k < 3; ++k) {
        data.push_back(example(std::string(id) + std::to_string(k), {"good fine good", "fine bad", "poor bad bad"},
                               {14, 8, 2}));
      }
    }
    PrmHyper hyper;
    hyper.learning_rate = 0.05;
    hyper.epochs = 80;
    hyper.seed = 1;
    PrmTrainReport rep;
    const auto model = train_prm(data, hyper, &rep, "src");
    CHECK(rep.train_pairs > 0);
    CHECK(rep.heldout_pairs > 0);
    CHECK(rep.heldout_accuracy == 1.0);
    CHECK(pairwise_accuracy(model, data) == 1.0);
    CHECK(model.provenance == "src");
    const auto ranked = prm_rank(model, data[0].instruction, data[0].ranked.candidates);
    CHECK(ranked.ranking_source == RankingSource::prm);
    CHECK(ranked.candidates[0].text == "good fine good");
  }

  TEST_CASE("tied and singleton sets give no pairs") {
    std::vector<RankedExample> data{example("a", {"good", "bad"}, {9, 9}), example("b", {"good"}, {12})};
    PrmHyper hyper;
    hyper.heldout_fraction = 0.0;
    PrmTrainReport rep;
    CHECK_THROWS_AS(train_prm(data, hyper, &rep), NoTrainablePairsError);
  }

  TEST_CASE("only judge rankings are accepted") {
    std::vector<RankedExample> data{example("a", {"good", "bad"}, {-1, -2}, RankingSource::probabilistic)};
    CHECK_THROWS_AS(train_prm(data, PrmHyper{}), ValidationError);
  }

  TEST_CASE("hyperparameter validation") {
    PrmHyper h;
    h.margin = 0;
    CHECK_THROWS_AS(h.validate(), ValidationError);
    h = PrmHyper{};
    h.heldout_fraction = 1.0;
    CHECK_THROWS_AS(h.validate(), ValidationError);
  }

  TEST_CASE("prm_rank keeps input order on ties") {
    FunctionScorer flat([](const InstructionRecord&, std::string_view) { return 1.0; });
    CandidateResponse a, b;
    a.text = "x";
    b.text = "y";
    a.length = b.length = 1;
    const auto r = prm_rank(flat, {"i", "Q", "", ""}, {a, b});
    CHECK(r.candidates[0].text == "x");
    CHECK_THROWS_AS(prm_rank(flat, {"i", "Q", "", ""}, {}), ValidationError);
    CHECK(pairwise_accuracy(flat, std::vector<RankedExample>{}) == 0.0);
  }
}
