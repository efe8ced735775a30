#include "rankft/prm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rankft/checkpoint.hpp"
#include "rankft/json_io.hpp"
#include "rankft/rng.hpp"

namespace rankft {

PrmModel::PrmModel(std::vector<std::string> vocabulary, const PrmConfig& config)
    : vocab_(std::move(vocabulary)), config_(config) {
  if (config_.hidden_dim < 1) throw ValidationError("hidden_dim", "must be >= 1");
  build();
  Rng rng(config_.seed);
  for (auto& p : params_) p = rng.normal(0.0, config_.init_std);
}

PrmModel::PrmModel(std::vector<std::string> vocabulary, const PrmConfig& config, std::vector<double> params)
    : vocab_(std::move(vocabulary)), config_(config) {
  build();
  if (params.size() != params_.size()) {
    throw ParseError(0, "prm checkpoint has " + std::to_string(params.size()) + " parameters, expected " +
                            std::to_string(params_.size()));
  }
  params_ = std::move(params);
}

void PrmModel::build() {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], i).second) throw ValidationError("vocabulary", "duplicate token '" + vocab_[i] + "'");
  }
  in_dim_ = 3 * vocab_.size();
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  // W (h x in), b (h), u (h), c
  params_.assign(h * in_dim_ + 2 * h + 1, 0.0);
}

PrmModel PrmModel::load(const std::filesystem::path& path) {
  auto blob = read_checkpoint(path);
  const auto j = Json::parse(blob.config_json);
  if (j.at("kind").get<std::string>() != kKind) throw ParseError(0, path.string() + ": not a prm checkpoint");
  PrmConfig cfg;
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.init_std = j.at("init_std").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  PrmModel m(std::move(blob.vocabulary), cfg, std::move(blob.parameters));
  m.provenance = j.value("provenance", "");
  return m;
}

void PrmModel::save(const std::filesystem::path& path) const {
  CheckpointBlob blob;
  blob.config_json = Json{{"kind", kKind},
                          {"hidden_dim", config_.hidden_dim},
                          {"init_std", config_.init_std},
                          {"seed", config_.seed},
                          {"provenance", provenance}}
                         .dump();
  blob.vocabulary = vocab_;
  blob.parameters = params_;
  write_checkpoint(path, blob);
}

std::vector<double> PrmModel::features(const InstructionRecord& prompt, std::string_view response) const {
  const std::size_t v = vocab_.size();
  std::vector<double> x(in_dim_, 0.0);
  const auto bag = [&](const Tokens& toks, std::size_t offset) {
    if (toks.empty()) return;
    const double w = 1.0 / static_cast<double>(toks.size());
    for (const auto& t : toks) {
      if (const auto it = index_.find(t); it != index_.end()) x[offset + it->second] += w;
    }
  };
  bag(whitespace_tokens(response), 0);
  Tokens q = whitespace_tokens(prompt.instruction);
  const auto in = whitespace_tokens(prompt.input);
  q.insert(q.end(), in.begin(), in.end());
  bag(q, v);
  for (std::size_t i = 0; i < v; ++i) x[2 * v + i] = x[i] * x[v + i];
  return x;
}

double PrmModel::forward(const std::vector<double>& x, std::vector<double>* hidden) const {
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  const double* w = params_.data();
  const double* b = w + h * in_dim_;
  const double* u = b + h;
  const double c = u[h];
  double s = c;
  if (hidden) hidden->assign(h, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    double a = b[r];
    const double* row = w + r * in_dim_;
    for (std::size_t i = 0; i < in_dim_; ++i) {
      if (x[i] != 0.0) a += row[i] * x[i];
    }
    const double t = std::tanh(a);
    if (hidden) (*hidden)[r] = t;
    s += u[r] * t;
  }
  return s;
}

double PrmModel::score(const InstructionRecord& prompt, std::string_view response) const {
  return forward(features(prompt, response), nullptr);
}

void PrmModel::accumulate_score_gradient(const InstructionRecord& prompt, std::string_view response, double weight,
                                         std::span<double> grad) const {
  if (grad.size() != params_.size()) throw DomainError("accumulate_score_gradient: gradient size mismatch");
  const auto x = features(prompt, response);
  std::vector<double> hid;
  forward(x, &hid);
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  const std::size_t b_off = h * in_dim_, u_off = b_off + h, c_off = u_off + h;
  const double* u = params_.data() + u_off;
  grad[c_off] += weight;
  for (std::size_t r = 0; r < h; ++r) {
    grad[u_off + r] += weight * hid[r];
    const double da = weight * u[r] * (1.0 - hid[r] * hid[r]);
    grad[b_off + r] += da;
    double* row = grad.data() + r * in_dim_;
    for (std::size_t i = 0; i < in_dim_; ++i) {
      if (x[i] != 0.0) row[i] += da * x[i];
    }
  }
}

void PrmHyper::validate() const {
  if (!(margin > 0.0)) throw ValidationError("margin", "must be > 0");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate", "must be > 0");
  if (epochs < 0) throw ValidationError("epochs", "must be >= 0");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) throw ValidationError("heldout_fraction", "must lie in [0, 1)");
}

namespace {

struct PairRef {
  std::size_t j, k;
};

// Pairs j < k with a strict judge preference.
std::vector<PairRef> strict_pairs(const RankedSet& s) {
  std::vector<PairRef> out;
  for (std::size_t j = 0; j < s.candidates.size(); ++j) {
    for (std::size_t k = j + 1; k < s.candidates.size(); ++k) {
      const bool tied = j < s.scores.size() && k < s.scores.size() && s.scores[j] == s.scores[k];
      if (!tied) out.push_back({j, k});
    }
  }
  return out;
}

std::vector<std::string> prm_vocabulary(std::span<const RankedExample> data) {
  std::set<std::string> words;
  const auto add = [&](std::string_view text) {
    for (auto& t : whitespace_tokens(text)) words.insert(std::move(t));
  };
  for (const auto& ex : data) {
    add(ex.instruction.instruction);
    add(ex.instruction.input);
    for (const auto& c : ex.ranked.candidates) add(c.text);
  }
  return {words.begin(), words.end()};
}

}  // namespace

double pairwise_accuracy(const ResponseScorer& scorer, std::span<const RankedExample> data) {
  std::size_t total = 0, right = 0;
  for (const auto& ex : data) {
    const auto pairs = strict_pairs(ex.ranked);
    if (pairs.empty()) continue;
    std::vector<double> s;
    for (const auto& c : ex.ranked.candidates) s.push_back(scorer.score(ex.instruction, c.text));
    for (const auto& p : pairs) {
      ++total;
      if (s[p.j] > s[p.k]) ++right;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(right) / static_cast<double>(total);
}

PrmModel train_prm(std::span<const RankedExample> judge_data, const PrmHyper& hyper, PrmTrainReport* report,
                   const std::string& provenance) {
  hyper.validate();
  PrmTrainReport rep;
  std::vector<std::string> ids;
  for (const auto& ex : judge_data) {
    if (ex.ranked.ranking_source != RankingSource::judge) {
      throw ValidationError("ranking_source", "PRM training needs judge rankings, got '" +
                                                  std::string(to_string(ex.ranked.ranking_source)) + "' for '" +
                                                  ex.ranked.instruction_id + "'");
    }
    ids.push_back(ex.ranked.instruction_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(hyper.seed);
  rng.shuffle(std::span<std::string>(ids));
  std::size_t n_held = static_cast<std::size_t>(std::ceil(hyper.heldout_fraction * static_cast<double>(ids.size())));
  if (ids.size() < 2) n_held = 0;
  n_held = std::min(n_held, ids.size() > 0 ? ids.size() - 1 : 0);
  const std::set<std::string> held(ids.end() - static_cast<std::ptrdiff_t>(n_held), ids.end());
  rep.heldout_ids.assign(held.begin(), held.end());

  std::vector<RankedExample> train, test;
  for (const auto& ex : judge_data) {
    if (ex.ranked.candidates.size() < 2) {
      ++rep.skipped_sets;
      continue;
    }
    (held.contains(ex.ranked.instruction_id) ? test : train).push_back(ex);
  }
  for (const auto& ex : train) rep.train_pairs += strict_pairs(ex.ranked).size();
  for (const auto& ex : test) rep.heldout_pairs += strict_pairs(ex.ranked).size();
  if (rep.train_pairs == 0) throw NoTrainablePairsError("judge data has no trainable pairs");

  PrmConfig cfg = hyper.model;
  PrmModel model(prm_vocabulary(train), cfg);
  model.provenance = provenance;
  AdamW opt(model.parameters().size(), 0.9, 0.999, 1e-8, 0.0);
  std::vector<double> grad(model.parameters().size());
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (const auto idx : order) {
      const auto& ex = train[idx];
      const auto pairs = strict_pairs(ex.ranked);
      if (pairs.empty()) continue;
      std::vector<double> s;
      for (const auto& c : ex.ranked.candidates) s.push_back(model.score(ex.instruction, c.text));
      std::vector<double> ds(s.size(), 0.0);
      double loss = 0.0;
      for (const auto& p : pairs) {
        const double arg = s[p.k] - s[p.j] + hyper.margin * static_cast<double>(p.k - p.j);
        if (arg > 0.0) {
          loss += arg;
          ds[p.k] += 1.0;
          ds[p.j] -= 1.0;
        }
      }
      epoch_loss += loss;
      if (loss == 0.0) continue;
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t c = 0; c < s.size(); ++c) {
        if (ds[c] != 0.0) model.accumulate_score_gradient(ex.instruction, ex.ranked.candidates[c].text, ds[c], grad);
      }
      opt.step(model.parameters(), grad, hyper.learning_rate);
    }
    rep.epoch_losses.push_back(epoch_loss);
  }
  rep.train_accuracy = pairwise_accuracy(model, train);
  rep.heldout_accuracy = pairwise_accuracy(model, test);
  if (report) *report = std::move(rep);
  return model;
}

RankedSet prm_rank(const ResponseScorer& scorer, const InstructionRecord& instruction,
                   const std::vector<CandidateResponse>& candidates) {
  if (candidates.empty()) throw ValidationError("candidates", "prm_rank needs at least one candidate");
  std::vector<double> scores;
  for (const auto& c : candidates) {
    const double s = scorer.score(instruction, c.text);
    if (!std::isfinite(s)) throw DomainError("prm_rank: non-finite score for '" + instruction.id + "'");
    scores.push_back(s);
  }
  return make_ranked_set(instruction.id, candidates, scores, RankingSource::prm);
}

}  // namespace rankft
