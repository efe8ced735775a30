#include "rankft/tiny_lm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rankft/checkpoint.hpp"
#include "rankft/errors.hpp"
#include "rankft/json_io.hpp"

namespace rankft {
namespace {

Json config_to_json(const TinyLmConfig& c) {
  return Json{{"kind", TinyLm::kKind},       {"embed_dim", c.embed_dim}, {"hidden_dim", c.hidden_dim},
              {"max_new_tokens", c.max_new_tokens}, {"init_std", c.init_std},   {"seed", c.seed}};
}

TinyLmConfig config_from_json(const Json& j) {
  TinyLmConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.max_new_tokens = j.at("max_new_tokens").get<int>();
  c.init_std = j.at("init_std").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

TinyLm::TinyLm(std::vector<std::string> vocabulary, const TinyLmConfig& config) : config_(config) {
  if (config.embed_dim < 1 || config.hidden_dim < 1 || config.max_new_tokens < 1) {
    throw ValidationError("config", "tiny_lm dimensions must be positive");
  }
  vocab_.emplace_back(kUnk);
  vocab_.emplace_back(kBos);
  for (auto& tok : vocabulary) {
    if (tok == kUnk || tok == kBos) throw ValidationError("vocabulary", "special tokens are implicit");
    vocab_.push_back(std::move(tok));
  }
  build_index();
  Rng rng(config.seed);
  for (double& p : params_) p = rng.normal(0.0, config.init_std);
  // Biases start at zero.
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(layout_.b),
            params_.begin() + static_cast<std::ptrdiff_t>(layout_.u), 0.0);
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(layout_.c), params_.end(), 0.0);
}

TinyLm::TinyLm(std::vector<std::string> full_vocabulary, const TinyLmConfig& config, std::vector<double> params)
    : config_(config), vocab_(std::move(full_vocabulary)) {
  build_index();
  if (params.size() != params_.size()) throw ParseError(0, "tiny_lm checkpoint has wrong parameter count");
  params_ = std::move(params);
}

void TinyLm::build_index() {
  index_.clear();
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<int>(i)).second) {
      throw ValidationError("vocabulary", "duplicate token '" + vocab_[i] + "'");
    }
  }
  const std::size_t v = vocab_.size();
  const std::size_t d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  layout_.embed = 0;
  layout_.context = layout_.embed + v * d;
  layout_.w = layout_.context + v * d;
  layout_.b = layout_.w + h * 2 * d;
  layout_.u = layout_.b + h;
  layout_.c = layout_.u + v * h;
  layout_.total = layout_.c + v;
  params_.assign(layout_.total, 0.0);
}

TinyLm TinyLm::load(const std::filesystem::path& path) {
  auto blob = read_checkpoint(path);
  const auto j = Json::parse(blob.config_json);
  if (j.at("kind").get<std::string>() != kKind) throw ParseError(0, path.string() + ": not a tiny_lm checkpoint");
  return TinyLm(std::move(blob.vocabulary), config_from_json(j), std::move(blob.parameters));
}

void TinyLm::save(const std::filesystem::path& path) const {
  CheckpointBlob blob;
  blob.config_json = config_to_json(config_).dump();
  blob.vocabulary = vocab_;
  blob.parameters = params_;
  write_checkpoint(path, blob);
}

int TinyLm::token_id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? 0 : it->second;
}

Tokens TinyLm::tokenize(std::string_view text) const { return whitespace_tokens(text); }

std::vector<int> TinyLm::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : whitespace_tokens(text)) ids.push_back(token_id(tok));
  return ids;
}

std::vector<int> TinyLm::encode_prompt(const InstructionRecord& prompt) const {
  auto ids = encode(prompt.instruction);
  const auto input = encode(prompt.input);
  ids.insert(ids.end(), input.begin(), input.end());
  return ids;
}

void TinyLm::context_vector(const std::vector<int>& prompt_ids, std::span<double> ctx) const {
  const std::size_t d = ctx.size();
  std::fill(ctx.begin(), ctx.end(), 0.0);
  if (prompt_ids.empty()) return;
  for (int id : prompt_ids) {
    const double* row = &params_[layout_.context + static_cast<std::size_t>(id) * d];
    for (std::size_t i = 0; i < d; ++i) ctx[i] += row[i];
  }
  const double inv = 1.0 / static_cast<double>(prompt_ids.size());
  for (double& x : ctx) x *= inv;
}

void TinyLm::forward_step(int prev, std::span<const double> ctx, std::span<double> hidden,
                          std::span<double> logprobs) const {
  const std::size_t d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  const std::size_t v = vocab_.size();
  const double* emb = &params_[layout_.embed + static_cast<std::size_t>(prev) * d];
  for (std::size_t k = 0; k < h; ++k) {
    const double* wrow = &params_[layout_.w + k * 2 * d];
    double z = params_[layout_.b + k];
    for (std::size_t i = 0; i < d; ++i) z += wrow[i] * emb[i];
    for (std::size_t i = 0; i < d; ++i) z += wrow[d + i] * ctx[i];
    hidden[k] = std::tanh(z);
  }
  double max_logit = -INFINITY;
  for (std::size_t t = 0; t < v; ++t) {
    const double* urow = &params_[layout_.u + t * h];
    double z = params_[layout_.c + t];
    for (std::size_t k = 0; k < h; ++k) z += urow[k] * hidden[k];
    logprobs[t] = z;
    max_logit = std::max(max_logit, z);
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < v; ++t) sum += std::exp(logprobs[t] - max_logit);
  const double lse = max_logit + std::log(sum);
  for (std::size_t t = 0; t < v; ++t) logprobs[t] -= lse;
}

std::vector<double> TinyLm::token_logprobs(const InstructionRecord& prompt, std::string_view response) const {
  const auto ids = encode(response);
  const auto prompt_ids = encode_prompt(prompt);
  std::vector<double> ctx(static_cast<std::size_t>(config_.embed_dim));
  std::vector<double> hidden(static_cast<std::size_t>(config_.hidden_dim));
  std::vector<double> lp(vocab_.size());
  context_vector(prompt_ids, ctx);
  std::vector<double> out;
  out.reserve(ids.size());
  int prev = 1;
  for (int y : ids) {
    forward_step(prev, ctx, hidden, lp);
    out.push_back(lp[static_cast<std::size_t>(y)]);
    prev = y;
  }
  return out;
}

void TinyLm::accumulate_logprob_gradient(const InstructionRecord& prompt, std::string_view response, double weight,
                                         std::span<double> grad) const {
  if (grad.size() != params_.size()) throw DomainError("gradient buffer has wrong size");
  if (weight == 0.0) return;
  const std::size_t d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  const std::size_t v = vocab_.size();
  const auto ids = encode(response);
  const auto prompt_ids = encode_prompt(prompt);

  std::vector<double> ctx(d), hidden(h), lp(v), dlogits(v), dz(h), dctx(d, 0.0);
  context_vector(prompt_ids, ctx);
  int prev = 1;
  for (int y : ids) {
    forward_step(prev, ctx, hidden, lp);
    for (std::size_t t = 0; t < v; ++t) dlogits[t] = -weight * std::exp(lp[t]);
    dlogits[static_cast<std::size_t>(y)] += weight;

    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t t = 0; t < v; ++t) {
      const double g = dlogits[t];
      const double* urow = &params_[layout_.u + t * h];
      double* gu = &grad[layout_.u + t * h];
      for (std::size_t k = 0; k < h; ++k) {
        gu[k] += g * hidden[k];
        dz[k] += g * urow[k];
      }
      grad[layout_.c + t] += g;
    }
    const double* emb = &params_[layout_.embed + static_cast<std::size_t>(prev) * d];
    double* gemb = &grad[layout_.embed + static_cast<std::size_t>(prev) * d];
    for (std::size_t k = 0; k < h; ++k) {
      dz[k] *= 1.0 - hidden[k] * hidden[k];
      const double* wrow = &params_[layout_.w + k * 2 * d];
      double* gw = &grad[layout_.w + k * 2 * d];
      for (std::size_t i = 0; i < d; ++i) {
        gw[i] += dz[k] * emb[i];
        gw[d + i] += dz[k] * ctx[i];
        gemb[i] += dz[k] * wrow[i];
        dctx[i] += dz[k] * wrow[d + i];
      }
      grad[layout_.b + k] += dz[k];
    }
    prev = y;
  }
  if (prompt_ids.empty()) return;
  const double inv = 1.0 / static_cast<double>(prompt_ids.size());
  for (int id : prompt_ids) {
    double* gc = &grad[layout_.context + static_cast<std::size_t>(id) * d];
    for (std::size_t i = 0; i < d; ++i) gc[i] += dctx[i] * inv;
  }
}

std::string TinyLm::sample(const InstructionRecord& prompt, double temperature, Rng& rng) const {
  if (!(temperature >= 0.0)) throw DomainError("temperature must be >= 0");
  const std::size_t v = vocab_.size();
  if (v <= 2) throw DomainError("tiny_lm has no generatable tokens");
  std::vector<double> ctx(static_cast<std::size_t>(config_.embed_dim));
  std::vector<double> hidden(static_cast<std::size_t>(config_.hidden_dim));
  std::vector<double> lp(v), weights(v - 2);
  context_vector(encode_prompt(prompt), ctx);
  Tokens out;
  int prev = 1;
  for (int step = 0; step < config_.max_new_tokens; ++step) {
    forward_step(prev, ctx, hidden, lp);
    std::size_t next = 2;
    if (temperature == 0.0) {
      for (std::size_t t = 3; t < v; ++t) {
        if (lp[t] > lp[next]) next = t;
      }
    } else {
      const double top = *std::max_element(lp.begin() + 2, lp.end());
      for (std::size_t t = 2; t < v; ++t) weights[t - 2] = std::exp((lp[t] - top) / temperature);
      next = 2 + rng.categorical(weights);
    }
    out.push_back(vocab_[next]);
    prev = static_cast<int>(next);
  }
  return join_tokens(out);
}

std::vector<std::string> build_vocabulary(std::span<const InstructionRecord> records,
                                          std::span<const std::string> extra_texts) {
  std::set<std::string> tokens;
  auto add = [&](std::string_view text) {
    for (auto& t : whitespace_tokens(text)) tokens.insert(std::move(t));
  };
  for (const auto& r : records) {
    add(r.instruction);
    add(r.input);
    add(r.original_response);
  }
  for (const auto& t : extra_texts) add(t);
  tokens.erase(std::string(TinyLm::kUnk));
  tokens.erase(std::string(TinyLm::kBos));
  return {tokens.begin(), tokens.end()};
}

std::unique_ptr<PolicyModel> load_policy(const std::filesystem::path& path) {
  const auto blob = read_checkpoint(path);
  const auto kind = Json::parse(blob.config_json).at("kind").get<std::string>();
  if (kind == TinyLm::kKind) return std::make_unique<TinyLm>(TinyLm::load(path));
  throw ParseError(0, path.string() + ": unknown model kind '" + kind + "'");
}

}  // namespace rankft
