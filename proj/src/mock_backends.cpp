#include "rankft/mock_backends.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "rankft/eval.hpp"
#include "rankft/hashing.hpp"
#include "rankft/judge.hpp"
#include "rankft/openai_backend.hpp"
#include "rankft/rng.hpp"

namespace rankft {

std::uint64_t text_seed(std::string_view text) { return std::stoull(sha256_hex(text).substr(0, 16), nullptr, 16); }

const SyntheticWorld& SyntheticWorld::standard() {
  static const SyntheticWorld w{
      {"clear", "precise", "accurate", "helpful", "detailed", "relevant", "correct", "concise", "thorough",
       "specific", "structured", "useful"},
      {"um", "stuff", "things", "whatever", "maybe", "somehow", "etc", "like", "basically", "random", "vague",
       "unsure"},
      {"ocean", "volcano", "planet", "forest", "river", "desert", "glacier", "city", "bridge", "engine", "garden",
       "library", "market", "island", "canyon", "harbor"}};
  return w;
}

bool SyntheticWorld::is_good(std::string_view token) const {
  return std::find(good.begin(), good.end(), token) != good.end();
}

double SyntheticWorld::quality(std::string_view text) const {
  const auto tokens = whitespace_tokens(text);
  if (tokens.empty()) return 0.0;
  std::size_t g = 0;
  for (const auto& t : tokens) g += is_good(t) ? 1 : 0;
  return static_cast<double>(g) / static_cast<double>(tokens.size());
}

std::vector<InstructionRecord> make_synthetic_instructions(int count, std::uint64_t seed, const SyntheticWorld& world) {
  if (count < 0) throw DomainError("make_synthetic_instructions: count must be >= 0");
  Rng rng(seed);
  std::vector<InstructionRecord> out;
  for (int i = 0; i < count; ++i) {
    InstructionRecord r;
    char id[16];
    std::snprintf(id, sizeof id, "syn-%04d", i);
    r.id = id;
    const auto& topic = world.topics[rng.below(world.topics.size())];
    r.instruction = "Describe the " + topic + " briefly.";
    if (rng.uniform() < 0.3) r.input = world.topics[rng.below(world.topics.size())];
    const int len = 4 + static_cast<int>(rng.below(4));
    Tokens words;
    for (int k = 0; k < len; ++k) words.push_back(world.good[rng.below(world.good.size())]);
    r.original_response = join_tokens(words);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- scripted ----

ScriptedBackend::ScriptedBackend(std::string id, bool logprobs) : id_(std::move(id)), logprobs_(logprobs) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_fixture(const std::filesystem::path& path, std::string id) {
  auto backend = std::make_shared<ScriptedBackend>(std::move(id));
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  backend->logprobs_ = j.value("logprobs", true);
  for (const auto& entry : j.at("replies")) {
    auto reply = entry.at("completion").get<Completion>();
    if (entry.contains("contains")) {
      backend->on_prompt_containing(entry["contains"].get<std::string>(), std::move(reply));
    } else {
      backend->push(std::move(reply));
    }
  }
  return backend;
}

void ScriptedBackend::push(Completion reply) {
  std::lock_guard lock(mu_);
  queue_.push_back(std::move(reply));
}

void ScriptedBackend::push_text(std::string text) {
  Completion c;
  c.choices.push_back({std::move(text), {}, std::nullopt});
  push(std::move(c));
}

void ScriptedBackend::on_prompt_containing(std::string needle, Completion reply) {
  std::lock_guard lock(mu_);
  keyed_.emplace_back(std::move(needle), std::move(reply));
}

Completion ScriptedBackend::complete(const CompletionRequest& request, const std::string&) {
  count();
  std::lock_guard lock(mu_);
  for (const auto& [needle, reply] : keyed_) {
    if (request.prompt.find(needle) != std::string::npos) return reply;
  }
  if (queue_.empty()) throw TransportError("scripted backend '" + id_ + "' has no reply left", false);
  Completion c = std::move(queue_.front());
  queue_.pop_front();
  return c;
}

// ---- synthetic teacher ----

namespace {

std::uint64_t request_seed(std::uint64_t base, const CompletionRequest& req) {
  return base ^ text_seed(req.prompt) ^ (static_cast<std::uint64_t>(req.attempt) * 0x9E3779B97F4A7C15ULL) ^
         std::bit_cast<std::uint64_t>(req.temperature);
}

}  // namespace

SyntheticTeacher::SyntheticTeacher(std::uint64_t seed, SyntheticWorld world) : seed_(seed), world_(std::move(world)) {}

Completion SyntheticTeacher::complete(const CompletionRequest& request, const std::string&) {
  count();
  Rng rng(request_seed(seed_, request));
  Completion out;
  out.prompt_tokens = static_cast<int>(whitespace_tokens(request.prompt).size());
  for (int i = 0; i < request.n; ++i) {
    const double q = rng.uniform();
    const int len = 3 + static_cast<int>(std::lround(6.0 * q));
    Choice ch;
    Tokens words;
    for (int k = 0; k < len; ++k) {
      const bool good = rng.uniform() < 0.25 + 0.7 * q;
      const auto& pool = good ? world_.good : world_.filler;
      words.push_back(pool[rng.below(pool.size())]);
      ch.token_logprobs.push_back(good ? -0.4 - 0.2 * rng.uniform() : -1.6 - 0.4 * rng.uniform());
    }
    ch.text = join_tokens(words);
    out.completion_tokens += len;
    out.choices.push_back(std::move(ch));
  }
  return out;
}

// ---- synthetic judge ----

std::vector<std::string> extract_judge_responses(std::string_view prompt) {
  std::vector<std::string> out;
  const auto footer = prompt.rfind("\n\nWe would like you to rate Response");
  if (footer == std::string_view::npos) return out;
  for (int k = 0; k < kMaxJudgeCandidates; ++k) {
    const std::string head = "###Response " + std::to_string(k) + ":\n";
    const auto start = prompt.find(head);
    if (start == std::string_view::npos || start > footer) break;
    const std::size_t body = start + head.size();
    auto end = prompt.find("\n\n###Response " + std::to_string(k + 1) + ":\n", body);
    if (end == std::string_view::npos || end > footer) end = footer;
    out.emplace_back(prompt.substr(body, end - body));
  }
  return out;
}

SyntheticJudge::SyntheticJudge(Options options, SyntheticWorld world)
    : options_(options), world_(std::move(world)) {}

Completion SyntheticJudge::complete(const CompletionRequest& request, const std::string&) {
  count();
  Completion out;
  out.prompt_tokens = static_cast<int>(whitespace_tokens(request.prompt).size());
  if (options_.always_garbage || (options_.garbage_first && request.attempt == 0)) {
    out.choices.push_back({"I am unable to rank these responses.", {}, std::nullopt});
    return out;
  }
  const auto responses = extract_judge_responses(request.prompt);
  if (responses.empty()) {
    out.choices.push_back({"No responses were provided.", {}, std::nullopt});
    return out;
  }
  Rng rng(options_.seed ^ text_seed(request.prompt));
  JudgeVerdict v;
  v.totals.assign(responses.size(), std::nullopt);
  v.subscores.assign(responses.size(), {});
  std::set<std::string> seen;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const double noise = options_.noise > 0 ? rng.normal(0.0, options_.noise) : 0.0;
    if (!seen.insert(responses[i]).second) continue;
    const double q = world_.quality(responses[i]) + noise;
    const int total = static_cast<int>(std::clamp(std::lround(q * 15.0), 0L, 15L));
    const int base = total / 3, rem = total % 3;
    v.subscores[i] = {base + (rem > 0), base + (rem > 1), base};
    v.totals[i] = total;
    kept.push_back(i);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) { return *v.totals[a] > *v.totals[b]; });
  for (auto i : kept) v.rank.push_back(static_cast<int>(i));
  Tokens ref;
  for (int k = 0; k < 6; ++k) ref.push_back(world_.good[rng.below(world_.good.size())]);
  std::string text = "The instruction requires open-ended responses.\n###Response 4:\n" + join_tokens(ref) +
                     "\n\nResponse 4: [5 + 5 + 5 = 15]\n" + render_judge_reply(v);
  out.completion_tokens = static_cast<int>(whitespace_tokens(text).size());
  out.choices.push_back({std::move(text), {}, std::nullopt});
  return out;
}

// ---- pairwise ----

PairwiseMockJudge::PairwiseMockJudge(Rule rule, SyntheticWorld world) : rule_(rule), world_(std::move(world)) {}

std::string PairwiseMockJudge::id() const {
  switch (rule_) {
    case Rule::longer: return "pairwise-longer";
    case Rule::quality: return "pairwise-quality";
    case Rule::first_shown: return "pairwise-first";
  }
  return "pairwise";
}

Completion PairwiseMockJudge::complete(const CompletionRequest& request, const std::string&) {
  count();
  Completion out;
  const auto parts = split_compare_prompt(request.prompt);
  if (!parts) {
    out.choices.push_back({"The prompt does not contain two answers.", {}, std::nullopt});
    return out;
  }
  int pick = 0;
  switch (rule_) {
    case Rule::longer: {
      const auto a = whitespace_tokens(parts->answer_1).size(), b = whitespace_tokens(parts->answer_2).size();
      pick = a > b ? 1 : b > a ? 2 : 0;
      break;
    }
    case Rule::quality: {
      const double a = world_.quality(parts->answer_1), b = world_.quality(parts->answer_2);
      pick = a > b ? 1 : b > a ? 2 : 0;
      break;
    }
    case Rule::first_shown: pick = 1; break;
  }
  out.choices.push_back({"Both answers were compared.\nwinner: " + (pick == 0 ? std::string("tie") : std::to_string(pick)),
                         {}, std::nullopt});
  return out;
}

// ---- factory ----

std::shared_ptr<LlmBackend> make_backend(const Json& config) {
  const Json cfg = config.is_string() ? Json{{"type", config.get<std::string>()}} : config;
  const auto type = cfg.at("type").get<std::string>();
  if (type == "synthetic_teacher") return std::make_shared<SyntheticTeacher>(cfg.value("seed", std::uint64_t{0}));
  if (type == "synthetic_judge") {
    SyntheticJudge::Options o;
    o.seed = cfg.value("seed", std::uint64_t{0});
    o.noise = cfg.value("noise", 0.0);
    o.garbage_first = cfg.value("garbage_first", false);
    return std::make_shared<SyntheticJudge>(o);
  }
  if (type == "pairwise_longer") return std::make_shared<PairwiseMockJudge>(PairwiseMockJudge::Rule::longer);
  if (type == "pairwise_quality") return std::make_shared<PairwiseMockJudge>(PairwiseMockJudge::Rule::quality);
  if (type == "pairwise_first") return std::make_shared<PairwiseMockJudge>(PairwiseMockJudge::Rule::first_shown);
  if (type == "scripted") return ScriptedBackend::from_fixture(cfg.at("fixture").get<std::string>());
  if (type == "openai") {
    OpenAiBackend::Options o;
    o.base_url = cfg.value("base_url", o.base_url);
    o.api = cfg.value("api", std::string("completions")) == "chat" ? OpenAiBackend::Api::chat
                                                                     : OpenAiBackend::Api::completions;
    o.api_key_env = cfg.value("api_key_env", o.api_key_env);
    o.logprobs = cfg.value("logprobs", o.logprobs);
    return std::make_shared<OpenAiBackend>(o);
  }
  throw ValidationError("backend.type", "unknown backend type '" + type + "'");
}

}  // namespace rankft
