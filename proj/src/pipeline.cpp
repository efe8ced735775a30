#include "rankft/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <spdlog/spdlog.h>

#include "rankft/hashing.hpp"
#include "rankft/judge.hpp"
#include "rankft/mock_backends.hpp"
#include "rankft/prm.hpp"
#include "rankft/prob_rank.hpp"
#include "rankft/sampler.hpp"
#include "rankft/tiny_lm.hpp"
#include "rankft/trainer.hpp"

namespace rankft {

// ---- slices and mixing ----

std::pair<std::size_t, std::size_t> SliceSpec::resolve(std::size_t size) const {
  if (from_end) {
    const std::size_t n = count.value_or(size);
    if (n > size) {
      throw ValidationError("slice", "last " + std::to_string(n) + " of " + std::to_string(size) + " records requested");
    }
    return {size - n, size};
  }
  if (start > size) {
    throw ValidationError("slice", "start " + std::to_string(start) + " beyond " + std::to_string(size) + " records");
  }
  const std::size_t n = count.value_or(size - start);
  if (n > size - start) {
    throw ValidationError("slice", std::to_string(n) + " records from " + std::to_string(start) + " exceed " +
                                       std::to_string(size));
  }
  return {start, start + n};
}

void to_json(Json& j, const SliceSpec& s) {
  if (s.from_end) {
    j = Json{{"last", s.count.value_or(0)}};
    return;
  }
  j = Json{{"start", s.start}};
  if (s.count) j["count"] = *s.count;
}

void from_json(const Json& j, SliceSpec& s) {
  s = SliceSpec{};
  if (!j.is_object()) throw ValidationError("slice", "must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "start" && key != "count" && key != "last") throw ValidationError("slice." + key, "unknown member");
    if (!value.is_number_integer() || value.get<std::int64_t>() < 0) throw ValidationError("slice." + key, "must be a non-negative integer");
  }
  if (j.contains("last")) {
    if (j.contains("start") || j.contains("count")) {
      throw ValidationError("slice", "'last' cannot be combined with 'start' or 'count'");
    }
    s.from_end = true;
    s.count = j["last"].get<std::size_t>();
    return;
  }
  s.start = j.value("start", std::size_t{0});
  if (j.contains("count")) s.count = j["count"].get<std::size_t>();
}

std::vector<RankedSet> mix_datasets(const std::vector<MixPart>& parts, bool allow_duplicates) {
  std::vector<RankedSet> out;
  std::set<std::string> seen;
  for (const auto& part : parts) {
    const auto [begin, end] = part.slice.resolve(part.records.size());
    for (std::size_t i = begin; i < end; ++i) {
      RankedSet r = part.records[i];
      r.provenance = part.tag;
      if (!seen.insert(r.instruction_id).second) {
        if (!allow_duplicates) {
          throw ValidationError("instruction_id", "'" + r.instruction_id + "' appears in more than one slice");
        }
        r.provenance += ";duplicate";
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---- stage kinds ----

std::string_view to_string(StageKind k) {
  switch (k) {
    case StageKind::mle_finetune: return "mle_finetune";
    case StageKind::prob_rank_build: return "prob_rank_build";
    case StageKind::prob_rank_train: return "prob_rank_train";
    case StageKind::sample_and_judge_build: return "sample_and_judge_build";
    case StageKind::contextual_rank_train: return "contextual_rank_train";
    case StageKind::prm_build_and_rank: return "prm_build_and_rank";
    case StageKind::mix_datasets: return "mix_datasets";
  }
  return "?";
}

StageKind parse_stage_kind(std::string_view s) {
  for (auto k : {StageKind::mle_finetune, StageKind::prob_rank_build, StageKind::prob_rank_train,
                 StageKind::sample_and_judge_build, StageKind::contextual_rank_train, StageKind::prm_build_and_rank,
                 StageKind::mix_datasets}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("kind", "unknown stage kind '" + std::string(s) + "'");
}

namespace {

enum class ArtifactType { instructions, candidates, ranked, skips, checkpoint, report };

std::string_view type_name(ArtifactType t) {
  switch (t) {
    case ArtifactType::instructions: return "instructions";
    case ArtifactType::candidates: return "candidates";
    case ArtifactType::ranked: return "ranked";
    case ArtifactType::skips: return "skips";
    case ArtifactType::checkpoint: return "checkpoint";
    case ArtifactType::report: return "report";
  }
  return "?";
}

std::string_view extension(ArtifactType t) {
  switch (t) {
    case ArtifactType::checkpoint: return ".ckpt";
    case ArtifactType::report: return ".json";
    default: return ".jsonl";
  }
}

struct SlotDef {
  std::string name;
  ArtifactType type;
  bool required;
};

struct KindDef {
  std::vector<SlotDef> inputs;
  std::vector<SlotDef> outputs;
  std::string backend;  // role, empty when none
};

const KindDef& kind_def(StageKind k) {
  using A = ArtifactType;
  static const std::map<StageKind, KindDef> defs{
      {StageKind::mle_finetune,
       {{{"instructions", A::instructions, true}, {"init", A::checkpoint, false}, {"ranked", A::ranked, false}},
        {{"checkpoint", A::checkpoint, true}, {"report", A::report, false}},
        ""}},
      {StageKind::prob_rank_build,
       {{{"instructions", A::instructions, true}},
        {{"candidates", A::candidates, false}, {"ranked", A::ranked, true}},
        "teacher"}},
      {StageKind::prob_rank_train,
       {{{"instructions", A::instructions, true}, {"ranked", A::ranked, true}, {"init", A::checkpoint, true}},
        {{"checkpoint", A::checkpoint, true}, {"report", A::report, false}},
        ""}},
      {StageKind::sample_and_judge_build,
       {{{"instructions", A::instructions, true}, {"model", A::checkpoint, true}},
        {{"candidates", A::candidates, false}, {"ranked", A::ranked, true}, {"skips", A::skips, false}},
        "judge"}},
      {StageKind::contextual_rank_train,
       {{{"instructions", A::instructions, true}, {"ranked", A::ranked, true}, {"init", A::checkpoint, true}},
        {{"checkpoint", A::checkpoint, true}, {"report", A::report, false}},
        ""}},
      {StageKind::prm_build_and_rank,
       {{{"instructions", A::instructions, true},
         {"judge_ranked", A::ranked, true},
         {"model", A::checkpoint, true}},
        {{"prm", A::checkpoint, false}, {"ranked", A::ranked, true}, {"report", A::report, false}},
        ""}},
      {StageKind::mix_datasets, {{}, {{"ranked", A::ranked, true}}, ""}},
  };
  return defs.at(k);
}

// ---- stage configuration ----

template <typename T>
T opt(const Json& cfg, const char* key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(key, "has the wrong type");
  }
}

void check_keys(const Json& cfg, std::initializer_list<std::string_view> allowed) {
  if (!cfg.is_object()) throw ValidationError("config", "must be an object");
  for (const auto& [key, _] : cfg.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("config." + key, "unknown setting");
    }
  }
}

RankHyper parse_hyper(const Json& cfg, std::uint64_t seed) {
  RankHyper h;
  h.margin = opt(cfg, "margin", h.margin);
  h.lambda = opt(cfg, "lambda", h.lambda);
  h.learning_rate = opt(cfg, "learning_rate", h.learning_rate);
  h.epochs = opt(cfg, "epochs", h.epochs);
  h.batch_size = opt(cfg, "batch_size", h.batch_size);
  h.warmup_steps = opt(cfg, "warmup_steps", h.warmup_steps);
  h.weight_decay = opt(cfg, "weight_decay", h.weight_decay);
  h.seed = seed;
  h.validate();
  return h;
}

DiversityPolicy parse_policy(const Json& cfg) {
  DiversityPolicy p;
  if (!cfg.is_null()) {
    check_keys(cfg, {"n", "tau", "temperature", "temperature_step", "max_trials"});
    p.n = opt(cfg, "n", p.n);
    p.tau = opt(cfg, "tau", p.tau);
    p.temperature_start = opt(cfg, "temperature", p.temperature_start);
    p.temperature_step = opt(cfg, "temperature_step", p.temperature_step);
    p.max_trials = opt(cfg, "max_trials", p.max_trials);
  }
  p.validate();
  return p;
}

PrmHyper parse_prm_hyper(const Json& cfg, std::uint64_t seed) {
  PrmHyper h;
  if (!cfg.is_null()) {
    check_keys(cfg, {"margin", "learning_rate", "epochs", "heldout_fraction", "hidden_dim"});
    h.margin = opt(cfg, "margin", h.margin);
    h.learning_rate = opt(cfg, "learning_rate", h.learning_rate);
    h.epochs = opt(cfg, "epochs", h.epochs);
    h.heldout_fraction = opt(cfg, "heldout_fraction", h.heldout_fraction);
    h.model.hidden_dim = opt(cfg, "hidden_dim", h.model.hidden_dim);
  }
  h.seed = seed;
  h.model.seed = seed;
  h.validate();
  return h;
}

std::optional<SliceSpec> parse_slice(const Json& cfg) {
  if (!cfg.contains("slice")) return std::nullopt;
  return cfg.at("slice").get<SliceSpec>();
}

std::vector<RankingSource> parse_sources(const Json& cfg, StageKind kind) {
  if (!cfg.contains("ranking_sources")) {
    if (kind == StageKind::prob_rank_train) return {RankingSource::probabilistic};
    return {RankingSource::judge, RankingSource::prm};
  }
  std::vector<RankingSource> out;
  for (const auto& s : cfg.at("ranking_sources")) out.push_back(parse_ranking_source(s.get<std::string>()));
  return out;
}

// Parses a stage config fully, so malformed settings surface before running.
void check_config(const StageSpec& s) {
  const Json& c = s.config;
  switch (s.kind) {
    case StageKind::mle_finetune:
      check_keys(c, {"margin", "lambda", "learning_rate", "epochs", "batch_size", "warmup_steps", "weight_decay",
                     "slice"});
      parse_hyper(c, 0);
      parse_slice(c);
      break;
    case StageKind::prob_rank_train:
    case StageKind::contextual_rank_train:
      check_keys(c, {"margin", "lambda", "learning_rate", "epochs", "batch_size", "warmup_steps", "weight_decay",
                     "ranking_sources"});
      parse_hyper(c, 0);
      parse_sources(c, s.kind);
      break;
    case StageKind::prob_rank_build: {
      check_keys(c, {"n", "beta", "tokenizer", "slice"});
      if (opt(c, "n", 4) < 1) throw ValidationError("n", "must be >= 1");
      if (!(opt(c, "beta", kDefaultBeta) > 0.0)) throw ValidationError("beta", "must be > 0");
      parse_slice(c);
      break;
    }
    case StageKind::sample_and_judge_build:
      check_keys(c, {"sampler", "slice"});
      parse_policy(c.value("sampler", Json()));
      if (parse_policy(c.value("sampler", Json())).n > kMaxJudgeCandidates) {
        throw ValidationError("sampler.n", "the judge prompt takes at most 4 responses");
      }
      parse_slice(c);
      break;
    case StageKind::prm_build_and_rank:
      check_keys(c, {"prm", "sampler", "slice"});
      parse_prm_hyper(c.value("prm", Json()), 0);
      parse_policy(c.value("sampler", Json()));
      parse_slice(c);
      break;
    case StageKind::mix_datasets: {
      check_keys(c, {"parts", "allow_duplicates"});
      if (!c.contains("parts") || !c["parts"].is_array() || c["parts"].empty()) {
        throw ValidationError("parts", "must be a non-empty list");
      }
      for (const auto& p : c["parts"]) {
        check_keys(p, {"input", "slice", "tag"});
        const auto slot = opt<std::string>(p, "input", "");
        if (!s.inputs.contains(slot)) throw ValidationError("parts.input", "'" + slot + "' is not an input slot");
        if (p.contains("slice")) p["slice"].get<SliceSpec>();
      }
      opt(c, "allow_duplicates", false);
      break;
    }
  }
}

bool safe_name(const std::string& s) {
  return !s.empty() && s != "." && s != ".." && std::all_of(s.begin(), s.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
  });
}

void validate_impl(const RecipeSpec& recipe, const std::set<std::string>& provided_roles) {
  if (recipe.stages.empty()) throw ValidationError("stages", "recipe has no stages");
  std::map<std::string, std::optional<ArtifactType>> known;  // artifact -> type (nullopt for external)
  for (const auto& [name, path] : recipe.external_inputs) {
    if (!safe_name(name)) throw ValidationError("inputs", "bad artifact name '" + name + "'");
    const auto resolved = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : recipe.base_dir / path;
    if (!std::filesystem::exists(resolved)) {
      throw ValidationError("inputs." + name, "external input '" + resolved.string() + "' does not exist");
    }
    known.emplace(name, std::nullopt);
  }
  std::set<std::string> stage_names;
  for (std::size_t i = 0; i < recipe.stages.size(); ++i) {
    const auto& s = recipe.stages[i];
    const std::string where = "stages[" + std::to_string(i) + "]";
    if (!safe_name(s.name)) throw ValidationError(where + ".name", "bad stage name '" + s.name + "'");
    if (!stage_names.insert(s.name).second) throw ValidationError(where + ".name", "duplicate stage '" + s.name + "'");
    const auto& def = kind_def(s.kind);
    for (const auto& [slot, artifact] : s.inputs) {
      const auto it = std::find_if(def.inputs.begin(), def.inputs.end(), [&](const SlotDef& d) { return d.name == slot; });
      if (s.kind != StageKind::mix_datasets && it == def.inputs.end()) {
        throw ValidationError(where + ".inputs." + slot, "stage kind " + std::string(to_string(s.kind)) + " has no such input");
      }
      const auto k = known.find(artifact);
      if (k == known.end()) {
        throw ValidationError(where + ".inputs." + slot,
                              "artifact '" + artifact + "' is neither an external input nor produced by an earlier stage");
      }
      const ArtifactType want = s.kind == StageKind::mix_datasets ? ArtifactType::ranked : it->type;
      if (k->second && *k->second != want) {
        throw ValidationError(where + ".inputs." + slot, "artifact '" + artifact + "' is " +
                                                             std::string(type_name(*k->second)) + ", expected " +
                                                             std::string(type_name(want)));
      }
    }
    for (const auto& d : def.inputs) {
      if (d.required && !s.inputs.contains(d.name)) throw ValidationError(where + ".inputs", "missing input '" + d.name + "'");
    }
    for (const auto& d : def.outputs) {
      if (d.required && !s.outputs.contains(d.name)) throw ValidationError(where + ".outputs", "missing output '" + d.name + "'");
    }
    for (const auto& [slot, artifact] : s.outputs) {
      const auto it = std::find_if(def.outputs.begin(), def.outputs.end(), [&](const SlotDef& d) { return d.name == slot; });
      if (it == def.outputs.end()) throw ValidationError(where + ".outputs." + slot, "no such output");
      if (!safe_name(artifact)) throw ValidationError(where + ".outputs." + slot, "bad artifact name '" + artifact + "'");
      if (!known.emplace(artifact, it->type).second) {
        throw ValidationError(where + ".outputs." + slot, "artifact '" + artifact + "' is produced twice");
      }
    }
    if (!def.backend.empty() && !provided_roles.contains(def.backend) && !recipe.backends.contains(def.backend)) {
      throw ValidationError(where, "stage needs a '" + def.backend + "' backend");
    }
    try {
      check_config(s);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ".config." + e.field(), e.message());
    }
  }
}

}  // namespace

// ---- recipe JSON ----

void to_json(Json& j, const StageSpec& s) {
  j = Json{{"name", s.name}, {"kind", to_string(s.kind)}, {"inputs", s.inputs}, {"outputs", s.outputs}, {"config", s.config}};
}

void from_json(const Json& j, StageSpec& s) {
  if (!j.is_object()) throw ValidationError("stage", "must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "name" && key != "kind" && key != "inputs" && key != "outputs" && key != "config") {
      throw ValidationError("stage." + key, "unknown member");
    }
  }
  try {
    s.name = j.at("name").get<std::string>();
    s.kind = parse_stage_kind(j.at("kind").get<std::string>());
    s.inputs = j.value("inputs", std::map<std::string, std::string>{});
    s.outputs = j.value("outputs", std::map<std::string, std::string>{});
  } catch (const Json::exception& e) {
    throw ValidationError("stage", e.what());
  }
  s.config = j.value("config", Json::object());
}

void to_json(Json& j, const RecipeSpec& r) {
  j = Json{{"name", r.name},       {"seed", r.seed},     {"inputs", r.external_inputs},
           {"backends", r.backends}, {"model", r.model}, {"stages", r.stages}};
}

void from_json(const Json& j, RecipeSpec& r) {
  if (!j.is_object()) throw ValidationError("recipe", "must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "name" && key != "seed" && key != "inputs" && key != "backends" && key != "model" && key != "stages") {
      throw ValidationError(key, "unknown recipe member");
    }
  }
  try {
    r.name = j.value("name", "recipe");
    r.seed = j.value("seed", std::uint64_t{0});
    r.external_inputs = j.value("inputs", std::map<std::string, std::string>{});
  } catch (const Json::exception& e) {
    throw ValidationError("recipe", e.what());
  }
  r.backends = j.value("backends", Json::object());
  r.model = j.value("model", Json::object());
  if (!j.contains("stages") || !j["stages"].is_array()) throw ValidationError("stages", "must be a list");
  r.stages.clear();
  for (const auto& s : j["stages"]) r.stages.push_back(s.get<StageSpec>());
}

RecipeSpec load_recipe(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  auto r = j.get<RecipeSpec>();
  r.base_dir = path.parent_path();
  return r;
}

void validate(const RecipeSpec& recipe) { validate_impl(recipe, {}); }

// ---- presets ----

std::vector<std::string> preset_names() {
  return {"tuna_p", "tuna_c", "tuna", "tuna_cp", "tuna_c_prm", "mix_tuna_52k", "mix_tuna_104k", "alpaca_mul"};
}

RecipeSpec make_preset(std::string_view name, const PresetOptions& o) {
  if (o.contextual > o.total) throw ValidationError("contextual", "must not exceed total");
  RecipeSpec r;
  r.name = std::string(name);
  r.seed = o.seed;
  r.external_inputs["instructions"] = o.instructions.string();
  r.backends = Json{{"teacher", o.teacher}, {"judge", o.judge}};
  r.model = o.model;
  const std::size_t rest = o.total - o.contextual;

  const auto hyper = [&](double lr, int epochs) {
    return Json{{"learning_rate", lr}, {"epochs", epochs}, {"batch_size", o.batch_size}, {"warmup_steps", o.warmup_steps}};
  };
  const auto sft = [&] {
    return StageSpec{"sft", StageKind::mle_finetune, {{"instructions", "instructions"}},
                     {{"checkpoint", "sft"}, {"report", "sft_report"}}, hyper(o.mle_learning_rate, o.mle_epochs)};
  };
  const auto prob_build = [&] {
    return StageSpec{"prob_build",
                     StageKind::prob_rank_build,
                     {{"instructions", "instructions"}},
                     {{"candidates", "teacher_candidates"}, {"ranked", "prob_ranked"}},
                     {{"n", 4}, {"beta", kDefaultBeta}, {"slice", {{"start", 0}, {"count", o.total}}}}};
  };
  const auto rank_train = [&](std::string stage, StageKind kind, std::string ranked, std::string init, std::string out,
                              double lr) {
    return StageSpec{std::move(stage),
                     kind,
                     {{"instructions", "instructions"}, {"ranked", std::move(ranked)}, {"init", std::move(init)}},
                     {{"checkpoint", out}, {"report", out + "_report"}},
                     hyper(lr, o.ranking_epochs)};
  };
  const auto judge_build = [&](std::string stage, std::string model, std::string suffix, std::size_t start) {
    return StageSpec{std::move(stage),
                     StageKind::sample_and_judge_build,
                     {{"instructions", "instructions"}, {"model", std::move(model)}},
                     {{"candidates", "student_candidates" + suffix},
                      {"ranked", "judge_ranked" + suffix},
                      {"skips", "judge_skips" + suffix}},
                     {{"slice", {{"start", start}, {"count", o.contextual}}}}};
  };
  const auto prm_stage = [&](Json slice) {
    return StageSpec{"prm_rank",
                     StageKind::prm_build_and_rank,
                     {{"instructions", "instructions"}, {"judge_ranked", "judge_ranked"}, {"model", "sft"}},
                     {{"prm", "prm"}, {"ranked", "prm_ranked"}, {"report", "prm_report"}},
                     {{"slice", std::move(slice)}}};
  };
  const double lr = o.ranking_learning_rate;

  if (name == "tuna_p") {
    r.stages = {sft(), prob_build(), rank_train("prob_train", StageKind::prob_rank_train, "prob_ranked", "sft", "tuna_p", lr)};
  } else if (name == "tuna_c") {
    r.stages = {sft(), judge_build("judge_build", "sft", "", 0),
                rank_train("contextual_train", StageKind::contextual_rank_train, "judge_ranked", "sft", "tuna_c", lr)};
  } else if (name == "tuna") {
    std::size_t start = 0;
    if (o.fresh_contextual_slice) {
      if (2 * o.contextual > o.total) throw ValidationError("contextual", "a fresh slice needs total >= 2 * contextual");
      start = o.contextual;
    }
    r.stages = {sft(), prob_build(),
                rank_train("prob_train", StageKind::prob_rank_train, "prob_ranked", "sft", "tuna_p", lr),
                judge_build("judge_build", "tuna_p", "", start),
                rank_train("contextual_train", StageKind::contextual_rank_train, "judge_ranked", "tuna_p", "tuna",
                           lr / 10.0)};
  } else if (name == "tuna_cp") {
    r.stages = {sft(), judge_build("judge_build", "sft", "", 0),
                rank_train("contextual_train", StageKind::contextual_rank_train, "judge_ranked", "sft", "tuna_c", lr),
                prob_build(),
                rank_train("prob_train", StageKind::prob_rank_train, "prob_ranked", "tuna_c", "tuna_cp", lr / 10.0)};
  } else if (name == "tuna_c_prm") {
    r.stages = {sft(), judge_build("judge_build", "sft", "", 0), prm_stage({{"start", 0}, {"count", o.total}}),
                rank_train("contextual_train", StageKind::contextual_rank_train, "prm_ranked", "sft", "tuna_c_prm", lr)};
  } else if (name == "mix_tuna_52k") {
    StageSpec mix{"mix",
                  StageKind::mix_datasets,
                  {{"judge", "judge_ranked"}, {"prob", "prob_ranked"}},
                  {{"ranked", "mixed_ranked"}},
                  {{"parts", Json::array({{{"input", "judge"}, {"slice", {{"start", 0}}}},
                                          {{"input", "prob"}, {"slice", {{"last", rest}}}}})}}};
    auto train = rank_train("mix_train", StageKind::contextual_rank_train, "mixed_ranked", "sft", "mix_tuna_52k", lr);
    train.config["ranking_sources"] = {"probabilistic", "judge"};
    r.stages = {sft(), prob_build(), judge_build("judge_build", "sft", "", 0), std::move(mix), std::move(train)};
  } else if (name == "mix_tuna_104k") {
    StageSpec mix{"mix",
                  StageKind::mix_datasets,
                  {{"judge", "judge_ranked"}, {"prm", "prm_ranked"}, {"prob", "prob_ranked"}},
                  {{"ranked", "mixed_ranked"}},
                  {{"parts", Json::array({{{"input", "judge"}}, {{"input", "prm"}}, {{"input", "prob"}}})},
                   {"allow_duplicates", true}}};
    auto train = rank_train("mix_train", StageKind::contextual_rank_train, "mixed_ranked", "sft", "mix_tuna_104k", lr / 2.0);
    train.config["ranking_sources"] = {"probabilistic", "judge", "prm"};
    r.stages = {sft(), prob_build(), judge_build("judge_build", "sft", "", 0), prm_stage({{"last", rest}}),
                std::move(mix), std::move(train)};
  } else if (name == "alpaca_mul") {
    StageSpec mul{"alpaca_mul", StageKind::mle_finetune,
                  {{"instructions", "instructions"}, {"ranked", "prob_ranked"}},
                  {{"checkpoint", "alpaca_mul"}, {"report", "alpaca_mul_report"}},
                  hyper(o.mle_learning_rate, o.mle_epochs)};
    r.stages = {prob_build(), std::move(mul)};
  } else {
    throw ValidationError("preset", "unknown preset '" + std::string(name) + "'");
  }
  return r;
}

// ---- running ----

namespace {

constexpr std::string_view kManifestFile = "manifest.json";
constexpr std::string_view kTimingsFile = "timings.json";
constexpr std::string_view kCacheDir = "cache";
constexpr std::string_view kArtifactDir = "artifacts";

struct Artifacts {
  std::filesystem::path workspace;
  std::map<std::string, std::filesystem::path> external;  // resolved
  std::map<std::string, ArtifactType> produced;

  std::filesystem::path relative(const std::string& name) const {
    return std::filesystem::path(kArtifactDir) / (name + std::string(extension(produced.at(name))));
  }
  std::filesystem::path path(const std::string& name) const {
    if (const auto it = external.find(name); it != external.end()) return it->second;
    return workspace / relative(name);
  }
};

Json cost_json(const CostEntry& c) {
  return Json{{"calls", c.calls},
              {"cache_hits", c.cache_hits},
              {"prompt_tokens", c.prompt_tokens},
              {"completion_tokens", c.completion_tokens},
              {"cost_usd", c.cost_usd}};
}

TinyLmConfig model_config(const Json& m, std::uint64_t seed) {
  TinyLmConfig c;
  c.embed_dim = opt(m, "embed_dim", c.embed_dim);
  c.hidden_dim = opt(m, "hidden_dim", c.hidden_dim);
  c.max_new_tokens = opt(m, "max_new_tokens", c.max_new_tokens);
  c.init_std = opt(m, "init_std", c.init_std);
  c.seed = seed;
  return c;
}

Json report_json(const TrainReport& r) {
  return Json{{"steps", r.steps},
              {"step_losses", r.step_losses},
              {"agreement_before", r.agreement_before},
              {"agreement_after", r.agreement_after},
              {"skipped_examples", r.skipped_examples}};
}

template <typename T>
std::vector<T> apply_slice(std::vector<T> xs, const std::optional<SliceSpec>& slice) {
  if (!slice) return xs;
  const auto [b, e] = slice->resolve(xs.size());
  return std::vector<T>(xs.begin() + static_cast<std::ptrdiff_t>(b), xs.begin() + static_cast<std::ptrdiff_t>(e));
}

class Runner {
 public:
  Runner(const RecipeSpec& recipe, std::filesystem::path workspace, const RunOptions& options)
      : recipe_(recipe), options_(options), ledger_(std::make_shared<CostLedger>()) {
    art_.workspace = std::move(workspace);
    seed_ = options.seed.value_or(recipe.seed);
    for (const auto& [name, path] : recipe.external_inputs) {
      art_.external[name] =
          std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : recipe.base_dir / path;
    }
    for (const auto& s : recipe.stages) {
      const auto& def = kind_def(s.kind);
      for (const auto& [slot, artifact] : s.outputs) {
        for (const auto& d : def.outputs) {
          if (d.name == slot) art_.produced[artifact] = d.type;
        }
      }
    }
  }

  RunResult run() {
    std::filesystem::create_directories(art_.workspace / kArtifactDir);
    Json previous = Json::object();
    if (std::filesystem::exists(art_.workspace / kManifestFile)) previous = read_manifest(art_.workspace);
    std::map<std::string, Json> prior;
    for (const auto& e : previous.value("stages", Json::array())) prior[e.at("name").get<std::string>()] = e;
    if (std::filesystem::exists(art_.workspace / kTimingsFile)) {
      timings_ = Json::parse(read_file(art_.workspace / kTimingsFile));
    }

    manifest_ = Json{{"format", "rankft-manifest"},
                     {"version", 1},
                     {"recipe", recipe_.name},
                     {"recipe_sha256", sha256_hex(Json(recipe_).dump())},
                     {"seed", seed_},
                     {"bookkeeping", {std::string(kManifestFile), std::string(kTimingsFile), std::string(kCacheDir)}},
                     {"external_inputs", Json::object()},
                     {"stages", Json::array()},
                     {"failed", nullptr}};
    for (const auto& [name, path] : art_.external) {
      manifest_["external_inputs"][name] = {{"path", recipe_.external_inputs.at(name)}, {"sha256", sha256_file(path)}};
    }

    RunResult result;
    for (const auto& stage : recipe_.stages) {
      const std::uint64_t stage_seed = seed_ ^ text_seed(stage.name);
      Json inputs = Json::object();
      for (const auto& [slot, artifact] : stage.inputs) {
        inputs[slot] = {{"artifact", artifact}, {"sha256", sha256_file(art_.path(artifact))}};
      }
      const Json key_doc{{"kind", to_string(stage.kind)},
                         {"config", stage.config},
                         {"seed", stage_seed},
                         {"inputs", inputs},
                         {"backend", backend_description(stage)},
                         {"model", stage.kind == StageKind::mle_finetune && !stage.inputs.contains("init") ? recipe_.model
                                                                                                          : Json()}};
      const std::string key = sha256_hex(key_doc.dump());

      if (const auto it = prior.find(stage.name); it != prior.end() && it->second.value("key", "") == key &&
                                                  outputs_intact(it->second)) {
        spdlog::info("stage {}: up to date, skipped", stage.name);
        manifest_["stages"].push_back(it->second);
        result.stages.push_back({stage.name, false});
      } else {
        spdlog::info("stage {}: running {}", stage.name, to_string(stage.kind));
        const auto t0 = std::chrono::steady_clock::now();
        Json entry{{"name", stage.name}, {"kind", to_string(stage.kind)}, {"key", key},
                   {"seed", stage_seed}, {"config", stage.config},         {"inputs", inputs}};
        try {
          entry["details"] = execute(stage, stage_seed);
        } catch (const std::exception& e) {
          manifest_["failed"] = {{"stage", stage.name}, {"error", e.what()}};
          flush();
          throw StageError(stage.name, e.what());
        }
        Json outputs = Json::object();
        for (const auto& [slot, artifact] : stage.outputs) {
          outputs[slot] = {{"artifact", artifact},
                           {"path", art_.relative(artifact).generic_string()},
                           {"sha256", sha256_file(art_.path(artifact))}};
        }
        entry["outputs"] = outputs;
        const auto& role = kind_def(stage.kind).backend;
        if (!role.empty()) entry["cost"] = {{"role", role}, {"usage", cost_json(ledger_->stage(stage.name))}};
        timings_[stage.name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest_["stages"].push_back(std::move(entry));
        result.stages.push_back({stage.name, true});
      }
      flush();
      if (options_.stop_after && *options_.stop_after == stage.name) {
        result.manifest = manifest_;
        return result;
      }
    }
    result.completed = true;
    result.manifest = manifest_;
    return result;
  }

 private:
  void flush() {
    write_file_atomic(art_.workspace / kManifestFile, manifest_.dump(2) + "\n");
    write_file_atomic(art_.workspace / kTimingsFile, timings_.dump(2) + "\n");
  }

  bool outputs_intact(const Json& entry) const {
    if (!entry.contains("outputs")) return false;
    for (const auto& [slot, out] : entry["outputs"].items()) {
      const auto path = art_.workspace / out.at("path").get<std::string>();
      if (!std::filesystem::exists(path) || sha256_file(path) != out.at("sha256").get<std::string>()) return false;
    }
    return true;
  }

  Json backend_description(const StageSpec& stage) const {
    const auto& role = kind_def(stage.kind).backend;
    if (role.empty()) return nullptr;
    if (const auto it = options_.backends.find(role); it != options_.backends.end()) return it->second->id();
    return recipe_.backends.at(role);
  }

  LlmClient& client(const std::string& role) {
    if (auto it = clients_.find(role); it != clients_.end()) return *it->second;
    std::shared_ptr<LlmBackend> backend;
    const Json cfg = recipe_.backends.value(role, Json());
    if (const auto it = options_.backends.find(role); it != options_.backends.end()) {
      backend = it->second;
    } else {
      backend = make_backend(cfg);
    }
    const std::string model = cfg.is_object() ? cfg.value("model", std::string("mock")) : std::string("mock");
    BackendSpec spec = role == "judge" ? BackendSpec::judge(backend->id(), model) : BackendSpec::teacher(backend->id(), model);
    if (cfg.is_object()) {
      spec.prompt_price_per_1k = cfg.value("prompt_price_per_1k", 0.0);
      spec.completion_price_per_1k = cfg.value("completion_price_per_1k", 0.0);
      spec.max_concurrent_requests = cfg.value("max_concurrent_requests", spec.max_concurrent_requests);
      spec.max_tokens = cfg.value("max_tokens", spec.max_tokens);
    }
    auto cache = std::make_shared<ResponseCache>(art_.workspace / kCacheDir / role);
    auto c = std::make_unique<LlmClient>(backend, spec, cache, ledger_);
    return *clients_.emplace(role, std::move(c)).first->second;
  }

  std::vector<InstructionRecord> instructions(const StageSpec& s) const {
    return load_dataset<InstructionRecord>(art_.path(s.inputs.at("instructions"))).records;
  }
  Dataset<RankedSet> ranked(const std::string& artifact) const { return load_dataset<RankedSet>(art_.path(artifact)); }

  bool wants(const StageSpec& s, const std::string& slot) const { return s.outputs.contains(slot); }
  std::filesystem::path out(const StageSpec& s, const std::string& slot) const { return art_.path(s.outputs.at(slot)); }

  Json execute(const StageSpec& s, std::uint64_t seed) {
    const Json& c = s.config;
    switch (s.kind) {
      case StageKind::mle_finetune: {
        auto data = apply_slice(instructions(s), parse_slice(c));
        std::vector<InstructionRecord> train = data;
        std::vector<std::string> extra;
        if (s.inputs.contains("ranked")) {
          const auto r = ranked(s.inputs.at("ranked")).records;
          train = flatten_responses(data, r);
        }
        std::unique_ptr<PolicyModel> model;
        if (s.inputs.contains("init")) {
          model = load_policy(art_.path(s.inputs.at("init")));
        } else {
          for (const auto& t : recipe_.model.value("vocabulary_extra", std::vector<std::string>{})) extra.push_back(t);
          model = std::make_unique<TinyLm>(build_vocabulary(train, extra), model_config(recipe_.model, seed));
        }
        const auto report = mle_finetune(*model, train, parse_hyper(c, seed));
        model->save(out(s, "checkpoint"));
        if (wants(s, "report")) write_file_atomic(out(s, "report"), report_json(report).dump(2) + "\n");
        return {{"examples", train.size()}, {"steps", report.steps}};
      }
      case StageKind::prob_rank_build: {
        const auto data = apply_slice(instructions(s), parse_slice(c));
        const Tokenizer tok(opt<std::string>(c, "tokenizer", std::string(Tokenizer::kWhitespace)));
        const int n = opt(c, "n", 4);
        const double beta = opt(c, "beta", kDefaultBeta);
        auto& teacher = client("teacher");
        teacher.set_stage(s.name);
        std::vector<CandidateSet> sets;
        std::vector<RankedSet> out_ranked;
        for (const auto& r : data) {
          CandidateSet cs{r.id, fetch_teacher_responses(r, n, teacher, tok)};
          out_ranked.push_back(rank_by_score(r.id, cs.candidates, beta));
          sets.push_back(std::move(cs));
        }
        if (wants(s, "candidates")) save_dataset(sets, out(s, "candidates"), tok.id());
        save_dataset(out_ranked, out(s, "ranked"), tok.id());
        return {{"instructions", data.size()}};
      }
      case StageKind::prob_rank_train:
      case StageKind::contextual_rank_train: {
        const auto data = instructions(s);
        const auto rs = ranked(s.inputs.at("ranked"));
        const auto sources = parse_sources(c, s.kind);
        for (const auto& r : rs.records) {
          if (std::find(sources.begin(), sources.end(), r.ranking_source) == sources.end()) {
            throw ValidationError("ranking_source", "'" + r.instruction_id + "' is ranked by " +
                                                        std::string(to_string(r.ranking_source)) +
                                                        ", which this stage does not accept");
          }
        }
        const auto joined = join_ranked(data, rs.records);
        auto model = load_policy(art_.path(s.inputs.at("init")));
        const auto report = train_stage(*model, joined, parse_hyper(c, seed));
        model->save(out(s, "checkpoint"));
        if (wants(s, "report")) write_file_atomic(out(s, "report"), report_json(report).dump(2) + "\n");
        return {{"examples", joined.size()},
                {"steps", report.steps},
                {"agreement_before", report.agreement_before},
                {"agreement_after", report.agreement_after}};
      }
      case StageKind::sample_and_judge_build: {
        const auto data = apply_slice(instructions(s), parse_slice(c));
        const auto policy = parse_policy(c.value("sampler", Json()));
        const auto model = load_policy(art_.path(s.inputs.at("model")));
        PolicyGenerator gen(*model);
        auto& judge = client("judge");
        std::vector<CandidateSet> sets;
        std::vector<RankedSet> out_ranked;
        std::vector<SkipRecord> skips;
        for (const auto& r : data) {
          auto cands = sample_diverse(gen, r, policy, seed ^ text_seed(r.id));
          auto outcome = judge_rank(r, cands, judge, s.name);
          if (outcome.ranked) out_ranked.push_back(std::move(*outcome.ranked));
          if (outcome.skip) {
            spdlog::warn("stage {}: skipping '{}': {}", s.name, r.id, outcome.skip->reason);
            skips.push_back(std::move(*outcome.skip));
          }
          sets.push_back({r.id, std::move(cands)});
        }
        if (wants(s, "candidates")) save_dataset(sets, out(s, "candidates"));
        save_dataset(out_ranked, out(s, "ranked"));
        if (wants(s, "skips")) save_dataset(skips, out(s, "skips"));
        return {{"instructions", data.size()}, {"ranked", out_ranked.size()}, {"skipped", skips.size()}};
      }
      case StageKind::prm_build_and_rank: {
        const auto all = instructions(s);
        const auto judged = join_ranked(all, ranked(s.inputs.at("judge_ranked")).records);
        PrmTrainReport prm_report;
        const auto prm = train_prm(judged, parse_prm_hyper(c.value("prm", Json()), seed), &prm_report,
                                   s.inputs.at("judge_ranked"));
        const auto data = apply_slice(all, parse_slice(c));
        const auto policy = parse_policy(c.value("sampler", Json()));
        const auto model = load_policy(art_.path(s.inputs.at("model")));
        PolicyGenerator gen(*model);
        std::vector<RankedSet> out_ranked;
        for (const auto& r : data) {
          out_ranked.push_back(prm_rank(prm, r, sample_diverse(gen, r, policy, seed ^ text_seed(r.id))));
        }
        if (wants(s, "prm")) prm.save(out(s, "prm"));
        save_dataset(out_ranked, out(s, "ranked"));
        const Json rep{{"train_pairs", prm_report.train_pairs},
                       {"heldout_pairs", prm_report.heldout_pairs},
                       {"train_accuracy", prm_report.train_accuracy},
                       {"heldout_accuracy", prm_report.heldout_accuracy},
                       {"epoch_losses", prm_report.epoch_losses}};
        if (wants(s, "report")) write_file_atomic(out(s, "report"), rep.dump(2) + "\n");
        return {{"instructions", data.size()}, {"heldout_accuracy", prm_report.heldout_accuracy}};
      }
      case StageKind::mix_datasets: {
        std::vector<MixPart> parts;
        for (const auto& p : c.at("parts")) {
          const auto slot = p.at("input").get<std::string>();
          const auto& artifact = s.inputs.at(slot);
          MixPart part{ranked(artifact).records, p.value("slice", Json::object()).get<SliceSpec>(),
                       p.value("tag", artifact)};
          parts.push_back(std::move(part));
        }
        const auto mixed = mix_datasets(parts, opt(c, "allow_duplicates", false));
        save_dataset(mixed, out(s, "ranked"));
        return {{"records", mixed.size()}};
      }
    }
    throw DomainError("unhandled stage kind");
  }

  const RecipeSpec& recipe_;
  const RunOptions& options_;
  Artifacts art_;
  std::uint64_t seed_ = 0;
  std::shared_ptr<CostLedger> ledger_;
  std::map<std::string, std::unique_ptr<LlmClient>> clients_;
  Json manifest_;
  Json timings_ = Json::object();
};

}  // namespace

RunResult run_recipe(const RecipeSpec& recipe, const std::filesystem::path& workspace, const RunOptions& options) {
  std::set<std::string> roles;
  for (const auto& [role, _] : options.backends) roles.insert(role);
  validate_impl(recipe, roles);
  if (options.stop_after &&
      std::none_of(recipe.stages.begin(), recipe.stages.end(), [&](const StageSpec& s) { return s.name == *options.stop_after; })) {
    throw ValidationError("stop_after", "no stage named '" + *options.stop_after + "'");
  }
  Runner runner(recipe, workspace, options);
  return runner.run();
}

Json read_manifest(const std::filesystem::path& workspace) {
  const auto path = workspace / kManifestFile;
  if (!std::filesystem::exists(path)) throw IoError("no manifest in " + workspace.string());
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

std::string format_status(const Json& manifest) {
  std::string out = "recipe " + manifest.value("recipe", std::string("?")) +
                    "  seed " + std::to_string(manifest.value("seed", std::uint64_t{0})) + "\n";
  out += "stage                    kind                     calls  hits  prompt_tok  completion_tok  cost_usd\n";
  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  double total = 0.0;
  for (const auto& e : manifest.value("stages", Json::array())) {
    std::string line = pad(e.value("name", ""), 25) + pad(e.value("kind", ""), 25);
    if (e.contains("cost")) {
      const auto& u = e["cost"]["usage"];
      char buf[96];
      std::snprintf(buf, sizeof buf, "%5lld  %4lld  %10lld  %14lld  %8.4f", u.value("calls", 0LL),
                    u.value("cache_hits", 0LL), u.value("prompt_tokens", 0LL), u.value("completion_tokens", 0LL),
                    u.value("cost_usd", 0.0));
      line += buf;
      total += u.value("cost_usd", 0.0);
    } else {
      line += "    -     -           -               -         -";
    }
    out += line + "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "total cost_usd %.4f\n", total);
  out += buf;
  if (manifest.contains("failed") && !manifest["failed"].is_null()) {
    out += "FAILED at stage " + manifest["failed"].value("stage", "") + ": " + manifest["failed"].value("error", "") + "\n";
  }
  return out;
}

std::vector<std::filesystem::path> find_orphans(const std::filesystem::path& workspace) {
  const Json m = read_manifest(workspace);
  std::set<std::filesystem::path> listed;
  for (const auto& e : m.value("stages", Json::array())) {
    const Json outputs = e.value("outputs", Json::object());
    for (const auto& [slot, o] : outputs.items()) listed.insert(o.at("path").get<std::string>());
  }
  std::vector<std::filesystem::path> orphans;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(workspace)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), workspace);
    const auto top = rel.begin()->string();
    if (top == kManifestFile || top == kTimingsFile || top == kCacheDir) continue;
    if (!listed.contains(rel.generic_string())) orphans.push_back(rel);
  }
  std::sort(orphans.begin(), orphans.end());
  return orphans;
}

}  // namespace rankft
