#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/json_io.hpp"
#include "rankft/llm_io.hpp"

namespace rankft {

// ---- dataset mixing ----

// Contiguous slice of a dataset: `count` records from `start`, or the last
// `count` records when from_end is set. An absent count means "to the end".
struct SliceSpec {
  std::size_t start = 0;
  std::optional<std::size_t> count;
  bool from_end = false;

  // Resolves to [begin, end) for a dataset of `size` records; ValidationError
  // when out of bounds.
  std::pair<std::size_t, std::size_t> resolve(std::size_t size) const;
};

void to_json(Json& j, const SliceSpec& s);
void from_json(const Json& j, SliceSpec& s);

struct MixPart {
  std::vector<RankedSet> records;
  SliceSpec slice;
  std::string tag;
};

// Concatenates the slices in order, tagging each record's provenance. Repeated
// instruction ids are a ValidationError unless allowed, in which case later
// copies are kept and tagged "<tag>;duplicate".
std::vector<RankedSet> mix_datasets(const std::vector<MixPart>& parts, bool allow_duplicates = false);

// ---- recipes ----

enum class StageKind {
  mle_finetune,
  prob_rank_build,
  prob_rank_train,
  sample_and_judge_build,
  contextual_rank_train,
  prm_build_and_rank,
  mix_datasets
};
std::string_view to_string(StageKind k);
StageKind parse_stage_kind(std::string_view s);

struct StageSpec {
  std::string name;
  StageKind kind = StageKind::mle_finetune;
  // slot -> artifact name
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  Json config = Json::object();
};

// A declarative recipe. `external_inputs` maps artifact names to files that
// exist before the run; relative paths resolve against the recipe's base
// directory. `backends` holds "teacher" and "judge" backend descriptions (see
// make_backend) plus optional "model"/price members. `model` configures the
// toy policy created when a stage has no init checkpoint.
struct RecipeSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> external_inputs;
  Json backends = Json::object();
  Json model = Json::object();
  std::vector<StageSpec> stages;
  std::filesystem::path base_dir;
};

void to_json(Json& j, const StageSpec& s);
void from_json(const Json& j, StageSpec& s);
void to_json(Json& j, const RecipeSpec& r);
void from_json(const Json& j, RecipeSpec& r);

RecipeSpec load_recipe(const std::filesystem::path& path);

// Checks the recipe before anything runs: known stage kinds and slots, every
// input produced by an earlier stage or declared external (and present on
// disk), unique stage and artifact names, parseable stage configs, and
// backends for stages that call them. Throws ValidationError.
void validate(const RecipeSpec& recipe);

struct PresetOptions {
  std::filesystem::path instructions;
  // Instructions used for probabilistic ranking and PRM ranking; the first
  // `contextual` of them are also sent to the judge.
  std::size_t total = 200;
  std::size_t contextual = 50;
  // Learning rate for a ranking stage started from the instruction-tuned
  // model; a ranking stage started from a ranked model uses a tenth of it.
  double ranking_learning_rate = 1e-5;
  double mle_learning_rate = 1e-5;
  int mle_epochs = 3;
  int ranking_epochs = 1;
  int batch_size = 128;
  int warmup_steps = 2;
  std::uint64_t seed = 0;
  Json model = Json::object();
  Json teacher = "synthetic_teacher";
  Json judge = "synthetic_judge";
  // Contextual stage of `tuna` reuses the first `contextual` instructions;
  // when set it uses the next slice instead.
  bool fresh_contextual_slice = false;
};

std::vector<std::string> preset_names();
// Presets: tuna_p, tuna_c, tuna, tuna_cp, tuna_c_prm, mix_tuna_52k,
// mix_tuna_104k, alpaca_mul.
RecipeSpec make_preset(std::string_view name, const PresetOptions& options);

// ---- running ----

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct RunOptions {
  // Overrides recipe.seed.
  std::optional<std::uint64_t> seed;
  // Stop (as if interrupted) after this stage completes.
  std::optional<std::string> stop_after;
  // Backends to use instead of building them from the recipe, by role.
  std::map<std::string, std::shared_ptr<LlmBackend>> backends;
};

struct StageRun {
  std::string name;
  bool executed = false;
};

struct RunResult {
  std::vector<StageRun> stages;
  Json manifest;
  bool completed = false;
};

// Workspace layout:
//   manifest.json        stages, input/output hashes, configs, seeds, costs
//   artifacts/           datasets (.jsonl), checkpoints (.ckpt), reports (.json)
//   cache/<role>/        one file per backend request
//   timings.json         wall-clock seconds per stage (varies between runs)
// A stage is skipped when the manifest holds an entry with the same key
// (kind, config, seed, backend and input hashes) and its outputs are intact.
RunResult run_recipe(const RecipeSpec& recipe, const std::filesystem::path& workspace, const RunOptions& options = {});

Json read_manifest(const std::filesystem::path& workspace);
std::string format_status(const Json& manifest);
// Workspace files neither listed in the manifest nor part of its bookkeeping.
std::vector<std::filesystem::path> find_orphans(const std::filesystem::path& workspace);

}  // namespace rankft
