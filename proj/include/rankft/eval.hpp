#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/json_io.hpp"
#include "rankft/llm_io.hpp"
#include "rankft/sampler.hpp"

namespace rankft {

// ---- task files ----

struct TaskInstance {
  std::string input;
  std::string output;

  bool operator==(const TaskInstance&) const = default;
};

// One evaluation task: a definition, optional positive examples used for
// few-shot prompts, and the scored instances.
struct TaskFile {
  std::string task_id;
  std::string definition;
  std::vector<TaskInstance> positive_examples;
  std::vector<TaskInstance> instances;

  bool operator==(const TaskFile&) const = default;
};

void validate(const TaskFile& task);
void to_json(Json& j, const TaskInstance& x);
void from_json(const Json& j, TaskInstance& x);
void to_json(Json& j, const TaskFile& t);
void from_json(const Json& j, TaskFile& t);

// A task file is one JSON document; a task directory holds *.json task files
// read in file-name order.
TaskFile load_task_file(const std::filesystem::path& path);
std::vector<TaskFile> load_task_dir(const std::filesystem::path& dir);
void save_task_file(const TaskFile& task, const std::filesystem::path& path);

// Prompt for one instance with 0 or 2 positive examples prepended to the
// definition. Throws ValidationError for other shot counts or when the task
// has too few examples.
InstructionRecord task_prompt(const TaskFile& task, std::size_t instance, int shots);

// ---- ROUGE-L and exact match ----

struct TaskScore {
  std::string task_id;
  double score = 0.0;  // x100
  std::vector<std::string> predictions;
  std::vector<double> instance_scores;  // x100
};

struct ScoreReport {
  std::string metric;
  int shots = 0;
  std::vector<TaskScore> tasks;
  double overall = 0.0;  // macro average over tasks, x100
};

// Greedy predictions scored with ROUGE-L, averaged per task, then across tasks.
ScoreReport eval_rouge(ResponseGenerator& model, const std::vector<TaskFile>& tasks, int shots,
                       const Tokenizer& tokenizer = Tokenizer{});

// Same protocol with whitespace-trimmed exact string match.
ScoreReport eval_exact_match(ResponseGenerator& model, const std::vector<TaskFile>& tasks, int shots);

void to_json(Json& j, const ScoreReport& r);
std::string format_table(const ScoreReport& r);

// ---- pairwise comparison ----

enum class Outcome { win, lose, tie };
std::string_view to_string(Outcome o);

std::string_view pairwise_prompt_template();

// Fills the compare prompt with a question and two answers.
std::string build_compare_prompt(std::string_view question, std::string_view answer_1, std::string_view answer_2);

struct ComparePromptParts {
  std::string question;
  std::string answer_1;
  std::string answer_2;
};
// Recovers the parts of a prompt built by build_compare_prompt.
std::optional<ComparePromptParts> split_compare_prompt(std::string_view prompt);

// Reads the last "winner: 1|2|tie" line: 1, 2, or 0 for a tie. Throws ParseError.
int parse_compare_reply(std::string_view reply);

struct PairwiseItem {
  std::string id;
  std::string answer_a;
  std::string answer_b;
  // Judge picks with a shown first and with b shown first; 1, 2 or 0 for tie.
  int a_first = 0;
  int b_first = 0;
  Outcome outcome = Outcome::tie;
};

struct PairwiseReport {
  std::vector<PairwiseItem> items;
  std::vector<std::string> dropped;
  int wins = 0;
  int losses = 0;
  int ties = 0;
  double win_pct = 0.0;
  double lose_pct = 0.0;
  double tie_pct = 0.0;
};

// Greedy answers from both models, judged in both presentation orders. Model a
// wins only when both orders prefer it, loses only when both prefer b, and
// everything else is a tie. A question whose reply fails to parse after one
// re-query is dropped and listed.
PairwiseReport eval_pairwise(ResponseGenerator& model_a, ResponseGenerator& model_b,
                             const std::vector<InstructionRecord>& questions, LlmClient& judge);

void to_json(Json& j, const PairwiseReport& r);
std::string format_table(const PairwiseReport& r);

}  // namespace rankft
