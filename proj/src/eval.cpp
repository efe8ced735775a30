#include "rankft/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <regex>
#include <sstream>

#include "rankft/assets.hpp"
#include "rankft/rouge.hpp"

namespace rankft {

// ---- task files ----

void validate(const TaskFile& task) {
  if (task.task_id.empty()) throw ValidationError("task_id", "must not be empty");
  if (task.instances.empty()) throw ValidationError("instances", "task '" + task.task_id + "' has no instances");
  for (std::size_t i = 0; i < task.instances.size(); ++i) {
    if (task.instances[i].output.empty()) {
      throw ValidationError("output", "task '" + task.task_id + "' instance " + std::to_string(i) +
                                          " has an empty reference output");
    }
  }
}

void to_json(Json& j, const TaskInstance& x) { j = Json{{"input", x.input}, {"output", x.output}}; }

void from_json(const Json& j, TaskInstance& x) {
  x.input = j.value("input", "");
  x.output = j.at("output").get<std::string>();
}

void to_json(Json& j, const TaskFile& t) {
  j = Json{{"task_id", t.task_id},
           {"definition", t.definition},
           {"positive_examples", t.positive_examples},
           {"instances", t.instances}};
}

void from_json(const Json& j, TaskFile& t) {
  t.task_id = j.at("task_id").get<std::string>();
  t.definition = j.value("definition", "");
  t.positive_examples = j.value("positive_examples", std::vector<TaskInstance>{});
  t.instances = j.at("instances").get<std::vector<TaskInstance>>();
}

TaskFile load_task_file(const std::filesystem::path& path) {
  TaskFile t;
  try {
    t = Json::parse(read_file(path)).get<TaskFile>();
  } catch (const Json::exception& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  validate(t);
  return t;
}

std::vector<TaskFile> load_task_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a task directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TaskFile> out;
  for (const auto& f : files) out.push_back(load_task_file(f));
  return out;
}

void save_task_file(const TaskFile& task, const std::filesystem::path& path) {
  validate(task);
  write_file_atomic(path, Json(task).dump(2) + "\n");
}

InstructionRecord task_prompt(const TaskFile& task, std::size_t instance, int shots) {
  if (shots != 0 && shots != 2) throw ValidationError("shots", "must be 0 or 2");
  if (task.positive_examples.size() < static_cast<std::size_t>(shots)) {
    throw ValidationError("positive_examples", "task '" + task.task_id + "' has fewer than " +
                                                   std::to_string(shots) + " positive examples");
  }
  InstructionRecord r;
  r.id = task.task_id + "#" + std::to_string(instance);
  r.instruction = "Definition: " + task.definition;
  for (int k = 0; k < shots; ++k) {
    const auto& ex = task.positive_examples[static_cast<std::size_t>(k)];
    r.instruction += "\n\nPositive Example " + std::to_string(k + 1) + ":\nInput: " + ex.input + "\nOutput: " + ex.output;
  }
  r.input = task.instances.at(instance).input;
  r.original_response = task.instances[instance].output;
  return r;
}

// ---- ROUGE-L and exact match ----

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

template <typename Metric>
ScoreReport score_tasks(std::string metric_name, ResponseGenerator& model, const std::vector<TaskFile>& tasks,
                        int shots, Metric metric) {
  if (tasks.empty()) throw ValidationError("tasks", "task list is empty");
  if (shots != 0 && shots != 2) throw ValidationError("shots", "must be 0 or 2");
  ScoreReport report;
  report.metric = std::move(metric_name);
  report.shots = shots;
  Rng rng(0);  // unused by greedy decoding
  double total = 0.0;
  for (const auto& task : tasks) {
    validate(task);
    TaskScore ts;
    ts.task_id = task.task_id;
    double sum = 0.0;
    for (std::size_t i = 0; i < task.instances.size(); ++i) {
      std::string pred = model.generate(task_prompt(task, i, shots), 0.0, rng);
      const double s = 100.0 * metric(pred, task.instances[i].output);
      ts.instance_scores.push_back(s);
      ts.predictions.push_back(std::move(pred));
      sum += s;
    }
    ts.score = sum / static_cast<double>(task.instances.size());
    total += ts.score;
    report.tasks.push_back(std::move(ts));
  }
  report.overall = total / static_cast<double>(tasks.size());
  return report;
}

}  // namespace

ScoreReport eval_rouge(ResponseGenerator& model, const std::vector<TaskFile>& tasks, int shots,
                       const Tokenizer& tokenizer) {
  return score_tasks("rouge_l", model, tasks, shots,
                     [&](const std::string& pred, const std::string& ref) { return rouge_l(pred, ref, tokenizer); });
}

ScoreReport eval_exact_match(ResponseGenerator& model, const std::vector<TaskFile>& tasks, int shots) {
  return score_tasks("exact_match", model, tasks, shots, [](const std::string& pred, const std::string& ref) {
    return trim(pred) == trim(ref) ? 1.0 : 0.0;
  });
}

void to_json(Json& j, const ScoreReport& r) {
  Json tasks = Json::array();
  for (const auto& t : r.tasks) {
    tasks.push_back(
        {{"task_id", t.task_id}, {"score", t.score}, {"instance_scores", t.instance_scores}, {"predictions", t.predictions}});
  }
  j = Json{{"metric", r.metric}, {"shots", r.shots}, {"overall", r.overall}, {"tasks", tasks}};
}

namespace {

std::string fixed2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_table(const ScoreReport& r) {
  std::size_t width = 7;
  for (const auto& t : r.tasks) width = std::max(width, t.task_id.size());
  std::string out = pad("task", width) + "  " + r.metric + " (" + std::to_string(r.shots) + "-shot)\n";
  for (const auto& t : r.tasks) out += pad(t.task_id, width) + "  " + fixed2(t.score) + "\n";
  out += pad("overall", width) + "  " + fixed2(r.overall) + "\n";
  return out;
}

// ---- pairwise ----

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::win: return "win";
    case Outcome::lose: return "lose";
    case Outcome::tie: return "tie";
  }
  return "tie";
}

std::string_view pairwise_prompt_template() { return assets::kPairwisePromptV1; }

namespace {

constexpr std::string_view kQuestionTag = "[Question]\n";
constexpr std::string_view kAnswer1Tag = "\n\n[Answer 1]\n";
constexpr std::string_view kAnswer2Tag = "\n\n[Answer 2]\n";
constexpr std::string_view kEndTag = "\n\n[End of answers]";

}  // namespace

std::string build_compare_prompt(std::string_view question, std::string_view answer_1, std::string_view answer_2) {
  const std::string_view tmpl = pairwise_prompt_template();
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.substr(i, 10) == "{Question}") {
      out += question;
      i += 10;
    } else if (tmpl.substr(i, 10) == "{Answer 1}") {
      out += answer_1;
      i += 10;
    } else if (tmpl.substr(i, 10) == "{Answer 2}") {
      out += answer_2;
      i += 10;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::optional<ComparePromptParts> split_compare_prompt(std::string_view prompt) {
  const auto q = prompt.find(kQuestionTag);
  if (q == std::string_view::npos) return std::nullopt;
  const auto a1 = prompt.find(kAnswer1Tag, q);
  if (a1 == std::string_view::npos) return std::nullopt;
  const auto a2 = prompt.find(kAnswer2Tag, a1);
  if (a2 == std::string_view::npos) return std::nullopt;
  const auto end = prompt.rfind(kEndTag);
  if (end == std::string_view::npos || end < a2) return std::nullopt;
  ComparePromptParts parts;
  parts.question = std::string(prompt.substr(q + kQuestionTag.size(), a1 - q - kQuestionTag.size()));
  parts.answer_1 = std::string(prompt.substr(a1 + kAnswer1Tag.size(), a2 - a1 - kAnswer1Tag.size()));
  parts.answer_2 = std::string(prompt.substr(a2 + kAnswer2Tag.size(), end - a2 - kAnswer2Tag.size()));
  return parts;
}

int parse_compare_reply(std::string_view reply) {
  static const std::regex re(R"(winner\s*:\s*(1|2|tie)\b)", std::regex::icase);
  std::istringstream in{std::string(reply)};
  std::string line;
  std::size_t lineno = 0;
  std::optional<int> pick;
  while (std::getline(in, line)) {
    ++lineno;
    std::smatch m;
    if (std::regex_search(line, m, re)) {
      const auto w = m[1].str();
      pick = w == "1" ? 1 : w == "2" ? 2 : 0;
    }
  }
  if (!pick) throw ParseError(lineno, "no 'winner: 1|2|tie' line in judge reply");
  return *pick;
}

namespace {

std::optional<int> ask(LlmClient& judge, const std::string& prompt) {
  CompletionRequest req;
  req.prompt = prompt;
  req.temperature = judge.spec().temperature;
  req.max_tokens = judge.spec().max_tokens;
  for (int attempt = 0; attempt < 2; ++attempt) {
    req.attempt = attempt;
    const Completion reply = judge.request(req);
    if (reply.choices.empty()) continue;
    try {
      return parse_compare_reply(reply.choices.front().text);
    } catch (const ParseError&) {
    }
  }
  return std::nullopt;
}

std::string question_text(const InstructionRecord& q) {
  return q.input.empty() ? q.instruction : q.instruction + "\n\n" + q.input;
}

}  // namespace

PairwiseReport eval_pairwise(ResponseGenerator& model_a, ResponseGenerator& model_b,
                             const std::vector<InstructionRecord>& questions, LlmClient& judge) {
  if (judge.spec().kind != BackendKind::judge) throw CapabilityError("backend is not configured as a judge");
  PairwiseReport report;
  Rng rng(0);  // unused by greedy decoding
  for (const auto& q : questions) {
    PairwiseItem item;
    item.id = q.id;
    item.answer_a = model_a.generate(q, 0.0, rng);
    item.answer_b = model_b.generate(q, 0.0, rng);
    const std::string text = question_text(q);
    const auto first = ask(judge, build_compare_prompt(text, item.answer_a, item.answer_b));
    const auto second = first ? ask(judge, build_compare_prompt(text, item.answer_b, item.answer_a)) : std::nullopt;
    if (!first || !second) {
      report.dropped.push_back(q.id);
      continue;
    }
    item.a_first = *first;
    item.b_first = *second;
    if (item.a_first == 1 && item.b_first == 2) {
      item.outcome = Outcome::win;
      ++report.wins;
    } else if (item.a_first == 2 && item.b_first == 1) {
      item.outcome = Outcome::lose;
      ++report.losses;
    } else {
      item.outcome = Outcome::tie;
      ++report.ties;
    }
    report.items.push_back(std::move(item));
  }
  const double judged = static_cast<double>(report.items.size());
  if (judged > 0) {
    report.win_pct = 100.0 * report.wins / judged;
    report.lose_pct = 100.0 * report.losses / judged;
    report.tie_pct = 100.0 * report.ties / judged;
  }
  return report;
}

void to_json(Json& j, const PairwiseReport& r) {
  Json items = Json::array();
  for (const auto& it : r.items) {
    items.push_back({{"id", it.id},
                     {"answer_a", it.answer_a},
                     {"answer_b", it.answer_b},
                     {"a_first", it.a_first},
                     {"b_first", it.b_first},
                     {"outcome", to_string(it.outcome)}});
  }
  j = Json{{"wins", r.wins},         {"losses", r.losses},     {"ties", r.ties},
           {"win_pct", r.win_pct},   {"lose_pct", r.lose_pct}, {"tie_pct", r.tie_pct},
           {"dropped", r.dropped},   {"items", items}};
}

std::string format_table(const PairwiseReport& r) {
  std::string out = "outcome  count  percent\n";
  out += "win      " + pad(std::to_string(r.wins), 5) + "  " + fixed2(r.win_pct) + "\n";
  out += "lose     " + pad(std::to_string(r.losses), 5) + "  " + fixed2(r.lose_pct) + "\n";
  out += "tie      " + pad(std::to_string(r.ties), 5) + "  " + fixed2(r.tie_pct) + "\n";
  out += "dropped  " + std::to_string(r.dropped.size()) + "\n";
  return out;
}

}  // namespace rankft
