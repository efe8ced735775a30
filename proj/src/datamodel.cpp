#include "rankft/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <unistd.h>

#include "rankft/errors.hpp"
#include "rankft/json_io.hpp"

namespace rankft {

// ---- enums ----

std::string_view to_string(ResponseSource s) {
  switch (s) {
    case ResponseSource::teacher: return "teacher";
    case ResponseSource::student: return "student";
    case ResponseSource::original: return "original";
    case ResponseSource::judge_reference: return "judge_reference";
  }
  return "?";
}

std::string_view to_string(RankingSource s) {
  switch (s) {
    case RankingSource::probabilistic: return "probabilistic";
    case RankingSource::judge: return "judge";
    case RankingSource::prm: return "prm";
  }
  return "?";
}

std::string_view to_string(QuestionType q) {
  switch (q) {
    case QuestionType::open_ended: return "open_ended";
    case QuestionType::close_ended: return "close_ended";
    case QuestionType::unknown: return "unknown";
  }
  return "?";
}

std::string_view to_string(Schema s) {
  switch (s) {
    case Schema::instructions: return "instructions";
    case Schema::candidates: return "candidates";
    case Schema::ranked: return "ranked";
    case Schema::skips: return "skips";
  }
  return "?";
}

ResponseSource parse_response_source(std::string_view s) {
  for (auto v : {ResponseSource::teacher, ResponseSource::student, ResponseSource::original,
                 ResponseSource::judge_reference}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("source", "unknown response source '" + std::string(s) + "'");
}

RankingSource parse_ranking_source(std::string_view s) {
  for (auto v : {RankingSource::probabilistic, RankingSource::judge, RankingSource::prm}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("ranking_source", "unknown ranking source '" + std::string(s) + "'");
}

QuestionType parse_question_type(std::string_view s) {
  for (auto v : {QuestionType::open_ended, QuestionType::close_ended, QuestionType::unknown}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("question_type", "unknown question type '" + std::string(s) + "'");
}

static Schema parse_schema(std::string_view s) {
  for (auto v : {Schema::instructions, Schema::candidates, Schema::ranked, Schema::skips}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("schema", "unknown schema '" + std::string(s) + "'");
}

// ---- validation ----

void validate(const InstructionRecord& r) {
  if (r.id.empty()) throw ValidationError("id", "must be non-empty");
  if (r.instruction.empty()) throw ValidationError("instruction", "must be non-empty");
}

void validate(const CandidateResponse& c, const Tokenizer& tok) {
  if (!(c.temperature >= 0.0) || !std::isfinite(c.temperature)) {
    throw ValidationError("temperature", "must be finite and >= 0");
  }
  if (c.length < 1) throw ValidationError("length", "must be >= 1");
  if (tok.is_local()) {
    const auto counted = tok.count(c.text);
    if (counted != static_cast<std::size_t>(c.length)) {
      throw ValidationError("length", "is " + std::to_string(c.length) + " but text has " +
                                          std::to_string(counted) + " " + tok.id() + " tokens");
    }
  }
  const bool is_teacher = c.source == ResponseSource::teacher;
  if (is_teacher != c.teacher_logprob_sum.has_value()) {
    throw ValidationError("teacher_logprob_sum", "must be present iff source is teacher");
  }
  if (c.teacher_logprob_sum && !(*c.teacher_logprob_sum <= 0.0)) {
    throw ValidationError("teacher_logprob_sum", "must be <= 0");
  }
  if (c.resamples < 0) throw ValidationError("resamples", "must be >= 0");
}

void validate(const CandidateSet& s, const Tokenizer& tok) {
  if (s.instruction_id.empty()) throw ValidationError("instruction_id", "must be non-empty");
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    try {
      validate(s.candidates[i], tok);
    } catch (const ValidationError& e) {
      throw ValidationError("candidates[" + std::to_string(i) + "]." + e.field(), e.message());
    }
  }
}

void validate(const RankedSet& s, const Tokenizer& tok) {
  if (s.instruction_id.empty()) throw ValidationError("instruction_id", "must be non-empty");
  if (s.n < 1) throw ValidationError("n", "must be >= 1");
  if (static_cast<std::size_t>(s.n) != s.candidates.size()) {
    throw ValidationError("n", "does not match the number of candidates");
  }
  if (s.scores.size() != s.candidates.size()) {
    throw ValidationError("scores", "must align with candidates");
  }
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!std::isfinite(s.scores[i])) throw ValidationError("scores", "must be finite");
    if (i > 0 && s.scores[i] > s.scores[i - 1]) {
      throw ValidationError("scores", "must be non-increasing along the candidate order");
    }
  }
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    try {
      validate(s.candidates[i], tok);
    } catch (const ValidationError& e) {
      throw ValidationError("candidates[" + std::to_string(i) + "]." + e.field(), e.message());
    }
  }
}

void validate_size(const RankedSet& s, int max_n) {
  if (s.n < 1 || s.n > max_n) {
    throw ValidationError("n", "must lie in [1, " + std::to_string(max_n) + "]");
  }
}

void validate(const JudgeVerdict& v, std::size_t n) {
  if (v.totals.size() != n) throw ValidationError("totals", "must have one entry per candidate");
  if (v.subscores.size() != n) throw ValidationError("subscores", "must have one entry per candidate");
  for (std::size_t i = 0; i < n; ++i) {
    if (v.totals[i] && (*v.totals[i] < 0 || *v.totals[i] > 15)) {
      throw ValidationError("totals", "Response " + std::to_string(i) + " total outside [0, 15]");
    }
    const auto& sub = v.subscores[i];
    if (sub.empty()) continue;
    if (sub.size() != 3) throw ValidationError("subscores", "expected three criterion scores");
    for (int x : sub) {
      if (x < 0 || x > 5) throw ValidationError("subscores", "criterion score outside [0, 5]");
    }
    if (!v.totals[i] || *v.totals[i] != sub[0] + sub[1] + sub[2]) {
      throw ValidationError("totals", "Response " + std::to_string(i) + " total is not the sum of its subscores");
    }
  }
  if (v.rank.empty()) throw ValidationError("rank", "must be non-empty");
  std::set<int> seen;
  for (int idx : v.rank) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= n) {
      throw ValidationError("rank", "index " + std::to_string(idx) + " out of range");
    }
    if (!seen.insert(idx).second) throw ValidationError("rank", "index " + std::to_string(idx) + " repeated");
    if (!v.totals[idx]) throw ValidationError("totals", "ranked Response " + std::to_string(idx) + " has no total");
  }
  for (int i = 0; i < static_cast<int>(n); ++i) {
    if (seen.contains(i) == v.duplicates_removed.contains(i)) {
      throw ValidationError("duplicates_removed", "must be exactly the candidates missing from rank");
    }
  }
  for (std::size_t i = 1; i < v.rank.size(); ++i) {
    if (*v.totals[v.rank[i]] > *v.totals[v.rank[i - 1]]) {
      throw ValidationError("rank", "totals are not non-increasing in rank order");
    }
  }
}

void validate(const SkipRecord& s) {
  if (s.instruction_id.empty()) throw ValidationError("instruction_id", "must be non-empty");
}

std::vector<std::size_t> stable_argsort_desc(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

RankedSet make_ranked_set(std::string instruction_id, const std::vector<CandidateResponse>& candidates,
                          std::span<const double> scores, RankingSource source) {
  if (candidates.size() != scores.size()) throw ValidationError("scores", "must align with candidates");
  RankedSet out;
  out.instruction_id = std::move(instruction_id);
  out.ranking_source = source;
  out.n = static_cast<int>(candidates.size());
  for (std::size_t idx : stable_argsort_desc(scores)) {
    out.candidates.push_back(candidates[idx]);
    out.scores.push_back(scores[idx]);
  }
  return out;
}

// ---- JSON ----

namespace {

template <typename T>
T field(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) throw ValidationError(name, "missing");
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!it->is_number_integer()) throw ValidationError(name, "must be an integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ValidationError(name, "must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ValidationError(name, "must be a string");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ValidationError(name, "must be a boolean");
    }
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw ValidationError(name, e.what());
  }
}

template <typename T>
T field_or(const Json& j, const char* name, T fallback) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return fallback;
  return field<T>(j, name);
}

void require_object(const Json& j) {
  if (!j.is_object()) throw ValidationError("record", "must be a JSON object");
}

}  // namespace

void to_json(Json& j, const InstructionRecord& r) {
  j = Json{{"id", r.id}, {"instruction", r.instruction}, {"input", r.input},
           {"original_response", r.original_response}};
}

void from_json(const Json& j, InstructionRecord& r) {
  require_object(j);
  r.id = field<std::string>(j, "id");
  r.instruction = field<std::string>(j, "instruction");
  r.input = field_or<std::string>(j, "input", "");
  r.original_response = field<std::string>(j, "original_response");
}

void to_json(Json& j, const CandidateResponse& c) {
  j = Json{{"text", c.text},
           {"source", to_string(c.source)},
           {"temperature", c.temperature},
           {"length", c.length},
           {"resamples", c.resamples},
           {"fallback", c.fallback}};
  j["teacher_logprob_sum"] = c.teacher_logprob_sum ? Json(*c.teacher_logprob_sum) : Json(nullptr);
}

void from_json(const Json& j, CandidateResponse& c) {
  require_object(j);
  c.text = field<std::string>(j, "text");
  c.source = parse_response_source(field<std::string>(j, "source"));
  c.temperature = field<double>(j, "temperature");
  c.length = field<int>(j, "length");
  c.resamples = field_or<int>(j, "resamples", 0);
  c.fallback = field_or<bool>(j, "fallback", false);
  const auto it = j.find("teacher_logprob_sum");
  if (it == j.end() || it->is_null()) {
    c.teacher_logprob_sum.reset();
  } else {
    c.teacher_logprob_sum = field<double>(j, "teacher_logprob_sum");
  }
}

namespace {

std::vector<CandidateResponse> candidates_field(const Json& j) {
  const auto it = j.find("candidates");
  if (it == j.end() || !it->is_array()) throw ValidationError("candidates", "must be an array");
  std::vector<CandidateResponse> out;
  for (std::size_t i = 0; i < it->size(); ++i) {
    try {
      out.push_back((*it)[i].get<CandidateResponse>());
    } catch (const ValidationError& e) {
      throw ValidationError("candidates[" + std::to_string(i) + "]." + e.field(), e.message());
    }
  }
  return out;
}

}  // namespace

void to_json(Json& j, const CandidateSet& s) {
  j = Json{{"instruction_id", s.instruction_id}, {"candidates", s.candidates}};
}

void from_json(const Json& j, CandidateSet& s) {
  require_object(j);
  s.instruction_id = field<std::string>(j, "instruction_id");
  s.candidates = candidates_field(j);
}

void to_json(Json& j, const RankedSet& s) {
  j = Json{{"instruction_id", s.instruction_id},
           {"candidates", s.candidates},
           {"scores", s.scores},
           {"ranking_source", to_string(s.ranking_source)},
           {"n", s.n}};
  if (!s.provenance.empty()) j["provenance"] = s.provenance;
}

void from_json(const Json& j, RankedSet& s) {
  require_object(j);
  s.instruction_id = field<std::string>(j, "instruction_id");
  s.candidates = candidates_field(j);
  const auto it = j.find("scores");
  if (it == j.end() || !it->is_array()) throw ValidationError("scores", "must be an array");
  s.scores.clear();
  for (const auto& x : *it) {
    if (!x.is_number()) throw ValidationError("scores", "must contain numbers");
    s.scores.push_back(x.get<double>());
  }
  s.ranking_source = parse_ranking_source(field<std::string>(j, "ranking_source"));
  s.n = field<int>(j, "n");
  s.provenance = field_or<std::string>(j, "provenance", "");
}

void to_json(Json& j, const JudgeVerdict& v) {
  Json totals = Json::array();
  for (const auto& t : v.totals) totals.push_back(t ? Json(*t) : Json(nullptr));
  j = Json{{"question_type", to_string(v.question_type)},
           {"subscores", v.subscores},
           {"totals", totals},
           {"duplicates_removed", v.duplicates_removed},
           {"rank", v.rank},
           {"raw_text", v.raw_text}};
}

void from_json(const Json& j, JudgeVerdict& v) {
  require_object(j);
  try {
    v.question_type = parse_question_type(field<std::string>(j, "question_type"));
    v.subscores = j.at("subscores").get<std::vector<std::vector<int>>>();
    v.totals.clear();
    for (const auto& t : j.at("totals")) {
      v.totals.push_back(t.is_null() ? std::nullopt : std::optional<int>(t.get<int>()));
    }
    v.duplicates_removed = j.at("duplicates_removed").get<std::set<int>>();
    v.rank = j.at("rank").get<std::vector<int>>();
    v.raw_text = field<std::string>(j, "raw_text");
  } catch (const Json::exception& e) {
    throw ValidationError("verdict", e.what());
  }
}

void to_json(Json& j, const SkipRecord& s) {
  j = Json{{"instruction_id", s.instruction_id}, {"stage", s.stage}, {"reason", s.reason}};
}

void from_json(const Json& j, SkipRecord& s) {
  require_object(j);
  s.instruction_id = field<std::string>(j, "instruction_id");
  s.stage = field<std::string>(j, "stage");
  s.reason = field<std::string>(j, "reason");
}

static constexpr const char* kFormatTag = "rankft-dataset";

void to_json(Json& j, const DatasetHeader& h) {
  j = Json{{"format", kFormatTag}, {"version", h.version}, {"schema", to_string(h.schema)},
           {"tokenizer", h.tokenizer}};
}

void from_json(const Json& j, DatasetHeader& h) {
  require_object(j);
  if (field<std::string>(j, "format") != kFormatTag) {
    throw ValidationError("format", "not a rankft dataset file");
  }
  h.version = field<int>(j, "version");
  if (h.version < 1 || h.version > DatasetHeader::kVersion) {
    throw ValidationError("version", "unsupported format version " + std::to_string(h.version));
  }
  h.schema = parse_schema(field<std::string>(j, "schema"));
  h.tokenizer = field<std::string>(j, "tokenizer");
}

std::string dump_line(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

// ---- files ----

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

namespace {

template <typename Record>
void validate_record(const Record& r, const Tokenizer& tok) {
  if constexpr (std::is_same_v<Record, InstructionRecord> || std::is_same_v<Record, SkipRecord>) {
    (void)tok;
    validate(r);
  } else {
    validate(r, tok);
  }
}

// Ids that must be unique within one file; ranked files may legitimately
// repeat an instruction when mixed with duplicates allowed.
template <typename Record>
const std::string* unique_key(const Record& r) {
  if constexpr (std::is_same_v<Record, InstructionRecord>) {
    return &r.id;
  } else if constexpr (std::is_same_v<Record, CandidateSet>) {
    return &r.instruction_id;
  } else {
    (void)r;
    return nullptr;
  }
}

}  // namespace

template <typename Record>
Dataset<Record> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Dataset<Record> out;
  out.header.schema = schema_of<Record>();
  std::optional<Tokenizer> tok;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        out.header = j.get<DatasetHeader>();
        if (out.header.schema != schema_of<Record>()) {
          throw ValidationError("schema", "expected '" + std::string(to_string(schema_of<Record>())) +
                                              "', file declares '" +
                                              std::string(to_string(out.header.schema)) + "'");
        }
        tok.emplace(out.header.tokenizer);
        have_header = true;
        continue;
      }
      auto rec = j.get<Record>();
      validate_record(rec, *tok);
      if (const auto* key = unique_key(rec); key && !ids.insert(*key).second) {
        throw ValidationError("id", "duplicate id '" + *key + "'");
      }
      out.records.push_back(std::move(rec));
    } catch (const ValidationError& e) {
      // Re-anchor at this line; the message already names the field.
      if (e.line() != 0) throw;
      throw ValidationError(e.field(), e.message(), lineno);
    } catch (const Json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

template <typename Record>
void save_dataset(const std::vector<Record>& records, const std::filesystem::path& path,
                  const std::string& tokenizer_id) {
  const Tokenizer tok(tokenizer_id);
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      validate_record(records[i], tok);
    } catch (const ValidationError& e) {
      throw ValidationError(e.field(), "record " + std::to_string(i) + ": " + e.message());
    }
    if (const auto* key = unique_key(records[i]); key && !ids.insert(*key).second) {
      throw ValidationError("id", "duplicate id '" + *key + "'");
    }
  }
  DatasetHeader header;
  header.schema = schema_of<Record>();
  header.tokenizer = tokenizer_id;
  std::string content = dump_line(Json(header)) + "\n";
  for (const auto& r : records) content += dump_line(Json(r)) + "\n";
  write_file_atomic(path, content);
}

template Dataset<InstructionRecord> load_dataset(const std::filesystem::path&);
template Dataset<CandidateSet> load_dataset(const std::filesystem::path&);
template Dataset<RankedSet> load_dataset(const std::filesystem::path&);
template Dataset<SkipRecord> load_dataset(const std::filesystem::path&);
template void save_dataset(const std::vector<InstructionRecord>&, const std::filesystem::path&, const std::string&);
template void save_dataset(const std::vector<CandidateSet>&, const std::filesystem::path&, const std::string&);
template void save_dataset(const std::vector<RankedSet>&, const std::filesystem::path&, const std::string&);
template void save_dataset(const std::vector<SkipRecord>&, const std::filesystem::path&, const std::string&);

}  // namespace rankft
