#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankft/tokenizer.hpp"

namespace rankft {

enum class ResponseSource { teacher, student, original, judge_reference };
enum class RankingSource { probabilistic, judge, prm };
// `unknown` when the judge never states a classification.
enum class QuestionType { open_ended, close_ended, unknown };

std::string_view to_string(ResponseSource s);
std::string_view to_string(RankingSource s);
std::string_view to_string(QuestionType q);
ResponseSource parse_response_source(std::string_view s);
RankingSource parse_ranking_source(std::string_view s);
QuestionType parse_question_type(std::string_view s);

// One instruction-tuning example: instruction i, optional input, reference response r.
struct InstructionRecord {
  std::string id;
  std::string instruction;
  std::string input;
  std::string original_response;

  bool operator==(const InstructionRecord&) const = default;
};

struct CandidateResponse {
  std::string text;
  ResponseSource source = ResponseSource::student;
  double temperature = 1.0;
  // Sum of per-token teacher log-probabilities; present iff source == teacher.
  std::optional<double> teacher_logprob_sum;
  // Token count under the dataset tokenizer, end-of-sequence marker excluded.
  int length = 0;
  // Sampler provenance: number of resamples drawn after the first sample,
  // and whether the response was kept as the least-similar fallback.
  int resamples = 0;
  bool fallback = false;

  bool operator==(const CandidateResponse&) const = default;
};

// Unranked responses for one instruction, as produced by a sampler.
struct CandidateSet {
  std::string instruction_id;
  std::vector<CandidateResponse> candidates;

  bool operator==(const CandidateSet&) const = default;
};

// Candidates in quality order; position 0 is best.
struct RankedSet {
  std::string instruction_id;
  std::vector<CandidateResponse> candidates;
  std::vector<double> scores;
  RankingSource ranking_source = RankingSource::probabilistic;
  int n = 0;
  // Free-form origin tag, set when datasets are mixed.
  std::string provenance;

  bool operator==(const RankedSet&) const = default;
};

struct JudgeVerdict {
  QuestionType question_type = QuestionType::unknown;
  // Per candidate: the three criterion scores when the judge itemised them, else empty.
  std::vector<std::vector<int>> subscores;
  // Per candidate: the stated total, absent when the judge gave none.
  std::vector<std::optional<int>> totals;
  std::set<int> duplicates_removed;
  std::vector<int> rank;
  std::string raw_text;

  bool operator==(const JudgeVerdict&) const = default;
};

// A record the pipeline chose to drop, with the reason.
struct SkipRecord {
  std::string instruction_id;
  std::string stage;
  std::string reason;

  bool operator==(const SkipRecord&) const = default;
};

// ---- validation ----

void validate(const InstructionRecord& r);
void validate(const CandidateResponse& c, const Tokenizer& tok);
void validate(const CandidateSet& s, const Tokenizer& tok);
void validate(const RankedSet& s, const Tokenizer& tok);
void validate(const JudgeVerdict& v, std::size_t n);
void validate(const SkipRecord& s);
// Extra check that depends on the stage configuration: 1 <= n <= max_n.
void validate_size(const RankedSet& s, int max_n);

// Indices that sort `scores` in non-increasing order; ties keep input order.
std::vector<std::size_t> stable_argsort_desc(std::span<const double> scores);

// Builds a RankedSet by stably sorting candidates on descending score.
RankedSet make_ranked_set(std::string instruction_id, const std::vector<CandidateResponse>& candidates,
                          std::span<const double> scores, RankingSource source);

// ---- line-delimited dataset files ----

enum class Schema { instructions, candidates, ranked, skips };
std::string_view to_string(Schema s);

struct DatasetHeader {
  static constexpr int kVersion = 1;
  int version = kVersion;
  Schema schema = Schema::instructions;
  std::string tokenizer{Tokenizer::kWhitespace};

  bool operator==(const DatasetHeader&) const = default;
};

template <typename Record>
struct Dataset {
  DatasetHeader header;
  std::vector<Record> records;
};

template <typename Record>
constexpr Schema schema_of();
template <>
constexpr Schema schema_of<InstructionRecord>() { return Schema::instructions; }
template <>
constexpr Schema schema_of<CandidateSet>() { return Schema::candidates; }
template <>
constexpr Schema schema_of<RankedSet>() { return Schema::ranked; }
template <>
constexpr Schema schema_of<SkipRecord>() { return Schema::skips; }

// Reads a dataset file. The first non-empty line is the header; every
// following line is one record. A completely empty file is an empty
// dataset. Throws ParseError / ValidationError carrying the line number.
template <typename Record>
Dataset<Record> load_dataset(const std::filesystem::path& path);

// Validates every record (including id uniqueness) and writes the file via
// a temporary sibling plus rename. Throws IoError when the path is unwritable.
template <typename Record>
void save_dataset(const std::vector<Record>& records, const std::filesystem::path& path,
                  const std::string& tokenizer_id = std::string(Tokenizer::kWhitespace));

// Writes `content` to `path` atomically (temp file, then rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace rankft
