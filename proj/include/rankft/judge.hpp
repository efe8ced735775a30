#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rankft/datamodel.hpp"
#include "rankft/llm_io.hpp"

namespace rankft {

inline constexpr int kMaxJudgeCandidates = 4;

// The contextual-ranking prompt template, placeholders intact.
std::string_view judge_prompt_template();
inline constexpr std::string_view kJudgePromptVersion = "v1";

// Fills the template with the instruction, input and 1..4 responses. With
// fewer than four responses the missing blocks are dropped and the response
// lists ("0/1/2/3") shortened; the reference stays "Response 4".
std::string build_judge_prompt(const InstructionRecord& instruction, const std::vector<CandidateResponse>& candidates);
std::string build_judge_prompt(const InstructionRecord& instruction, const std::vector<std::string>& responses);

// Parses a judge reply for `n` candidates. Accepts per-response lines
//   Response k: [t]   or   Response k: [a + b + c = t]   or   Response k: [a, b, c]
// and the last "rank: [i, j, ...]" line. Lines for the reference Response 4
// are ignored. Throws ParseError (with line) on grammar problems and
// ValidationError (with line) when totals leave [0, 15] or the rank order
// contradicts the totals.
JudgeVerdict parse_judge_output(std::string_view raw, int n);

// Prints a verdict in the grammar parse_judge_output reads.
std::string render_judge_reply(const JudgeVerdict& verdict);

// Orders the surviving candidates by the verdict; scores are the totals.
RankedSet verdict_to_ranked_set(const std::string& instruction_id, const std::vector<CandidateResponse>& candidates,
                                const JudgeVerdict& verdict);

struct JudgeOutcome {
  std::optional<RankedSet> ranked;
  std::optional<JudgeVerdict> verdict;
  std::optional<SkipRecord> skip;
};

// Builds the prompt, queries the judge at its configured temperature and
// parses the reply. A reply that fails to parse is re-queried once (as a
// distinct cache entry); a second failure yields a skip record.
JudgeOutcome judge_rank(const InstructionRecord& instruction, const std::vector<CandidateResponse>& candidates,
                        LlmClient& judge, const std::string& stage = "judge");

}  // namespace rankft
