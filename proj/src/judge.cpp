#include "rankft/judge.hpp"

#include <cctype>
#include <regex>
#include <set>
#include <sstream>

#include "rankft/assets.hpp"

namespace rankft {

std::string_view judge_prompt_template() { return assets::kJudgePromptV1; }

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string index_list(int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += '/';
    out += std::to_string(i);
  }
  return out;
}

// Single left-to-right pass, so substituted text is never re-scanned.
std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool matched = false;
    if (tmpl[i] == '{') {
      for (const auto& [key, value] : values) {
        if (tmpl.substr(i, key.size()) == key) {
          out += value;
          i += key.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += tmpl[i++];
  }
  return out;
}

}  // namespace

std::string build_judge_prompt(const InstructionRecord& instruction, const std::vector<std::string>& responses) {
  const int n = static_cast<int>(responses.size());
  if (n < 1 || n > kMaxJudgeCandidates) {
    throw ValidationError("candidates", "judge prompt takes 1 to " + std::to_string(kMaxJudgeCandidates) +
                                            " responses, got " + std::to_string(n));
  }
  std::string tmpl(judge_prompt_template());
  if (n < kMaxJudgeCandidates) {
    for (int k = n; k < kMaxJudgeCandidates; ++k) {
      const std::string block = "###Response " + std::to_string(k) + ":\n{Response " + std::to_string(k) + "}\n\n";
      replace_all(tmpl, block, "");
    }
    replace_all(tmpl, "Response 0/1/2/3/4", "Response " + index_list(n) + "/4");
    replace_all(tmpl, "Response 0/1/2/3 in reply", "Response " + index_list(n) + " in reply");
  }
  std::vector<std::pair<std::string, std::string>> values{{"{Instruction}", instruction.instruction},
                                                          {"{Input}", instruction.input}};
  for (int k = 0; k < n; ++k) values.emplace_back("{Response " + std::to_string(k) + "}", responses[k]);
  return substitute(tmpl, values);
}

std::string build_judge_prompt(const InstructionRecord& instruction, const std::vector<CandidateResponse>& candidates) {
  std::vector<std::string> texts;
  texts.reserve(candidates.size());
  for (const auto& c : candidates) texts.push_back(c.text);
  return build_judge_prompt(instruction, texts);
}

namespace {

const std::regex& response_line_re() {
  static const std::regex re(R"(^\s*(?:#+\s*)?response\s+(\d+)\s*:\s*\[([^\]]*)\])", std::regex::icase);
  return re;
}

const std::regex& rank_line_re() {
  static const std::regex re(R"(rank\s*:\s*\[([^\]]*)\])", std::regex::icase);
  return re;
}

std::vector<int> integers_in(const std::string& s) {
  static const std::regex num(R"(\d+)");
  std::vector<int> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), num); it != std::sregex_iterator(); ++it) {
    const auto digits = it->str();
    if (digits.size() > 6) return {-1};
    out.push_back(std::stoi(digits));
  }
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

QuestionType classify_line(const std::string& line) {
  const auto l = lower(line);
  const bool open = l.find("open-ended") != std::string::npos || l.find("open ended") != std::string::npos;
  const bool close = l.find("close-ended") != std::string::npos || l.find("closed-ended") != std::string::npos ||
                     l.find("close ended") != std::string::npos || l.find("closed ended") != std::string::npos;
  if (open && !close) return QuestionType::open_ended;
  if (close && !open) return QuestionType::close_ended;
  return QuestionType::unknown;
}

}  // namespace

JudgeVerdict parse_judge_output(std::string_view raw, int n) {
  if (n < 1 || n > kMaxJudgeCandidates) throw DomainError("parse_judge_output: n must lie in [1, 4]");
  JudgeVerdict v;
  v.raw_text = std::string(raw);
  v.totals.assign(static_cast<std::size_t>(n), std::nullopt);
  v.subscores.assign(static_cast<std::size_t>(n), {});
  std::vector<std::size_t> total_line(static_cast<std::size_t>(n), 0);

  std::istringstream in{std::string(raw)};
  std::string line;
  std::size_t lineno = 0;
  std::size_t rank_line = 0;
  std::string rank_body;
  bool typed = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!typed) {
      if (const auto q = classify_line(line); q != QuestionType::unknown) {
        v.question_type = q;
        typed = true;
      }
    }
    std::smatch m;
    if (std::regex_search(line, m, response_line_re())) {
      const auto idx_digits = m[1].str();
      const int idx = idx_digits.size() > 3 ? 1000 : std::stoi(idx_digits);
      if (idx == kMaxJudgeCandidates) continue;  // the judge's own reference answer
      if (idx >= n) throw ParseError(lineno, "score for Response " + idx_digits + " but only " + std::to_string(n) + " responses");
      const std::string body = m[2].str();
      if (!std::regex_match(body, std::regex(R"([\s\d+=,]*)"))) {
        throw ParseError(lineno, "unexpected text in score brackets: [" + body + "]");
      }
      const auto nums = integers_in(body);
      std::vector<int> sub;
      int total = 0;
      if (nums.size() == 1) {
        total = nums[0];
      } else if (nums.size() == 3 || nums.size() == 4) {
        sub.assign(nums.begin(), nums.begin() + 3);
        total = sub[0] + sub[1] + sub[2];
        if (nums.size() == 4 && nums[3] != total) {
          throw ValidationError("totals", "Response " + idx_digits + " subscores do not add up to " + std::to_string(nums[3]), lineno);
        }
        for (int s : sub) {
          if (s < 0 || s > 5) throw ValidationError("subscores", "Response " + idx_digits + " criterion score outside [0, 5]", lineno);
        }
      } else {
        throw ParseError(lineno, "expected one total or three criterion scores in [" + body + "]");
      }
      if (total < 0 || total > 15) {
        throw ValidationError("totals", "Response " + idx_digits + " total " + std::to_string(total) + " outside [0, 15]", lineno);
      }
      v.totals[idx] = total;
      v.subscores[idx] = std::move(sub);
      total_line[idx] = lineno;
      continue;
    }
    if (std::regex_search(line, m, rank_line_re())) {
      rank_body = m[1].str();
      rank_line = lineno;
    }
  }

  if (rank_line == 0) throw ParseError(lineno, "no 'rank: [...]' line in judge reply");
  if (!std::regex_match(rank_body, std::regex(R"(\s*\d+(\s*,\s*\d+)*\s*)"))) {
    throw ParseError(rank_line, "malformed rank list [" + rank_body + "]");
  }
  std::set<int> seen;
  for (int idx : integers_in(rank_body)) {
    if (idx < 0 || idx >= n) throw ParseError(rank_line, "rank refers to Response " + std::to_string(idx) + " of " + std::to_string(n));
    if (!seen.insert(idx).second) throw ParseError(rank_line, "rank lists Response " + std::to_string(idx) + " twice");
    if (!v.totals[idx]) throw ParseError(rank_line, "ranked Response " + std::to_string(idx) + " has no score");
    v.rank.push_back(idx);
  }
  for (std::size_t i = 1; i < v.rank.size(); ++i) {
    if (*v.totals[v.rank[i]] > *v.totals[v.rank[i - 1]]) {
      throw ValidationError("rank", "Response " + std::to_string(v.rank[i]) + " outscores Response " +
                                        std::to_string(v.rank[i - 1]) + " but is ranked below it",
                            rank_line);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!seen.contains(i)) v.duplicates_removed.insert(i);
  }
  validate(v, static_cast<std::size_t>(n));
  return v;
}

std::string render_judge_reply(const JudgeVerdict& v) {
  std::string out;
  if (v.question_type == QuestionType::open_ended) out += "The instruction requires open-ended responses.\n";
  if (v.question_type == QuestionType::close_ended) out += "The instruction requires close-ended responses.\n";
  for (std::size_t i = 0; i < v.totals.size(); ++i) {
    if (!v.totals[i]) continue;
    out += "Response " + std::to_string(i) + ": [";
    const auto& sub = v.subscores[i];
    if (sub.size() == 3) {
      out += std::to_string(sub[0]) + " + " + std::to_string(sub[1]) + " + " + std::to_string(sub[2]) + " = ";
    }
    out += std::to_string(*v.totals[i]) + "]\n";
  }
  out += "rank: [";
  for (std::size_t i = 0; i < v.rank.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v.rank[i]);
  }
  out += "]\n";
  return out;
}

RankedSet verdict_to_ranked_set(const std::string& instruction_id, const std::vector<CandidateResponse>& candidates,
                                const JudgeVerdict& verdict) {
  RankedSet out;
  out.instruction_id = instruction_id;
  out.ranking_source = RankingSource::judge;
  for (int idx : verdict.rank) {
    out.candidates.push_back(candidates.at(static_cast<std::size_t>(idx)));
    out.scores.push_back(static_cast<double>(*verdict.totals.at(static_cast<std::size_t>(idx))));
  }
  out.n = static_cast<int>(out.candidates.size());
  return out;
}

JudgeOutcome judge_rank(const InstructionRecord& instruction, const std::vector<CandidateResponse>& candidates,
                        LlmClient& judge, const std::string& stage) {
  if (judge.spec().kind != BackendKind::judge) throw CapabilityError("backend is not configured as a judge");
  judge.set_stage(stage);
  CompletionRequest req;
  req.prompt = build_judge_prompt(instruction, candidates);
  req.n = 1;
  req.temperature = judge.spec().temperature;
  req.max_tokens = judge.spec().max_tokens;
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    req.attempt = attempt;
    const Completion reply = judge.request(req);
    if (reply.choices.empty()) {
      last_error = "empty judge reply";
      continue;
    }
    try {
      JudgeVerdict verdict = parse_judge_output(reply.choices.front().text, static_cast<int>(candidates.size()));
      JudgeOutcome out;
      out.ranked = verdict_to_ranked_set(instruction.id, candidates, verdict);
      out.verdict = std::move(verdict);
      return out;
    } catch (const ParseError& e) {
      last_error = e.what();
    } catch (const ValidationError& e) {
      last_error = e.what();
    }
  }
  JudgeOutcome out;
  out.skip = SkipRecord{instruction.id, stage, "judge reply unparseable after retry: " + last_error};
  return out;
}

}  // namespace rankft
