#pragma once
// JSON mappings for the record types.

#include "json.hpp"
#include "rankft/datamodel.hpp"

namespace rankft {

using Json = nlohmann::json;

void to_json(Json& j, const InstructionRecord& r);
void from_json(const Json& j, InstructionRecord& r);
void to_json(Json& j, const CandidateResponse& c);
void from_json(const Json& j, CandidateResponse& c);
void to_json(Json& j, const CandidateSet& s);
void from_json(const Json& j, CandidateSet& s);
void to_json(Json& j, const RankedSet& s);
void from_json(const Json& j, RankedSet& s);
void to_json(Json& j, const JudgeVerdict& v);
void from_json(const Json& j, JudgeVerdict& v);
void to_json(Json& j, const SkipRecord& s);
void from_json(const Json& j, SkipRecord& s);
void to_json(Json& j, const DatasetHeader& h);
void from_json(const Json& j, DatasetHeader& h);

// Compact single-line serialisation used by every line-delimited file.
std::string dump_line(const Json& j);

}  // namespace rankft
