// SPDX-License-Identifier: Apache-2.0
//
// JSON / JSONL encodings of the library types. Field names and shapes are
// documented in docs/formats.md; keys are emitted sorted.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrsa/backend.hpp"
#include "mrsa/core.hpp"
#include "mrsa/orchestrator.hpp"

namespace mrsa {

using Json = nlohmann::json;

Json to_json(const GenerationRequest& r);
Json to_json(const GenerationResult& r);
Json to_json(const ReplayRecord& r);
Json to_json(const RsaConfig& c);
Json to_json(const CandidateTrace& t, const std::string& problem_id);
Json to_json(const ProblemResult& r);
Json to_json(const EvalReport& r);

GenerationRequest request_from_json(const Json& j);
GenerationResult result_from_json(const Json& j);
ReplayRecord replay_record_from_json(const Json& j);
Problem problem_from_json(const Json& j);

// One JSON value per non-blank line. Throws ParseError naming path:line.
std::vector<Json> read_jsonl(const std::string& path);
std::vector<Json> read_jsonl(std::istream& in, const std::string& name);
void write_jsonl(const std::string& path, const std::vector<Json>& rows);

// Problems file; rejects duplicate ids and empty prompts.
std::vector<Problem> read_problems(const std::string& path);

// Every trace of every round, in (problem, round, worker) order.
std::vector<Json> trace_rows(const EvalReport& report);

}  // namespace mrsa
