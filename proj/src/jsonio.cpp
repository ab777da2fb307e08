// SPDX-License-Identifier: Apache-2.0

#include "mrsa/jsonio.hpp"

#include <fstream>
#include <istream>
#include <unordered_set>

namespace mrsa {

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

Json span_json(const TokenSpan& s) { return Json::array({s.begin, s.end}); }

}  // namespace

Json to_json(const GenerationRequest& r) {
  return {{"prompt", r.prompt},
          {"decode_budget", r.decode_budget},
          {"temperature", r.temperature},
          {"top_p", r.top_p},
          {"stop", r.stop},
          {"seed", r.seed},
          {"tag",
           {{"problem_id", r.tag.problem_id},
            {"round", r.tag.round},
            {"worker", r.tag.worker},
            {"attempt", r.tag.attempt}}}};
}

Json to_json(const GenerationResult& r) {
  Json j = {{"text", r.text},
            {"generated_tokens", r.generated_tokens},
            {"finish_reason", to_string(r.finish)}};
  if (!r.pieces.empty()) j["pieces"] = r.pieces;
  if (!r.token_ids.empty()) j["token_ids"] = r.token_ids;
  if (!r.logprobs.empty()) j["logprobs"] = r.logprobs;
  if (!r.top_alternatives.empty()) {
    Json steps = Json::array();
    for (const auto& step : r.top_alternatives) {
      Json alts = Json::array();
      for (const auto& a : step) alts.push_back({{"text", a.text}, {"logprob", a.logprob}});
      steps.push_back(std::move(alts));
    }
    j["top_alternatives"] = std::move(steps);
  }
  if (!r.minp_kept.empty()) j["minp_kept"] = r.minp_kept;
  return j;
}

Json to_json(const ReplayRecord& r) {
  return {{"key", r.key}, {"request", to_json(r.request)}, {"result", to_json(r.result)}};
}

GenerationRequest request_from_json(const Json& j) {
  GenerationRequest r;
  r.prompt = j.at("prompt").get<std::string>();
  r.decode_budget = j.at("decode_budget").get<std::size_t>();
  r.temperature = get_or(j, "temperature", 1.0);
  r.top_p = get_or(j, "top_p", 1.0);
  r.stop = get_or(j, "stop", std::vector<std::string>{});
  r.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (auto it = j.find("tag"); it != j.end()) {
    r.tag.problem_id = get_or<std::string>(*it, "problem_id", "");
    r.tag.round = get_or<std::size_t>(*it, "round", 0);
    r.tag.worker = get_or<std::size_t>(*it, "worker", 0);
    r.tag.attempt = get_or<std::size_t>(*it, "attempt", 0);
  }
  return r;
}

GenerationResult result_from_json(const Json& j) {
  GenerationResult r;
  r.text = j.at("text").get<std::string>();
  r.generated_tokens = j.at("generated_tokens").get<std::size_t>();
  r.finish = parse_finish_reason(get_or<std::string>(j, "finish_reason", "stop"));
  r.pieces = get_or(j, "pieces", std::vector<std::string>{});
  r.token_ids = get_or(j, "token_ids", std::vector<TokenId>{});
  r.logprobs = get_or(j, "logprobs", std::vector<double>{});
  if (auto it = j.find("top_alternatives"); it != j.end()) {
    for (const auto& step : *it) {
      std::vector<TopAlternative> alts;
      for (const auto& a : step)
        alts.push_back({a.at("text").get<std::string>(), a.at("logprob").get<double>()});
      r.top_alternatives.push_back(std::move(alts));
    }
  }
  r.minp_kept = get_or(j, "minp_kept", std::vector<std::vector<TokenId>>{});
  return r;
}

ReplayRecord replay_record_from_json(const Json& j) {
  ReplayRecord r;
  r.request = request_from_json(j.at("request"));
  r.result = result_from_json(j.at("result"));
  r.key = get_or<std::string>(j, "key", "");
  return r;
}

Json to_json(const RsaConfig& c) {
  return {{"N", c.population},
          {"C", c.candidates},
          {"T", c.rounds},
          {"beta", c.beta},
          {"tau", c.tau},
          {"final_budget", c.final_budget},
          {"compaction", to_string(c.compaction)},
          {"seed", c.seed},
          {"max_aggregation_prompt", c.max_aggregation_prompt},
          {"early_stop", to_string(c.early_stop)},
          {"temperature", c.temperature},
          {"top_p", c.top_p},
          {"think_open", c.delimiters.open},
          {"think_close", c.delimiters.close}};
}

Json to_json(const CandidateTrace& t, const std::string& problem_id) {
  Json j = {{"problem_id", problem_id},
            {"round", t.round},
            {"worker", t.worker},
            {"tokens", t.tokens},
            {"text", t.text},
            {"reasoning_span", span_json(t.reasoning)},
            {"answer_span", t.answer ? span_json(*t.answer) : Json(nullptr)},
            {"generated_tokens", t.generated_tokens},
            {"finish_reason", to_string(t.finish_reason)}};
  if (t.finish_reason == FinishReason::Error) j["error"] = t.error;
  return j;
}

Json to_json(const ProblemResult& r) {
  Json j = {{"id", r.problem_id}, {"score", r.score}};
  if (r.error) {
    j["error"] = *r.error;
    return j;
  }
  j["final_round"] = r.final_round;
  j["answers"] = r.answers;
  j["correct"] = r.correct;
  j["verifier_failed"] = r.verifier_failed;
  auto totals = ledger_total(r.ledger);
  Json stages = Json::array();
  for (const auto& s : r.ledger.stages())
    stages.push_back({{"stage", s.stage}, {"generated", s.generated}});
  j["ledger"] = {{"total", totals.direct}, {"stages", std::move(stages)}};
  return j;
}

Json to_json(const EvalReport& r) {
  Json results = Json::array();
  for (const auto& p : r.results) results.push_back(to_json(p));
  return {{"config", to_json(r.config)},
          {"summary",
           {{"problems", r.results.size()},
            {"failed", r.failed},
            {"mean_score", r.mean_score},
            {"mean_generated_tokens", r.mean_generated_tokens},
            {"stage_token_means", r.stage_token_means}}},
          {"results", std::move(results)}};
}

Problem problem_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("problem must be a JSON object");
  Problem p;
  p.id = j.at("id").get<std::string>();
  p.prompt = j.at("prompt").get<std::string>();
  if (p.prompt.empty()) throw ParseError("problem '" + p.id + "' has an empty prompt");
  if (auto it = j.find("gold_answer"); it != j.end() && !it->is_null())
    p.gold_answer = it->is_string() ? it->get<std::string>() : it->dump();
  auto kind = get_or<std::string>(j, "verifier_kind", "exact-match-normalized");
  if (kind == "external") {
    p.verifier_kind = VerifierKind::External;
  } else if (kind != "exact-match-normalized") {
    throw ParseError("problem '" + p.id + "': unknown verifier_kind '" + kind + "'");
  }
  return p;
}

std::vector<Json> read_jsonl(std::istream& in, const std::string& name) {
  std::vector<Json> rows;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<Json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return read_jsonl(in, path);
}

void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  for (const auto& r : rows) out << r.dump() << '\n';
}

std::vector<Problem> read_problems(const std::string& path) {
  std::vector<Problem> out;
  std::unordered_set<std::string> seen;
  std::size_t row = 0;
  for (const auto& j : read_jsonl(path)) {
    ++row;
    try {
      out.push_back(problem_from_json(j));
    } catch (const Json::exception& e) {
      throw ParseError(path + ": problem " + std::to_string(row) + ": " + e.what());
    }
    if (!seen.insert(out.back().id).second)
      throw ParseError(path + ": duplicate problem id '" + out.back().id + "'");
  }
  return out;
}

std::vector<Json> trace_rows(const EvalReport& report) {
  std::vector<Json> rows;
  for (const auto& r : report.results)
    for (const auto& round : r.rounds)
      for (std::size_t j = 0; j < round.traces.size(); ++j) {
        Json row = to_json(round.traces[j], r.problem_id);
        row["prompt"] = round.prompts[j];
        rows.push_back(std::move(row));
      }
  return rows;
}

}  // namespace mrsa
