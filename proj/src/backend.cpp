// SPDX-License-Identifier: Apache-2.0

#include "mrsa/backend.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>

#include "mrsa/jsonio.hpp"
#include "mrsa/rng.hpp"

namespace mrsa {

void GenerationRequest::validate() const {
  if (decode_budget < 1)
    throw BackendError(BackendErrorKind::Malformed, false,
                       "decode_budget must be >= 1");
}

std::string request_key(const GenerationRequest& r) {
  char num[64];
  std::string s = r.prompt;
  s.push_back('\0');
  s += std::to_string(r.decode_budget);
  std::snprintf(num, sizeof num, "|%.17g|%.17g|", r.temperature, r.top_p);
  s += num;
  for (const auto& st : r.stop) {
    s += st;
    s.push_back('\0');
  }
  s += std::to_string(r.seed);
  std::snprintf(num, sizeof num, "%016llx",
                static_cast<unsigned long long>(fnv1a64(s)));
  return num;
}

void enforce_budget(GenerationResult& result, std::size_t budget) {
  if (!result.pieces.empty() && result.pieces.size() > budget) {
    result.pieces.resize(budget);
    if (result.token_ids.size() > budget) result.token_ids.resize(budget);
    if (result.logprobs.size() > budget) result.logprobs.resize(budget);
    if (result.top_alternatives.size() > budget)
      result.top_alternatives.resize(budget);
    if (result.minp_kept.size() > budget) result.minp_kept.resize(budget);
    result.text = join_pieces(result.pieces);
    result.finish = FinishReason::Budget;
  }
  if (result.generated_tokens > budget) {
    result.generated_tokens = budget;
    result.finish = FinishReason::Budget;
  }
  if (!result.pieces.empty()) result.generated_tokens = result.pieces.size();
}

namespace {

void push(GenerationResult& r, std::string piece, TokenId id) {
  r.pieces.push_back(std::move(piece));
  r.token_ids.push_back(id);
}

constexpr TokenId kThinkOpenId = 1;
constexpr TokenId kThinkCloseId = 2;

}  // namespace

GenerationResult EchoBackend::generate(const GenerationRequest& request) {
  request.validate();
  const std::size_t length =
      options_.length_fn ? options_.length_fn(request) : options_.length;
  const std::uint64_t prompt_hash = fnv1a64(request.prompt);
  SplitMix64 g(derive_seed(prompt_hash, {request.seed}));

  GenerationResult r;
  if (length > 0) push(r, "<think>", kThinkOpenId);
  const std::size_t reasoning = length >= 4 ? length - 3 : (length ? length - 1 : 0);
  for (std::size_t i = 0; i < reasoning; ++i) {
    auto id = static_cast<TokenId>(g.below(options_.vocab));
    push(r, " e" + std::to_string(id), id);
  }
  if (length >= 4) {
    push(r, "</think>", kThinkCloseId);
    std::string ans = " \\boxed{" + std::to_string(prompt_hash % 1000) + "}";
    push(r, ans, synthetic_token_id(ans));
  }
  r.text = join_pieces(r.pieces);
  r.generated_tokens = r.pieces.size();
  r.finish = FinishReason::Stop;
  enforce_budget(r, request.decode_budget);
  return r;
}

OracleBackend::OracleBackend(
    std::unordered_map<std::string, std::string> gold_by_problem,
    OracleOptions options)
    : gold_(std::move(gold_by_problem)), options_(std::move(options)) {
  if (options_.round_accuracy.empty())
    throw ConfigError("oracle backend needs at least one round accuracy");
  for (double p : options_.round_accuracy)
    if (!(p >= 0.0 && p <= 1.0))
      throw ConfigError("oracle round accuracy must be in [0, 1]");
}

OracleBackend OracleBackend::for_problems(const std::vector<Problem>& problems,
                                          OracleOptions options) {
  std::unordered_map<std::string, std::string> gold;
  for (const auto& p : problems)
    if (p.gold_answer) gold.emplace(p.id, *p.gold_answer);
  return OracleBackend(std::move(gold), std::move(options));
}

GenerationResult OracleBackend::generate(const GenerationRequest& request) {
  request.validate();
  auto it = gold_.find(request.tag.problem_id);
  if (it == gold_.end())
    throw BackendError(BackendErrorKind::Scripted, false,
                       "oracle has no gold answer for problem '" +
                           request.tag.problem_id + "'");
  const auto& acc = options_.round_accuracy;
  const double p = acc[std::min(request.tag.round, acc.size() - 1)];
  SplitMix64 g(derive_seed(request.seed, {fnv1a64("oracle")}));
  const bool correct = g.uniform() < p;

  std::string answer = it->second;
  if (!correct) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(answer.data(), answer.data() + answer.size(), v);
    if (ec == std::errc() && ptr == answer.data() + answer.size()) {
      answer = std::to_string(v + 1 + static_cast<long long>(g.below(9)));
    } else {
      answer = "not-" + answer;
    }
  }

  GenerationResult r;
  push(r, "<think>", kThinkOpenId);
  for (std::size_t i = 0; i < options_.reasoning_length; ++i) {
    auto id = static_cast<TokenId>(g.below(options_.vocab));
    push(r, " o" + std::to_string(id), id);
  }
  push(r, "</think>", kThinkCloseId);
  for (std::string w : {" The", " answer", " is"}) push(r, w, synthetic_token_id(w));
  std::string boxed = " \\boxed{" + answer + "}.";
  push(r, boxed, synthetic_token_id(boxed));
  r.text = join_pieces(r.pieces);
  r.generated_tokens = r.pieces.size();
  r.finish = FinishReason::Stop;
  enforce_budget(r, request.decode_budget);
  return r;
}

std::vector<Problem> make_arithmetic_problems(std::size_t count,
                                              std::uint64_t seed) {
  SplitMix64 g(seed);
  std::vector<Problem> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto a = g.below(1000), b = g.below(1000);
    char id[32];
    std::snprintf(id, sizeof id, "arith-%04zu", i);
    Problem p;
    p.id = id;
    p.prompt = "What is " + std::to_string(a) + " + " + std::to_string(b) +
               "? Give the final answer as an integer.";
    p.gold_answer = std::to_string(a + b);
    out.push_back(std::move(p));
  }
  return out;
}

ReplayBackend::ReplayBackend(std::vector<ReplayRecord> records) {
  for (auto& r : records) {
    std::string key = r.key.empty() ? request_key(r.request) : r.key;
    records_.emplace(std::move(key), std::move(r.result));
  }
}

ReplayBackend ReplayBackend::from_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open replay file '" + path + "'");
  std::vector<ReplayRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(replay_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ReplayBackend(std::move(records));
}

GenerationResult ReplayBackend::generate(const GenerationRequest& request) {
  auto key = request_key(request);
  auto it = records_.find(key);
  if (it == records_.end())
    throw BackendError(BackendErrorKind::ReplayMiss, false,
                       "no recorded result for request " + key + " (problem '" +
                           request.tag.problem_id + "', round " +
                           std::to_string(request.tag.round) + ", worker " +
                           std::to_string(request.tag.worker) + ")");
  return it->second;
}

GenerationResult RecordingBackend::generate(const GenerationRequest& request) {
  auto result = inner_.generate(request);
  ReplayRecord rec{request_key(request), request, result};
  std::lock_guard lock(mu_);
  records_.insert_or_assign(rec.key, std::move(rec));
  return result;
}

std::vector<ReplayRecord> RecordingBackend::records() const {
  std::lock_guard lock(mu_);
  std::vector<ReplayRecord> out;
  out.reserve(records_.size());
  for (const auto& [k, v] : records_) out.push_back(v);
  return out;
}

void RecordingBackend::write_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace dump '" + path + "'");
  for (const auto& r : records()) out << to_json(r).dump() << '\n';
}

InflightLimiter::InflightLimiter(std::size_t cap) : cap_(cap) {
  if (cap_ < 1) throw ConfigError("concurrency cap must be >= 1");
}

void InflightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return current_ < cap_; });
  ++current_;
  std::size_t seen = peak_.load();
  while (current_ > seen && !peak_.compare_exchange_weak(seen, current_)) {
  }
}

void InflightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --current_;
  }
  cv_.notify_one();
}

std::size_t InflightLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return current_;
}

GenerationResult LimitedBackend::generate(const GenerationRequest& request) {
  limiter_.acquire();
  struct Release {
    InflightLimiter& l;
    ~Release() { l.release(); }
  } release{limiter_};
  return inner_.generate(request);
}

}  // namespace mrsa
