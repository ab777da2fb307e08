// SPDX-License-Identifier: Apache-2.0

#include "mrsa/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "mrsa/rng.hpp"

namespace mrsa {

// ---------------------------------------------------------------------------
// Ledger

void TokenLedger::open_stage(std::size_t stage, std::size_t workers) {
  if (!stages_.empty() && !stages_.back().closed)
    throw LedgerError("stage " + std::to_string(stages_.back().stage) +
                      " is still open");
  stages_.push_back({stage, std::vector<std::uint64_t>(workers, 0), false});
}

void TokenLedger::record(std::size_t worker, std::uint64_t generated) {
  if (stages_.empty() || stages_.back().closed)
    throw LedgerError("no open stage to record into");
  auto& s = stages_.back();
  if (worker >= s.generated.size())
    throw LedgerError("worker " + std::to_string(worker) + " out of range");
  s.generated[worker] = generated;
}

void TokenLedger::close_stage() {
  if (stages_.empty() || stages_.back().closed)
    throw LedgerError("no open stage to close");
  stages_.back().closed = true;
}

void TokenLedger::add_stage(std::size_t stage,
                            std::vector<std::uint64_t> generated) {
  open_stage(stage, 0);
  stages_.back().generated = std::move(generated);
  close_stage();
}

LedgerTotals ledger_total(const TokenLedger& ledger) {
  LedgerTotals t;
  for (const auto& s : ledger.stages()) {
    if (!s.closed)
      throw LedgerError("stage " + std::to_string(s.stage) + " is still open");
    std::uint64_t sum = 0;
    for (auto g : s.generated) sum += g;
    t.direct += sum;
    if (s.workers() == 0) {
      t.stage_means.push_back(0.0);
      continue;
    }
    const long double mean =
        static_cast<long double>(sum) / static_cast<long double>(s.workers());
    t.stage_means.push_back(static_cast<double>(mean));
    t.from_means += static_cast<std::uint64_t>(
        std::llround(static_cast<long double>(s.workers()) * mean));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Answers

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Canonical form of a plain numeral, or nullopt when `s` is not one.
std::optional<std::string> canonical_number(const std::string& s) {
  std::size_t i = 0;
  bool negative = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) negative = s[i++] == '-';
  std::string int_part, frac_part;
  bool saw_digit = false, grouped = false;
  std::size_t group_len = 0;
  for (; i < s.size() && s[i] != '.'; ++i) {
    char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      int_part += c;
      saw_digit = true;
      ++group_len;
    } else if (c == ',') {
      if (!saw_digit || (grouped && group_len != 3) || (!grouped && group_len > 3))
        return std::nullopt;
      grouped = true;
      group_len = 0;
    } else {
      return std::nullopt;
    }
  }
  if (grouped && group_len != 3) return std::nullopt;
  if (i < s.size()) {
    ++i;  // '.'
    for (; i < s.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
      frac_part += s[i];
    }
    if (frac_part.empty() && !saw_digit) return std::nullopt;
  } else if (!saw_digit) {
    return std::nullopt;
  }
  auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  std::string out;
  if (negative && !(int_part == "0" && frac_part.empty())) out += '-';
  out += int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view answer) {
  std::string s = trim(answer);
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$')
    s = trim(std::string_view(s).substr(1, s.size() - 2));
  std::string compact;
  for (char c : s)
    if (!is_space(c)) compact += c;
  auto trailing = [](char c) { return std::string_view(".,;:!?").find(c) != std::string_view::npos; };
  auto leading = [](char c) { return std::string_view(",;:!?").find(c) != std::string_view::npos; };
  while (!compact.empty() && trailing(compact.back())) compact.pop_back();
  std::size_t b = 0;
  while (b < compact.size() && leading(compact[b])) ++b;
  compact.erase(0, b);
  if (auto num = canonical_number(compact)) return *num;
  return compact;
}

std::string extract_answer(std::string_view text) {
  static constexpr std::string_view kBoxed = "\\boxed{";
  auto at = text.rfind(kBoxed);
  if (at == std::string_view::npos) return normalize_answer(text);
  std::size_t i = at + kBoxed.size();
  int depth = 1;
  std::size_t j = i;
  for (; j < text.size(); ++j) {
    if (text[j] == '{') ++depth;
    if (text[j] == '}' && --depth == 0) break;
  }
  return normalize_answer(text.substr(i, j - i));
}

bool ExactMatchVerifier::verify(const Problem& problem,
                                const std::string& answer) const {
  if (problem.verifier_kind == VerifierKind::External)
    throw Unsupported("problem '" + problem.id +
                      "' needs an external verifier, none configured");
  if (!problem.gold_answer)
    throw Unsupported("problem '" + problem.id + "' has no gold answer");
  const std::string got = normalize_answer(answer);
  return !got.empty() && got == normalize_answer(*problem.gold_answer);
}

// ---------------------------------------------------------------------------
// Rounds

namespace {

template <class Fn>
void parallel_for(std::size_t n, std::size_t width, Fn&& fn) {
  width = std::max<std::size_t>(1, std::min(width, n));
  if (width == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> threads;
  threads.reserve(width);
  for (std::size_t w = 0; w < width; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

std::uint64_t problem_key(const Problem& p) { return fnv1a64(p.id); }

CandidateTrace error_trace(std::size_t round, std::size_t worker,
                           std::string message) {
  CandidateTrace t;
  t.round = round;
  t.worker = worker;
  t.finish_reason = FinishReason::Error;
  t.error = std::move(message);
  return t;
}

CandidateTrace trace_from_result(GenerationResult result, std::size_t round,
                                 std::size_t worker, std::size_t budget,
                                 const RsaConfig& config) {
  if (result.pieces.empty() && !result.text.empty()) {
    const std::string delims[] = {config.delimiters.open, config.delimiters.close};
    result.pieces = split_pieces(result.text, delims);
    if (result.token_ids.size() != result.pieces.size()) result.token_ids.clear();
    // Without per-token text the usage count stays authoritative unless it
    // exceeds the budget.
    const std::size_t reported = result.generated_tokens;
    enforce_budget(result, budget);
    if (reported <= budget && reported > 0) result.generated_tokens = reported;
  } else {
    enforce_budget(result, budget);
  }
  return make_trace(round, worker, std::move(result.pieces),
                    std::move(result.token_ids), result.generated_tokens,
                    result.finish, config.delimiters);
}

CandidateTrace generate_candidate(const Problem& problem,
                                  const std::string& prompt,
                                  const RsaConfig& config, Backend& backend,
                                  std::size_t round, std::size_t worker,
                                  const RunOptions& options) {
  const std::size_t budget = config.budget_for_round(round);
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= options.max_retries; ++attempt) {
    GenerationRequest req;
    req.prompt = prompt;
    req.decode_budget = budget;
    req.temperature = config.temperature;
    req.top_p = config.top_p;
    req.seed = derive_seed(config.seed, {problem_key(problem), round, worker, attempt});
    req.tag = {problem.id, round, worker, attempt};
    try {
      return trace_from_result(backend.generate(req), round, worker, budget, config);
    } catch (const BackendError& e) {
      last_error = std::string(to_string(e.kind())) + ": " + e.what();
    }
  }
  return error_trace(round, worker, "backend failed after " +
                                        std::to_string(options.max_retries + 1) +
                                        " attempts: " + last_error);
}

CarryState carry_of(const CandidateTrace& trace, const RsaConfig& config) {
  if (trace.finish_reason != FinishReason::Error) {
    try {
      return compact_carry(trace, config);
    } catch (const EmptyTrace&) {
    }
  }
  CarryState empty;
  empty.body.source = {trace.round, trace.worker};
  return empty;
}

RoundOutput finish_round(std::size_t round, std::vector<std::string> prompts,
                         std::vector<CandidateTrace> traces,
                         const RsaConfig& config, TokenLedger* ledger) {
  RoundOutput out;
  out.round = round;
  out.prompts = std::move(prompts);
  out.population.round = round;
  std::vector<std::uint64_t> generated;
  std::size_t failures = 0;
  for (const auto& t : traces) {
    generated.push_back(t.finish_reason == FinishReason::Error ? 0 : t.generated_tokens);
    failures += t.finish_reason == FinishReason::Error;
    out.population.members.push_back(carry_of(t, config));
  }
  if (ledger) ledger->add_stage(round, std::move(generated));
  if (!traces.empty() && failures == traces.size()) {
    std::string what = "all " + std::to_string(traces.size()) + " candidates failed in round " +
                       std::to_string(round) + ": " + traces.front().error;
    throw StageError(what, round, std::move(traces));
  }
  out.traces = std::move(traces);
  return out;
}

}  // namespace

RoundOutput run_round0(const Problem& problem, const RsaConfig& config,
                       Backend& backend, TokenLedger* ledger,
                       const RunOptions& options) {
  config.validate();
  const std::size_t n = config.population;
  std::vector<std::string> prompts(n, build_direct_prompt(problem));
  std::vector<CandidateTrace> traces(n);
  parallel_for(n, options.parallelism, [&](std::size_t j) {
    traces[j] = generate_candidate(problem, prompts[j], config, backend, 0, j, options);
  });
  return finish_round(0, std::move(prompts), std::move(traces), config, ledger);
}

RoundOutput run_aggregation_round(const Problem& problem,
                                  const Population& population,
                                  const RsaConfig& config, Backend& backend,
                                  std::size_t t, TokenLedger* ledger,
                                  const RunOptions& options) {
  config.validate();
  if (t < 1 || t > config.rounds)
    throw ConfigError("aggregation round " + std::to_string(t) +
                      " outside 1.." + std::to_string(config.rounds));
  const std::size_t n = config.population;
  if (population.members.size() != n)
    throw ConfigError("population has " + std::to_string(population.members.size()) +
                      " members, expected N = " + std::to_string(n));

  std::vector<std::string> prompts(n);
  std::vector<CandidateTrace> traces(n);
  parallel_for(n, options.parallelism, [&](std::size_t j) {
    std::vector<CarryState> carries;
    if (config.candidates == 1) {
      carries.push_back(population.members[j]);
    } else {
      SplitMix64 rng(derive_seed(config.seed, {problem_key(problem), t, j, 0xA66}));
      carries = sample_candidates(population, config.candidates, rng);
    }
    try {
      prompts[j] = build_aggregation_prompt(problem, carries, config, options.counter).text;
    } catch (const PromptOverflow& e) {
      traces[j] = error_trace(t, j, std::string("prompt overflow: ") + e.what());
      return;
    }
    traces[j] = generate_candidate(problem, prompts[j], config, backend, t, j, options);
  });
  return finish_round(t, std::move(prompts), std::move(traces), config, ledger);
}

namespace {

std::string answer_of(const CandidateTrace& t) {
  if (t.finish_reason == FinishReason::Error || !t.answer) return {};
  return extract_answer(t.answer_text());
}

bool consensus(const RoundOutput& round) {
  if (round.traces.empty()) return false;
  const std::string first = answer_of(round.traces.front());
  if (first.empty()) return false;
  return std::all_of(round.traces.begin(), round.traces.end(),
                     [&](const CandidateTrace& t) { return answer_of(t) == first; });
}

}  // namespace

ProblemResult run_problem(const Problem& problem, const RsaConfig& config,
                          Backend& backend, const Verifier& verifier,
                          const RunOptions& options) {
  config.validate();
  ProblemResult result;
  result.problem_id = problem.id;
  result.rounds.push_back(run_round0(problem, config, backend, &result.ledger, options));
  for (std::size_t t = 1; t <= config.rounds; ++t) {
    if (config.early_stop == EarlyStop::RoundConsensus && consensus(result.rounds.back()))
      break;
    result.rounds.push_back(run_aggregation_round(
        problem, result.rounds.back().population, config, backend, t,
        &result.ledger, options));
  }

  const RoundOutput& last = result.rounds.back();
  result.final_round = last.round;
  result.final_candidates = last.traces;
  std::size_t correct = 0;
  for (const auto& t : result.final_candidates) {
    std::string answer = answer_of(t);
    bool ok = false, failed = false;
    if (t.finish_reason != FinishReason::Error) {
      try {
        ok = verifier.verify(problem, answer);
      } catch (const std::exception&) {
        failed = true;
      }
    }
    correct += ok;
    result.answers.push_back(std::move(answer));
    result.correct.push_back(ok);
    result.verifier_failed.push_back(failed);
  }
  result.score = result.final_candidates.empty()
                     ? 0.0
                     : static_cast<double>(correct) /
                           static_cast<double>(result.final_candidates.size());
  return result;
}

EvalReport run_eval(const std::vector<Problem>& problems, const RsaConfig& config,
                    Backend& backend, const Verifier& verifier,
                    std::size_t concurrency_cap, const RunOptions& options,
                    InflightLimiter* limiter) {
  if (problems.empty()) throw ConfigError("run_eval needs at least one problem");
  config.validate();
  std::optional<InflightLimiter> own;
  if (!limiter) limiter = &own.emplace(concurrency_cap);
  LimitedBackend limited(backend, *limiter);
  RunOptions opts = options;
  opts.parallelism = std::max<std::size_t>(1, concurrency_cap);

  EvalReport report;
  report.config = config;
  report.results.resize(problems.size());
  parallel_for(problems.size(), concurrency_cap, [&](std::size_t i) {
    try {
      report.results[i] = run_problem(problems[i], config, limited, verifier, opts);
    } catch (const Error& e) {
      ProblemResult failed;
      failed.problem_id = problems[i].id;
      failed.error = e.what();
      report.results[i] = std::move(failed);
    }
  });

  double score_sum = 0.0, token_sum = 0.0;
  std::vector<double> stage_sum;
  std::vector<std::size_t> stage_count;
  std::size_t ok = 0;
  for (const auto& r : report.results) {
    score_sum += r.score;
    if (r.error) {
      ++report.failed;
      continue;
    }
    ++ok;
    auto totals = ledger_total(r.ledger);
    token_sum += static_cast<double>(totals.direct);
    for (std::size_t s = 0; s < totals.stage_means.size(); ++s) {
      if (stage_sum.size() <= s) {
        stage_sum.resize(s + 1, 0.0);
        stage_count.resize(s + 1, 0);
      }
      stage_sum[s] += totals.stage_means[s];
      ++stage_count[s];
    }
  }
  report.mean_score = score_sum / static_cast<double>(problems.size());
  report.mean_generated_tokens = ok ? token_sum / static_cast<double>(ok) : 0.0;
  for (std::size_t s = 0; s < stage_sum.size(); ++s)
    report.stage_token_means.push_back(stage_sum[s] / static_cast<double>(stage_count[s]));
  return report;
}

}  // namespace mrsa
