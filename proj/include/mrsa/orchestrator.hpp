// SPDX-License-Identifier: Apache-2.0
//
// The T-round Markovian RSA loop. Round 0 samples N rollouts straight from the
// problem; each later round builds N aggregation prompts from C carry-states
// of the previous population. Rounds are barriers. Every request seed is a
// pure function of (config seed, problem id, round, worker, attempt), so
// results do not depend on scheduling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrsa/backend.hpp"
#include "mrsa/core.hpp"
#include "mrsa/error.hpp"

namespace mrsa {

struct StageRecord {
  std::size_t stage = 0;
  std::vector<std::uint64_t> generated;  // g_{s,j}, one per worker
  bool closed = false;

  std::size_t workers() const { return generated.size(); }
};

// Generated-token accounting D(q) = sum_s sum_j g_{s,j}. Prompt, prefill and
// copied tail tokens never enter the ledger.
class TokenLedger {
 public:
  void open_stage(std::size_t stage, std::size_t workers);
  void record(std::size_t worker, std::uint64_t generated);
  void close_stage();

  // Appends a fully closed stage.
  void add_stage(std::size_t stage, std::vector<std::uint64_t> generated);

  const std::vector<StageRecord>& stages() const { return stages_; }

 private:
  std::vector<StageRecord> stages_;
};

struct LedgerTotals {
  std::uint64_t direct = 0;       // double sum
  std::uint64_t from_means = 0;   // sum_s n_s * mean_s
  std::vector<double> stage_means;
};

// Throws LedgerError when any stage is still open.
LedgerTotals ledger_total(const TokenLedger& ledger);

class StageError : public Error {
 public:
  StageError(const std::string& what, std::size_t round,
             std::vector<CandidateTrace> partial)
      : Error(what), round_(round), partial_(std::move(partial)) {}
  std::size_t round() const { return round_; }
  const std::vector<CandidateTrace>& partial() const { return partial_; }

 private:
  std::size_t round_;
  std::vector<CandidateTrace> partial_;
};

// Normalizes an answer string: trims whitespace and surrounding '$', drops
// interior whitespace and edge punctuation, and canonicalizes plain numerals
// ("1,000" -> "1000", "3.50" -> "3.5", "+7" -> "7").
std::string normalize_answer(std::string_view answer);

// Content of the last \boxed{...} in the text, else the whole text.
// Returned normalized; empty when there is nothing to extract.
std::string extract_answer(std::string_view post_think_text);

class Verifier {
 public:
  virtual ~Verifier() = default;
  // Throws on failure; the orchestrator scores that candidate 0 and flags it.
  virtual bool verify(const Problem& problem, const std::string& answer) const = 0;
};

class ExactMatchVerifier final : public Verifier {
 public:
  bool verify(const Problem& problem, const std::string& answer) const override;
};

struct RunOptions {
  std::size_t parallelism = 1;  // concurrent candidates within a round
  std::size_t max_retries = 2;
  TokenCounter counter = default_token_counter();
};

struct RoundOutput {
  std::size_t round = 0;
  std::vector<std::string> prompts;  // one per worker
  std::vector<CandidateTrace> traces;
  Population population;
};

RoundOutput run_round0(const Problem& problem, const RsaConfig& config,
                       Backend& backend, TokenLedger* ledger = nullptr,
                       const RunOptions& options = {});

// In C = 1 mode worker i continues only from its own lineage i.
RoundOutput run_aggregation_round(const Problem& problem,
                                  const Population& population,
                                  const RsaConfig& config, Backend& backend,
                                  std::size_t t, TokenLedger* ledger = nullptr,
                                  const RunOptions& options = {});

struct ProblemResult {
  std::string problem_id;
  std::size_t final_round = 0;
  std::vector<CandidateTrace> final_candidates;
  std::vector<std::string> answers;
  std::vector<bool> correct;
  std::vector<bool> verifier_failed;
  double score = 0.0;  // mean correctness over final candidates
  TokenLedger ledger;
  std::vector<RoundOutput> rounds;
  std::optional<std::string> error;
};

ProblemResult run_problem(const Problem& problem, const RsaConfig& config,
                          Backend& backend, const Verifier& verifier,
                          const RunOptions& options = {});

struct EvalReport {
  RsaConfig config;
  std::vector<ProblemResult> results;  // input order
  double mean_score = 0.0;
  double mean_generated_tokens = 0.0;     // mean D(q)
  std::vector<double> stage_token_means;  // mean over problems of g-bar_s
  std::size_t failed = 0;
};

// Problems run concurrently; in-flight backend requests never exceed the cap.
// Failed problems score 0 and carry their error.
EvalReport run_eval(const std::vector<Problem>& problems,
                    const RsaConfig& config, Backend& backend,
                    const Verifier& verifier, std::size_t concurrency_cap,
                    const RunOptions& options = {},
                    InflightLimiter* limiter = nullptr);

}  // namespace mrsa
