// SPDX-License-Identifier: Apache-2.0
//
// Population, tail and prompt mechanics of Markovian RSA. Everything here is
// backend-independent and has value semantics; callers own their RNGs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrsa/rng.hpp"
#include "mrsa/tokens.hpp"

namespace mrsa {

enum class VerifierKind { ExactMatchNormalized, External };

struct Problem {
  std::string id;
  std::string prompt;
  std::optional<std::string> gold_answer;
  VerifierKind verifier_kind = VerifierKind::ExactMatchNormalized;
};

enum class Compaction { Tail, PacoreHybrid };
enum class EarlyStop { Off, RoundConsensus };

const char* to_string(Compaction c);
const char* to_string(EarlyStop e);
Compaction parse_compaction(std::string_view s);
EarlyStop parse_early_stop(std::string_view s);

/// Aggregation plan (N, C, T, beta, tau) plus decoding, compaction and
/// early-stop settings. Defaults are the 16K/4K deployment preset.
struct RsaConfig {
  std::size_t population = 16;  ///< N
  std::size_t candidates = 4;   ///< C, carry-states per aggregation prompt
  std::size_t rounds = 2;       ///< T, aggregation rounds after round 0
  std::size_t beta = 16384;     ///< per-rollout decode budget, rounds < T
  std::size_t tau = 4096;       ///< carry-forward tail length
  std::size_t final_budget = 40960;  ///< decode budget at round T
  Compaction compaction = Compaction::Tail;
  std::uint64_t seed = 0;
  std::size_t max_aggregation_prompt = 20480;
  EarlyStop early_stop = EarlyStop::Off;
  double temperature = 1.0;
  double top_p = 1.0;
  ThinkDelimiters delimiters;

  // Throws ConfigError naming the violated invariant.
  void validate() const;

  // Decode budget used for round t.
  std::size_t budget_for_round(std::size_t t) const {
    return t == rounds ? final_budget : beta;
  }

  bool operator==(const RsaConfig&) const = default;
};

enum class FinishReason { Budget, Stop, Error };
const char* to_string(FinishReason f);
FinishReason parse_finish_reason(std::string_view s);

// Half-open token-index range.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool operator==(const TokenSpan&) const = default;
};

struct Lineage {
  std::size_t round = 0;
  std::size_t worker = 0;
  bool operator==(const Lineage&) const = default;
};

struct CandidateTrace {
  std::size_t round = 0;
  std::size_t worker = 0;
  std::vector<TokenId> tokens;
  std::vector<std::string> pieces;  // per-token text; joins to `text`
  std::string text;
  TokenSpan reasoning;
  std::optional<TokenSpan> answer;
  std::size_t generated_tokens = 0;
  FinishReason finish_reason = FinishReason::Stop;
  std::string error;  // set when finish_reason == Error

  std::string span_text(TokenSpan span) const;
  std::string answer_text() const;
};

// Locates the think block in a piece sequence. Reasoning runs from just after
// the open delimiter (or the start, if the chat template already opened it)
// to the close delimiter (or the end, for an unfinished trace). The answer
// span is everything after the close delimiter.
void locate_spans(CandidateTrace& trace, const ThinkDelimiters& delims);

// Builds a trace from generated pieces, synthesizing ids when absent.
CandidateTrace make_trace(std::size_t round, std::size_t worker,
                          std::vector<std::string> pieces,
                          std::vector<TokenId> ids,
                          std::size_t generated_tokens, FinishReason finish,
                          const ThinkDelimiters& delims);

struct Tail {
  std::vector<TokenId> tokens;
  std::vector<std::string> pieces;
  Lineage source;

  std::size_t size() const { return tokens.size(); }
  std::string text() const { return join_pieces(pieces); }
};

enum class CarryKind { ReasoningTail, Answer, Empty };
const char* to_string(CarryKind k);

// What one population member forwards to the next round.
struct CarryState {
  CarryKind kind = CarryKind::Empty;
  Tail body;

  std::size_t token_count() const { return body.size(); }
  const Lineage& source() const { return body.source; }
};

struct Population {
  std::size_t round = 0;
  std::vector<CarryState> members;
};

// Last min(tau, |reasoning|) reasoning tokens, in order. Throws EmptyTrace.
Tail tail_extract(const CandidateTrace& trace, std::size_t tau);

// Tail mode: tail_extract. PaCoRe-hybrid: the post-think answer when the
// trace produced a non-blank one (clamped to its last tau tokens so the
// aggregation bound still holds), else the reasoning tail.
CarryState compact_carry(const CandidateTrace& trace, const RsaConfig& config);

// C distinct members, uniformly without replacement, in random order.
std::vector<CarryState> sample_candidates(const Population& population,
                                          std::size_t count, SplitMix64& rng);

struct AggregationPrompt {
  std::string text;
  std::size_t problem_tokens = 0;
  std::size_t candidate_tokens = 0;  // sum of carry-state token counts
  std::size_t overhead_tokens = 0;   // template framing
  std::size_t total_tokens() const {
    return problem_tokens + candidate_tokens + overhead_tokens;
  }
};

inline constexpr std::size_t kMaxTemplateOverhead = 512;

// Round-0 prompt: the problem text as-is, identical to plain parallel
// sampling.
std::string build_direct_prompt(const Problem& problem);

// Aggregation template framing cost for `count` candidates.
std::size_t template_overhead(std::size_t count, const TokenCounter& counter);

AggregationPrompt build_aggregation_prompt(
    const Problem& problem, const std::vector<CarryState>& carries,
    const RsaConfig& config,
    const TokenCounter& counter = default_token_counter());

}  // namespace mrsa
