// SPDX-License-Identifier: Apache-2.0

#include "mrsa/core.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "mrsa/error.hpp"

namespace mrsa {

const char* to_string(Compaction c) {
  return c == Compaction::Tail ? "tail" : "pacore-hybrid";
}

const char* to_string(EarlyStop e) {
  return e == EarlyStop::Off ? "off" : "round-consensus";
}

Compaction parse_compaction(std::string_view s) {
  if (s == "tail") return Compaction::Tail;
  if (s == "pacore-hybrid") return Compaction::PacoreHybrid;
  throw ConfigError("compaction must be 'tail' or 'pacore-hybrid', got '" +
                    std::string(s) + "'");
}

EarlyStop parse_early_stop(std::string_view s) {
  if (s == "off") return EarlyStop::Off;
  if (s == "round-consensus") return EarlyStop::RoundConsensus;
  throw ConfigError("early_stop must be 'off' or 'round-consensus', got '" +
                    std::string(s) + "'");
}

const char* to_string(FinishReason f) {
  switch (f) {
    case FinishReason::Budget: return "budget";
    case FinishReason::Stop: return "stop";
    case FinishReason::Error: return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view s) {
  if (s == "budget" || s == "length") return FinishReason::Budget;
  if (s == "stop") return FinishReason::Stop;
  if (s == "error") return FinishReason::Error;
  throw ParseError("unknown finish reason '" + std::string(s) + "'");
}

const char* to_string(CarryKind k) {
  switch (k) {
    case CarryKind::ReasoningTail: return "tail";
    case CarryKind::Answer: return "answer";
    case CarryKind::Empty: return "empty";
  }
  return "empty";
}

void RsaConfig::validate() const {
  if (population < 1) throw ConfigError("population (N) must be >= 1");
  if (candidates < 1 || candidates > population)
    throw ConfigError("candidates (C) must satisfy 1 <= C <= N");
  if (tau < 1) throw ConfigError("tau must be >= 1");
  if (tau > beta) throw ConfigError("tau must satisfy tau <= beta");
  if (final_budget < 1) throw ConfigError("final_budget must be >= 1");
  if (max_aggregation_prompt < 1)
    throw ConfigError("max_aggregation_prompt must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0))
    throw ConfigError("top_p must be in (0, 1]");
  if (delimiters.open.empty() || delimiters.close.empty())
    throw ConfigError("think delimiters must be non-empty");
}

std::string CandidateTrace::span_text(TokenSpan span) const {
  std::string s;
  for (std::size_t i = span.begin; i < span.end && i < pieces.size(); ++i)
    s += pieces[i];
  return s;
}

std::string CandidateTrace::answer_text() const {
  return answer ? span_text(*answer) : std::string();
}

void locate_spans(CandidateTrace& trace, const ThinkDelimiters& delims) {
  // Character offsets of every piece.
  std::vector<std::size_t> starts(trace.pieces.size() + 1, 0);
  for (std::size_t i = 0; i < trace.pieces.size(); ++i)
    starts[i + 1] = starts[i] + trace.pieces[i].size();
  const std::string& text = trace.text;

  std::size_t open_end = 0;
  if (auto at = text.find(delims.open); at != std::string::npos)
    open_end = at + delims.open.size();
  std::size_t close_begin = text.size();
  std::optional<std::size_t> close_end;
  if (auto at = text.find(delims.close, open_end); at != std::string::npos) {
    close_begin = at;
    close_end = at + delims.close.size();
  }

  // Pieces fully inside [open_end, close_begin) are reasoning.
  std::size_t n = trace.pieces.size();
  std::size_t rb = n, re = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (starts[i] >= open_end) {
      rb = i;
      break;
    }
  }
  re = rb;
  while (re < n && starts[re + 1] <= close_begin) ++re;
  trace.reasoning = {rb, re};

  trace.answer.reset();
  if (close_end) {
    std::size_t ab = n;
    for (std::size_t i = re; i < n; ++i) {
      if (starts[i] >= *close_end) {
        ab = i;
        break;
      }
    }
    trace.answer = TokenSpan{ab, n};
  }
}

CandidateTrace make_trace(std::size_t round, std::size_t worker,
                          std::vector<std::string> pieces,
                          std::vector<TokenId> ids,
                          std::size_t generated_tokens, FinishReason finish,
                          const ThinkDelimiters& delims) {
  CandidateTrace t;
  t.round = round;
  t.worker = worker;
  if (ids.size() != pieces.size()) {
    ids.clear();
    ids.reserve(pieces.size());
    for (const auto& p : pieces) ids.push_back(synthetic_token_id(p));
  }
  t.tokens = std::move(ids);
  t.pieces = std::move(pieces);
  t.text = join_pieces(t.pieces);
  t.generated_tokens = generated_tokens;
  t.finish_reason = finish;
  locate_spans(t, delims);
  return t;
}

namespace {

Tail suffix_of(const CandidateTrace& trace, TokenSpan span, std::size_t tau) {
  Tail tail;
  tail.source = {trace.round, trace.worker};
  std::size_t keep = std::min(tau, span.size());
  std::size_t from = span.end - keep;
  tail.tokens.assign(trace.tokens.begin() + static_cast<std::ptrdiff_t>(from),
                     trace.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
  tail.pieces.assign(trace.pieces.begin() + static_cast<std::ptrdiff_t>(from),
                     trace.pieces.begin() + static_cast<std::ptrdiff_t>(span.end));
  return tail;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

Tail tail_extract(const CandidateTrace& trace, std::size_t tau) {
  if (tau < 1) throw ConfigError("tau must be >= 1");
  if (trace.reasoning.empty())
    throw EmptyTrace("trace (round " + std::to_string(trace.round) +
                     ", worker " + std::to_string(trace.worker) +
                     ") has an empty reasoning span");
  return suffix_of(trace, trace.reasoning, tau);
}

CarryState compact_carry(const CandidateTrace& trace, const RsaConfig& config) {
  if (config.compaction == Compaction::PacoreHybrid && trace.answer &&
      !trace.answer->empty() && !is_blank(trace.answer_text())) {
    return {CarryKind::Answer, suffix_of(trace, *trace.answer, config.tau)};
  }
  return {CarryKind::ReasoningTail, tail_extract(trace, config.tau)};
}

std::vector<CarryState> sample_candidates(const Population& population,
                                          std::size_t count, SplitMix64& rng) {
  const std::size_t n = population.members.size();
  if (count > n)
    throw ConfigError("cannot sample " + std::to_string(count) +
                      " candidates from a population of " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots are a uniform ordered draw.
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<CarryState> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(population.members[idx[i]]);
  return out;
}

std::string build_direct_prompt(const Problem& problem) { return problem.prompt; }

namespace {

std::string render_aggregation(std::string_view problem,
                               const std::vector<std::string>& carries) {
  const std::size_t c = carries.size();
  std::string s;
  s += problem;
  s += "\n\nYou are given ";
  s += std::to_string(c);
  s += c == 1 ? " candidate solution" : " candidate solutions";
  s += " to the problem above. Each candidate is the final part of a "
       "reasoning trace or a final answer, and may be incomplete or wrong.\n";
  for (std::size_t i = 0; i < c; ++i) {
    s += "\n--- Candidate ";
    s += std::to_string(i + 1);
    s += " ---\n";
    s += carries[i];
    s += "\n";
  }
  s += "\nConsider the candidates, decide which ideas are correct, and write "
       "a single improved solution. Put your final answer in \\boxed{}.\n";
  return s;
}

}  // namespace

std::size_t template_overhead(std::size_t count, const TokenCounter& counter) {
  return counter(render_aggregation("", std::vector<std::string>(count)));
}

AggregationPrompt build_aggregation_prompt(const Problem& problem,
                                           const std::vector<CarryState>& carries,
                                           const RsaConfig& config,
                                           const TokenCounter& counter) {
  if (carries.size() != config.candidates)
    throw ConfigError("aggregation prompt needs exactly C = " +
                      std::to_string(config.candidates) + " carry-states, got " +
                      std::to_string(carries.size()));
  std::vector<std::string> texts;
  texts.reserve(carries.size());
  AggregationPrompt p;
  for (const auto& c : carries) {
    texts.push_back(c.body.text());
    p.candidate_tokens += c.token_count();
  }
  p.text = render_aggregation(problem.prompt, texts);
  p.problem_tokens = counter(problem.prompt);
  p.overhead_tokens = template_overhead(carries.size(), counter);
  if (p.total_tokens() > config.max_aggregation_prompt)
    throw PromptOverflow("aggregation prompt needs " +
                         std::to_string(p.total_tokens()) + " tokens, limit is " +
                         std::to_string(config.max_aggregation_prompt));
  return p;
}

}  // namespace mrsa
