#include <doctest.h>

#include <algorithm>
#include <set>

#include "mrsa/core.hpp"
#include "mrsa/error.hpp"

using namespace mrsa;

namespace {

CandidateTrace trace_with(std::size_t reasoning, const std::string& answer = "",
                          bool closed = true, std::size_t worker = 0) {
  std::vector<std::string> pieces{"<think>"};
  for (std::size_t i = 0; i < reasoning; ++i) pieces.push_back(" r" + std::to_string(i));
  if (closed) pieces.push_back("</think>");
  if (!answer.empty()) pieces.push_back(" " + answer);
  return make_trace(0, worker, pieces, {}, pieces.size(),
                    closed ? FinishReason::Stop : FinishReason::Budget, {});
}

Population population_of(std::size_t n, std::size_t reasoning) {
  Population p;
  for (std::size_t j = 0; j < n; ++j) {
    auto t = trace_with(reasoning, "", true, j);
    p.members.push_back({CarryKind::ReasoningTail, tail_extract(t, reasoning)});
  }
  return p;
}

}  // namespace

TEST_CASE("trace spans") {
  auto t = trace_with(3, "\\boxed{4}");
  CHECK(t.reasoning == TokenSpan{1, 4});
  REQUIRE(t.answer);
  CHECK(t.answer_text() == " \\boxed{4}");

  auto open = trace_with(3, "", false);
  CHECK(open.reasoning == TokenSpan{1, 4});
  CHECK_FALSE(open.answer);

  // template already opened the block
  auto bare = make_trace(0, 0, {" a", " b", "</think>", " x"}, {}, 4, FinishReason::Stop, {});
  CHECK(bare.reasoning == TokenSpan{0, 2});
  CHECK(bare.answer_text() == " x");
}

TEST_CASE("tail_extract") {
  auto t = trace_with(10);
  auto tail = tail_extract(t, 4);
  REQUIRE(tail.size() == 4);
  CHECK(tail.text() == " r6 r7 r8 r9");

  CHECK(tail_extract(trace_with(3), 8).size() == 3);

  auto full = trace_with(4096);
  auto whole = tail_extract(full, 4096);
  CHECK(whole.size() == 4096);
  CHECK(whole.text() == full.span_text(full.reasoning));

  auto empty = trace_with(0, "\\boxed{1}");
  CHECK_THROWS_AS(tail_extract(empty, 4), EmptyTrace);
  CHECK_THROWS_AS(tail_extract(t, 0), ConfigError);
}

TEST_CASE("tail_extract is idempotent") {
  for (std::size_t len : {1u, 5u, 17u, 64u}) {
    for (std::size_t tau : {1u, 3u, 16u, 100u}) {
      auto t = trace_with(len);
      auto once = tail_extract(t, tau);
      std::vector<std::string> pieces{"<think>"};
      pieces.insert(pieces.end(), once.pieces.begin(), once.pieces.end());
      auto again = make_trace(0, 0, pieces, {}, pieces.size(), FinishReason::Budget, {});
      CHECK(tail_extract(again, tau).pieces == once.pieces);
    }
  }
}

TEST_CASE("compact_carry") {
  RsaConfig c;
  c.tau = 4;
  c.beta = 8;
  auto finished = trace_with(10, "\\boxed{12}");
  c.compaction = Compaction::PacoreHybrid;
  auto carry = compact_carry(finished, c);
  CHECK(carry.kind == CarryKind::Answer);
  CHECK(carry.body.text() == " \\boxed{12}");

  auto unfinished = trace_with(10, "", false);
  auto fallback = compact_carry(unfinished, c);
  CHECK(fallback.kind == CarryKind::ReasoningTail);
  CHECK(fallback.body.text() == " r6 r7 r8 r9");

  c.compaction = Compaction::Tail;
  auto tail = compact_carry(finished, c);
  CHECK(tail.kind == CarryKind::ReasoningTail);
  CHECK(tail.body.pieces == tail_extract(finished, 4).pieces);
}

TEST_CASE("sample_candidates") {
  auto pop = population_of(4, 3);
  SplitMix64 rng(1);
  auto all = sample_candidates(pop, 4, rng);
  std::set<std::size_t> workers;
  for (const auto& c : all) workers.insert(c.source().worker);
  CHECK(workers == std::set<std::size_t>{0, 1, 2, 3});

  CHECK(sample_candidates(population_of(16, 2), 1, rng).size() == 1);
  CHECK_THROWS_AS(sample_candidates(pop, 5, rng), ConfigError);

  SplitMix64 a(99), b(99);
  auto big = population_of(16, 2);
  for (int i = 0; i < 20; ++i) {
    auto x = sample_candidates(big, 4, a), y = sample_candidates(big, 4, b);
    for (std::size_t k = 0; k < 4; ++k) CHECK(x[k].source() == y[k].source());
    std::set<std::size_t> distinct;
    for (const auto& c : x) distinct.insert(c.source().worker);
    CHECK(distinct.size() == 4);
  }
}

TEST_CASE("aggregation prompt bound") {
  RsaConfig c;
  c.population = 4;
  c.candidates = 4;
  c.tau = 4096;
  c.beta = 4096;
  c.max_aggregation_prompt = 1 << 20;
  Problem q{"q", "Find x.", "1"};
  auto pop = population_of(4, 4096);
  auto p = build_aggregation_prompt(q, pop.members, c);
  CHECK(p.candidate_tokens == 16384);
  CHECK(p.overhead_tokens <= kMaxTemplateOverhead);

  c.population = c.candidates = 1;
  auto one = population_of(1, 100);
  Problem q50{"q", std::string(), std::nullopt};
  for (int i = 0; i < 50; ++i) q50.prompt += "w ";
  auto p1 = build_aggregation_prompt(q50, one.members, c);
  CHECK(p1.problem_tokens == 50);
  CHECK(p1.total_tokens() <= 150 + template_overhead(1, default_token_counter()));

  c.max_aggregation_prompt = 100;
  CHECK_THROWS_AS(build_aggregation_prompt(q50, one.members, c), PromptOverflow);
}

TEST_CASE("template overhead stays small") {
  for (std::size_t n = 1; n <= 64; ++n)
    CHECK(template_overhead(n, default_token_counter()) <= kMaxTemplateOverhead);
}

TEST_CASE("config validation") {
  RsaConfig c;
  CHECK_NOTHROW(c.validate());
  c.candidates = 17;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.tau = c.beta + 1;
  CHECK_THROWS_WITH_AS(c.validate(), "tau must satisfy tau <= beta", ConfigError);
  c = {};
  c.tau = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(RsaConfig{}.budget_for_round(2) == 40960);
  CHECK(RsaConfig{}.budget_for_round(1) == 16384);
}

TEST_CASE("split_pieces round trip") {
  const std::string delims[] = {"<think>", "</think>"};
  for (std::string s : {"", "a", "  lead", "<think>x y</think> z ", "a<think>b", "\n\n"}) {
    auto p = split_pieces(s, delims);
    CHECK(join_pieces(p) == s);
  }
  auto p = split_pieces("<think>one two</think> \\boxed{3}", delims);
  CHECK(p == std::vector<std::string>{"<think>", "one", " two", "</think>", " \\boxed{3}"});
}
