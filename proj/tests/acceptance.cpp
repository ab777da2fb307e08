// Acceptance runner: one line per criterion, nonzero exit when any fails.
// A criterion passes only when its checks hold and it finishes inside its
// time bound.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "mrsa/backend.hpp"
#include "mrsa/cli.hpp"
#include "mrsa/core.hpp"
#include "mrsa/curriculum.hpp"
#include "mrsa/dataprep.hpp"
#include "mrsa/guards.hpp"
#include "mrsa/jsonio.hpp"
#include "mrsa/orchestrator.hpp"
#include "mrsa/rlspine.hpp"
#include "mrsa/sizing.hpp"

using namespace mrsa;
namespace fs = std::filesystem;

namespace {

// Collects failures; a criterion passes when none were recorded.
struct Check {
  std::vector<std::string> failures;
  std::size_t count = 0;

  void expect(bool ok, const std::string& what) {
    ++count;
    if (!ok && failures.size() < 20) failures.push_back(what);
    else if (!ok) failures.emplace_back();
  }
  bool ok() const { return failures.empty(); }
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<std::string(Check&)> run;  // returns a short detail line
};

std::string words(const std::string& stem, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + stem + std::to_string(i);
  return s;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

const Problem kProblem{"p0", "What is 2 + 2?", "4"};

RsaConfig plan(std::size_t n, std::size_t c, std::size_t t, std::size_t beta, std::size_t tau) {
  RsaConfig cfg;
  cfg.population = n;
  cfg.candidates = c;
  cfg.rounds = t;
  cfg.beta = beta;
  cfg.tau = tau;
  cfg.final_budget = beta;
  cfg.seed = 1234;
  return cfg;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

// Candidate blocks of a rendered aggregation prompt, located by their headers.
std::vector<std::string> candidate_blocks(const std::string& prompt, std::size_t c) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= c; ++i) {
    const std::string head = "\n--- Candidate " + std::to_string(i) + " ---\n";
    const auto b = prompt.find(head);
    if (b == std::string::npos) return {};
    const auto start = b + head.size();
    const std::string next = i < c ? "\n\n--- Candidate " + std::to_string(i + 1) + " ---\n"
                                   : "\n\nConsider the candidates";
    const auto e = prompt.find(next, start);
    if (e == std::string::npos) return {};
    out.push_back(prompt.substr(start, e - start));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string special_cases(Check& ck) {
  ExactMatchVerifier v;

  // (a) T = 0: every request is the bare problem, N of them, at the final budget.
  {
    EchoBackend echo;
    RecordingBackend rec(echo);
    auto cfg = plan(8, 2, 0, 32, 8);
    cfg.final_budget = 48;
    auto res = run_problem(kProblem, cfg, rec, v);
    auto records = rec.records();
    ck.expect(records.size() == 8, "T=0 issues N requests");
    ck.expect(res.rounds.size() == 1, "T=0 runs one round");
    for (const auto& r : records) {
      ck.expect(r.request.prompt == kProblem.prompt, "T=0 prompt is the problem verbatim");
      ck.expect(r.request.prompt == build_direct_prompt(kProblem), "T=0 prompt is the direct prompt");
      ck.expect(r.request.decode_budget == 48, "T=0 decodes at the final budget");
      EchoBackend fresh;
      ck.expect(fresh.generate(r.request).text == r.result.text, "T=0 output is plain sampling");
    }
    for (const auto& p : res.rounds[0].prompts) ck.expect(p == kProblem.prompt, "T=0 round prompt");
  }

  // (b) C = 1: one tail per prompt, from the worker's own lineage.
  {
    EchoBackend echo;
    auto cfg = plan(16, 1, 2, 32, 6);
    auto res = run_problem(kProblem, cfg, echo, v);
    ck.expect(res.rounds.size() == 3, "C=1 runs T+1 rounds");
    for (std::size_t t = 1; t < res.rounds.size(); ++t) {
      const auto& prev = res.rounds[t - 1].population.members;
      for (std::size_t j = 0; j < 16; ++j) {
        const auto& prompt = res.rounds[t].prompts[j];
        ck.expect(occurrences(prompt, "--- Candidate ") == 1, "C=1 prompt has one candidate");
        auto blocks = candidate_blocks(prompt, 1);
        ck.expect(blocks.size() == 1 && blocks[0] == prev[j].body.text(),
                  "C=1 tail is worker j's own carry");
        ck.expect(prev[j].source().worker == j, "C=1 carry j comes from worker j");
        for (std::size_t i = 0; i < 16; ++i)
          if (i != j && prev[i].body.text() != prev[j].body.text())
            ck.expect(prompt.find(prev[i].body.text()) == std::string::npos,
                      "C=1 prompt holds no other lineage");
      }
    }
  }

  // (c) tau = beta: carries are complete reasoning chains.
  {
    EchoBackend echo;  // 64 generated tokens, all of the reasoning fits in tau
    auto cfg = plan(4, 2, 1, 64, 64);
    auto res = run_problem(kProblem, cfg, echo, v);
    const auto& r0 = res.rounds[0];
    for (const auto& m : r0.population.members) {
      const auto& src = r0.traces[m.source().worker];
      ck.expect(m.body.text() == src.span_text(src.reasoning), "tau=beta carry is the full chain");
      ck.expect(m.token_count() == src.reasoning.size(), "tau=beta carry length");
    }
    for (const auto& prompt : res.rounds[1].prompts) {
      auto blocks = candidate_blocks(prompt, 2);
      ck.expect(blocks.size() == 2, "tau=beta prompt has C blocks");
      for (const auto& b : blocks) {
        bool full = false;
        for (const auto& t : r0.traces) full |= b == t.span_text(t.reasoning);
        ck.expect(full, "tau=beta block equals a full round-0 chain");
      }
    }
  }
  return std::to_string(ck.count) + " checks";
}

std::string prefill_bound(Check& ck) {
  SplitMix64 g(2027);
  std::size_t prompts = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + g.below(16);
    const std::size_t c = 1 + g.below(n);
    const std::size_t t = 1 + g.below(3);
    const std::size_t beta = 1 + g.below(256);
    const std::size_t tau = 1 + g.below(beta);
    auto cfg = plan(n, c, t, beta, tau);
    cfg.seed = g();
    cfg.final_budget = 1 + g.below(256);
    cfg.compaction = g.below(2) ? Compaction::PacoreHybrid : Compaction::Tail;
    const std::size_t bound = c * tau;

    // random tails straight through the prompt builder
    Population pop;
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<std::string> pieces{"<think>"};
      const std::size_t len = g.below(2 * beta + 1);
      for (std::size_t k = 0; k < len; ++k) pieces.push_back(" w" + std::to_string(g.below(1000)));
      if (g.below(2)) {
        pieces.push_back("</think>");
        const std::size_t ans = g.below(3 * tau + 1);
        for (std::size_t k = 0; k < ans; ++k) pieces.push_back(" a" + std::to_string(k));
      }
      auto trace = make_trace(0, j, pieces, {}, pieces.size(), FinishReason::Stop, {});
      CarryState cs;
      try {
        cs = compact_carry(trace, cfg);
      } catch (const EmptyTrace&) {
        cs.body.source = {0, j};
      }
      pop.members.push_back(cs);
    }
    for (std::size_t j = 0; j < n; ++j) {
      auto picked = sample_candidates(pop, c, g);
      auto p = build_aggregation_prompt(kProblem, picked, cfg);
      std::size_t recount = 0;
      for (const auto& b : candidate_blocks(p.text, c)) recount += whitespace_token_count(b);
      ck.expect(p.candidate_tokens <= bound, "builder candidate tokens <= C*tau");
      ck.expect(recount <= bound, "recounted candidate tokens <= C*tau");
      ++prompts;
    }

    // and through the orchestrator, recounting the rendered prompts
    EchoOptions eo;
    const std::size_t span = 2 * beta + 4;
    eo.length_fn = [span](const GenerationRequest& r) { return 1 + r.seed % span; };
    EchoBackend echo(eo);
    ExactMatchVerifier v;
    auto res = run_problem(kProblem, cfg, echo, v);
    ck.expect(!res.error, "orchestrated run completes");
    for (std::size_t r = 1; r < res.rounds.size(); ++r)
      for (const auto& prompt : res.rounds[r].prompts) {
        auto blocks = candidate_blocks(prompt, c);
        ck.expect(blocks.size() == c, "orchestrated prompt has C blocks");
        std::size_t tokens = 0;
        for (const auto& b : blocks) tokens += whitespace_token_count(b);
        ck.expect(tokens <= bound, "orchestrated candidate tokens <= C*tau");
        ++prompts;
      }
  }
  return std::to_string(prompts) + " prompts, " + std::to_string(ck.failures.size()) +
         " violations";
}

std::string ledger_exact(Check& ck) {
  SplitMix64 g(99);
  for (int trial = 0; trial < 5000; ++trial) {
    TokenLedger l;
    std::uint64_t direct = 0;
    const std::size_t stages = 1 + g.below(8);
    for (std::size_t s = 0; s < stages; ++s) {
      std::vector<std::uint64_t> gen(1 + g.below(64));
      for (auto& x : gen) {
        x = trial % 3 == 0 ? g.below(1ULL << 31) : g.below(200000);
        direct += x;
      }
      l.add_stage(s, gen);
    }
    auto t = ledger_total(l);
    ck.expect(t.direct == direct, "direct sum");
    ck.expect(t.from_means == direct, "sum of n_s * mean_s");
  }

  // T = 0: the ledger is round 0's generated tokens
  ExactMatchVerifier v;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    EchoOptions eo;
    eo.length_fn = [](const GenerationRequest& r) { return 1 + r.seed % 97; };
    EchoBackend echo(eo);
    auto cfg = plan(1 + seed % 16, 1, 0, 64, 16);
    cfg.final_budget = 80;
    cfg.seed = seed;
    auto res = run_problem(kProblem, cfg, echo, v);
    std::uint64_t sum = 0;
    for (const auto& tr : res.rounds.at(0).traces) sum += tr.generated_tokens;
    auto t = ledger_total(res.ledger);
    ck.expect(t.direct == sum && t.from_means == sum, "T=0 ledger equals round-0 tokens");
  }
  return std::to_string(ck.count) + " checks";
}

std::vector<TokenId> random_ids(std::uint64_t seed, std::size_t n, std::uint64_t vocab) {
  SplitMix64 g(seed);
  std::vector<TokenId> out(n);
  for (auto& t : out) t = static_cast<TokenId>(g() % vocab);
  return out;
}

std::string canary(Check& ck) {
  std::vector<TokenId> constant(4096, 7);
  ck.expect(compress_scan(constant).flagged, "constant rollout flagged");

  int false_flags = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    false_flags += compress_scan(random_ids(1000 + seed, 4096, kDefaultVocab)).flagged;
  ck.expect(false_flags <= 1, "at most one random rollout flagged");

  // 1024 fresh tokens, a 2048-token loop, 1024 fresh tokens
  auto prefix = random_ids(2024, 1024, 5000);
  auto suffix = random_ids(2025, 1024, 5000);
  std::vector<TokenId> ids = prefix;
  for (std::size_t i = 0; i < 2048; ++i) ids.push_back(prefix[1016 + i % 8]);
  ids.insert(ids.end(), suffix.begin(), suffix.end());
  auto scan = compress_scan(ids);
  ck.expect(scan.flagged, "repeat rollout flagged");
  std::size_t flagged_chunks = 0;
  for (std::size_t c = 0; c < scan.ratios.size(); ++c) {
    const bool in_repeat = scan.chunk_begin[c] >= 1024 &&
                           scan.chunk_begin[c] + scan.chunk_tokens[c] <= 3072;
    const bool flagged = scan.ratios[c] < 0.05;
    flagged_chunks += flagged;
    ck.expect(flagged == in_repeat, "chunk " + std::to_string(c) + " flag matches repeat region");
  }
  return std::to_string(false_flags) + "/100 random flagged, " + std::to_string(flagged_chunks) +
         " repeat chunks flagged";
}

std::string rl_kernels(Check& ck) {
  using Vec = std::vector<double>;
  ck.expect(maxrl_advantage(Vec{1, 0, 0, 1}).advantages == Vec{1, -1, -1, 1}, "maxrl [1,0,0,1]");

  SplitMix64 g(5150);
  double worst = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    Vec r(2 + g.below(63));
    for (auto& x : r) x = trial % 2 ? static_cast<double>(g.below(2)) : g.uniform();
    r[g.below(r.size())] = 1;  // keep the mean positive
    auto a = maxrl_advantage(r).advantages;
    const double s = std::accumulate(a.begin(), a.end(), 0.0);
    worst = std::max(worst, std::abs(s));
  }
  ck.expect(worst <= 1e-12, "sum of advantages within 1e-12");

  ck.expect(smtsn_loss({{1, 1}, {2}}) == 2.0, "smtsn [[1,1],[2]]");

  Vec div(5000);
  for (auto& x : div) x = g.uniform() * 0.4;
  std::size_t prev = 0;
  for (int i = 0; i <= 100; ++i) {
    auto m = binary_tv_mask(div, i * 0.005);
    const auto kept = static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
    ck.expect(kept >= prev, "kept fraction monotone in delta");
    prev = kept;
  }

  LengthRewardParams p;
  p.max_length = 4096;
  p.tolerance = 64;
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t n = 1 + g.below(16);
    Vec r(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = static_cast<double>(g.below(2));
      l[i] = static_cast<double>(1 + g.below(4096));
    }
    const auto k = std::count(r.begin(), r.end(), 1.0);
    auto d = length_reward(r, l, p);
    for (std::size_t i = 0; i < n; ++i) {
      if (k < 2) ck.expect(d[i] == 0.0, "length bonus zero when k < 2");
      if (r[i] == 0) ck.expect(d[i] == 0.0, "length bonus zero when incorrect");
    }
  }

  // mean of the unmodified rewards is 0.5; the bonus-shifted mean would be 0.625
  auto a = combined_advantage(Vec{1, 0, 1, 0}, Vec{0.5, 0, 0, 0}).advantages;
  ck.expect(a == Vec{2, -1, 1, -1}, "combined advantage uses unmodified mean");
  return "max |sum| " + fmt("%.2e", worst);
}

std::string kl_mechanism(Check& ck) {
  const double a = k1_sequence_adjustment(std::vector<double>(100, -0.01), 0.0, 1.0);
  ck.expect(std::abs(a - 1.0) <= 1e-12, "100 stale tokens give +1.0");

  std::vector<LogRatioChunk> chunks{{std::vector<double>(4, -0.1), 4}, {std::vector<double>(3, 0.0), 0}};
  for (double reward : {0.0, 1.0}) {
    auto adj = chunk_local_adjustment(chunks, reward, 1.0, true);
    ck.expect(adj.size() == 2, "one value per chunk");
    ck.expect(std::abs(adj[0] - (reward + 0.1)) <= 1e-12, "stale chunk gets A + 0.1");
    ck.expect(adj[1] == reward, "fresh chunk keeps A");
  }
  auto single = chunk_local_adjustment(std::vector<LogRatioChunk>{{{0.2, -0.05, 0.1}, 0}}, 1.0, 0.5, true);
  ck.expect(single[0] == k1_sequence_adjustment(std::vector<double>{0.2, -0.05, 0.1}, 1.0, 0.5),
            "single chunk equals the sequence form");
  return "A = " + fmt("%.12f", a);
}

std::string calibrator(Check& ck) {
  CalibratorConfig c;
  int good = 0;
  double worst_norm = 0;
  std::string means;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(seed);
    auto st = make_calibrator(c, rng);
    auto traj = simulate_calibration(SyntheticEnv{37, 4}, st, 200, 16, rng);
    for (const auto& pt : traj) worst_norm = std::max(worst_norm, std::abs(pt.weight_sum - 1.0));
    double tail = 0;
    for (std::size_t i = 150; i < 200; ++i) tail += traj[i].pass_rate;
    tail /= 50;
    good += tail >= 0.35 && tail <= 0.65;
    means += (seed ? " " : "") + fmt("%.3f", tail);
  }
  ck.expect(good >= 9, "at least 9 of 10 seeds land in [0.35, 0.65]");
  ck.expect(worst_norm <= 1e-9, "weights normalized within 1e-9");
  return std::to_string(good) + "/10 seeds in band (" + means + "), max |sum-1| " +
         fmt("%.1e", worst_norm);
}

// --- exhaustive trimming sweep ---------------------------------------------

struct TurnShape {
  bool assistant = false;
  bool think = false;
  std::size_t think_len = 0;
  std::size_t answer_len = 0;  // user turns: prompt length
};

std::string answer_of(std::size_t turn, std::size_t len) {
  return words("a" + std::to_string(turn) + "_", len);
}

// drop: earlier think blocks removed, oldest first; last_len: words kept in
// the final block (npos keeps everything).
Conversation build(const std::vector<TurnShape>& shape, std::size_t drop, std::size_t last_len) {
  std::size_t last_block = shape.size();
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i].assistant && shape[i].think) last_block = i;
  Conversation c{"x", {}};
  std::size_t seen = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const auto& t = shape[i];
    if (!t.assistant) {
      c.turns.push_back({"user", words("q" + std::to_string(i) + "_", t.answer_len)});
      continue;
    }
    std::string content;
    if (t.think) {
      const std::size_t idx = seen++;
      if (i == last_block) {
        const std::size_t keep = std::min(last_len, t.think_len);
        content = "<think>" + words("t" + std::to_string(i) + "_", keep) + "</think>";
      } else if (idx >= drop) {
        content = "<think>" + words("t" + std::to_string(i) + "_", t.think_len) + "</think>";
      }
    }
    content += answer_of(i, t.answer_len);
    c.turns.push_back({"assistant", content});
  }
  return c;
}

// Counts with delimiters as word boundaries costing nothing.
std::size_t independent_tokens(const Conversation& c) {
  std::size_t n = 0;
  for (const auto& t : c.turns) {
    std::string s = t.content;
    for (const std::string d : {"<think>", "</think>"})
      for (auto p = s.find(d); p != std::string::npos; p = s.find(d)) s.replace(p, d.size(), " ");
    std::istringstream in(s);
    for (std::string w; in >> w;) ++n;
  }
  return n;
}

std::string trimming_sweep(Check& ck) {
  std::vector<TurnShape> assistant_opts, user_opts;
  for (std::size_t a : {0, 1, 5}) {
    for (std::size_t th : {0, 2, 13}) assistant_opts.push_back({true, true, th, a});
  }
  for (std::size_t a : {0, 3}) assistant_opts.push_back({true, false, 0, a});
  for (std::size_t q : {1, 7}) user_opts.push_back({false, false, 0, q});

  std::vector<std::vector<TurnShape>> convs;
  for (std::size_t len = 1; len <= 5; ++len)
    for (bool start_user : {true, false}) {
      std::vector<TurnShape> cur;
      auto go = [&](auto&& self, std::size_t i) -> void {
        if (i == len) {
          convs.push_back(cur);
          return;
        }
        const bool user = (i % 2 == 0) == start_user;
        for (const auto& o : user ? user_opts : assistant_opts) {
          cur.push_back(o);
          self(self, i + 1);
          cur.pop_back();
        }
      };
      go(go, 0);
    }

  std::size_t cases = 0, trimmed = 0, dropped = 0;
  for (const auto& shape : convs) {
    const auto original = build(shape, 0, std::string::npos);
    std::size_t blocks = 0, last_len = 0, answers = 0;
    for (const auto& t : shape) {
      if (t.assistant && t.think) {
        ++blocks;
        last_len = t.think_len;
      }
      answers += t.answer_len;
    }
    for (std::size_t budget = 1; budget <= 50; ++budget) {
      ++cases;
      auto out = ap_trim(original, budget);

      // reference outcome by brute force over drops and retained lengths
      TrimVariant want = TrimVariant::Dropped;
      std::optional<Conversation> expect;
      std::size_t want_len = 0, want_drop = 0;
      if (independent_tokens(original) <= budget) {
        want = TrimVariant::Unchanged;
        expect = original;
        want_len = last_len;
      } else {
        for (std::size_t k = 0; k < blocks && !expect; ++k)
          for (std::size_t l = last_len + 1; l-- > 0;) {
            auto cand = build(shape, k, l);
            if (independent_tokens(cand) <= budget) {
              want = k == 0 ? TrimVariant::TailTrimmed : TrimVariant::PriorThinkDropped;
              expect = cand;
              want_len = l;
              want_drop = k;
              break;
            }
          }
      }
      const std::string where = "conversation of " + std::to_string(shape.size()) +
                                " turns at budget " + std::to_string(budget);
      ck.expect(out.variant == want, "variant, " + where);
      if (want == TrimVariant::Dropped) {
        ++dropped;
        ck.expect(!out.conversation, "dropped has no output, " + where);
        ck.expect(answers > budget, "dropped only when answers alone exceed the budget, " + where);
        continue;
      }
      if (!out.conversation) {
        ck.expect(false, "missing output, " + where);
        continue;
      }
      trimmed += want != TrimVariant::Unchanged;
      ck.expect(*out.conversation == *expect, "maximal prefix output, " + where);
      ck.expect(out.retained_think_tokens == want_len, "retained length, " + where);
      ck.expect(out.dropped_blocks == want_drop, "dropped blocks, " + where);
      ck.expect(independent_tokens(*out.conversation) <= budget, "fits budget, " + where);
      for (std::size_t i = 0; i < shape.size(); ++i) {
        const auto& got = out.conversation->turns[i].content;
        if (!shape[i].assistant) {
          ck.expect(got == original.turns[i].content, "user turn verbatim, " + where);
        } else {
          const auto ans = answer_of(i, shape[i].answer_len);
          ck.expect(got.size() >= ans.size() && got.compare(got.size() - ans.size(), ans.size(), ans) == 0,
                    "answer verbatim, " + where);
        }
      }
    }
  }
  return std::to_string(convs.size()) + " conversations, " + std::to_string(cases) +
         " trims (" + std::to_string(trimmed) + " trimmed, " + std::to_string(dropped) +
         " dropped)";
}

// Fewest bins by exhaustive search.
std::size_t optimal_bins(std::vector<std::size_t> lens, std::size_t window) {
  std::sort(lens.rbegin(), lens.rend());
  const std::size_t total = std::accumulate(lens.begin(), lens.end(), std::size_t{0});
  const std::size_t lower = (total + window - 1) / window;
  std::size_t best = lens.size();
  std::vector<std::size_t> load;
  auto go = [&](auto&& self, std::size_t i) -> void {
    if (load.size() >= best || best == lower) return;
    if (i == lens.size()) {
      best = load.size();
      return;
    }
    for (std::size_t b = 0; b < load.size(); ++b) {
      if (load[b] + lens[i] > window) continue;
      if (b > 0 && load[b] == load[b - 1]) continue;  // symmetric bin
      load[b] += lens[i];
      self(self, i + 1);
      load[b] -= lens[i];
    }
    load.push_back(lens[i]);
    self(self, i + 1);
    load.pop_back();
  };
  go(go, 0);
  return best;
}

std::string packing(Check& ck) {
  SplitMix64 g(808);
  std::size_t worst_gap = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const bool small = trial < 600;
    std::vector<std::size_t> lens(small ? 1 + g.below(12) : 1 + g.below(2000));
    const std::size_t window = 8 + g.below(120);
    for (auto& l : lens) l = 1 + g.below(window);
    auto bins = bfd_pack(lens, window);
    std::vector<int> seen(lens.size(), 0);
    for (const auto& b : bins) {
      std::size_t sum = 0;
      for (auto i : b.items) {
        ++seen[i];
        sum += lens[i];
      }
      ck.expect(sum == b.tokens && b.tokens <= window, "bin within window");
    }
    ck.expect(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }),
              "every item packed once");
    if (small) {
      const std::size_t opt = optimal_bins(lens, window);
      ck.expect(bins.size() <= opt + 2, "within optimal + 2");
      worst_gap = std::max(worst_gap, bins.size() - opt);
    }
  }

  double worst_ratio = 1;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> lens(64 + g.below(193));
    for (auto& l : lens) l = 1 + g.below(kMicrobatchBudget);
    const std::size_t ranks = 2 + g.below(7);
    auto plan = pack_microbatches(lens, kMicrobatchBudget, ranks);
    for (const auto& r : plan)
      for (const auto& m : r.microbatches) ck.expect(m.tokens <= kMicrobatchBudget, "microbatch budget");
    const double ratio = rank_imbalance(plan);
    worst_ratio = std::max(worst_ratio, ratio);
    ck.expect(ratio <= 1.10, "rank max/min <= 1.10");
  }
  return "bfd worst gap " + std::to_string(worst_gap) + ", rank ratio worst " +
         fmt("%.4f", worst_ratio);
}

std::string sizing(Check& ck) {
  IoWorkload w;
  const double iops = iops_needed(w);
  ck.expect(iops == 6553.6, "iops_needed = 6553.6");
  ck.expect(std::llround(iops) == 6554, "about 6554 * sigma at sigma 1");
  const double tb = t_break(w);
  ck.expect(std::abs(tb - 0.234) <= 0.001, "t_break = 0.234 +- 0.001");
  w.scatter = 8;
  const double tb8 = t_break(w);
  ck.expect(std::abs(tb8 - 1.872) <= 0.001, "sigma 8 t_break = 1.872");
  ck.expect(tb8 < w.iteration_s, "sigma 8 still below the 2.5 s iteration");
  return "iops " + fmt("%.1f", iops) + ", t_break " + fmt("%.5f", tb) + " s, sigma 8 " +
         fmt("%.4f", tb8) + " s";
}

std::string mock_eval(Check& ck) {
  auto problems = make_arithmetic_problems(50, 31);
  OracleOptions o;
  o.round_accuracy = {0.3, 0.6};
  auto oracle = OracleBackend::for_problems(problems, o);
  ExactMatchVerifier v;
  auto cfg = plan(16, 4, 0, 64, 16);
  cfg.final_budget = 64;
  auto t0 = run_eval(problems, cfg, oracle, v, 8);
  cfg.rounds = 1;
  auto t1 = run_eval(problems, cfg, oracle, v, 8);
  ck.expect(t0.failed == 0 && t1.failed == 0, "no failed problems");
  ck.expect(t1.mean_score > t0.mean_score, "T=1 beats T=0");
  return "T=0 " + fmt("%.4f", t0.mean_score) + ", T=1 " + fmt("%.4f", t1.mean_score);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string determinism(Check& ck) {
  const auto dir = fs::temp_directory_path() / ("mrsa_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto problems = (dir / "problems.jsonl").string();
  {
    std::ofstream out(problems);
    for (const auto& p : make_arithmetic_problems(24, 5))
      out << Json{{"id", p.id}, {"prompt", p.prompt}, {"gold_answer", *p.gold_answer}}.dump() << "\n";
  }
  auto no_env = [](std::string_view) -> std::optional<std::string> { return std::nullopt; };
  std::size_t bytes = 0;
  for (const std::string backend : {"oracle", "echo"}) {
    std::vector<std::string> reports;
    for (const std::string cap : {"1", "8", "1", "8"}) {
      const auto path = (dir / (backend + "_" + cap + "_" + std::to_string(reports.size()) + ".json")).string();
      std::ostringstream out, err;
      const int code = dispatch({"run", "--problems", problems, "--backend", backend, "--N", "8",
                                 "--C", "3", "--T", "2", "--beta", "96", "--tau", "24",
                                 "--final-budget", "128", "--seed", "77", "--concurrency", cap,
                                 "--out", path},
                                out, err, no_env);
      ck.expect(code == kExitOk || code == kExitPartial, backend + " run exit " + std::to_string(code));
      reports.push_back(slurp(path));
    }
    bytes = reports[0].size();
    ck.expect(!reports[0].empty(), backend + " report written");
    for (std::size_t i = 1; i < reports.size(); ++i)
      ck.expect(reports[i] == reports[0], backend + " report " + std::to_string(i) + " identical");
  }
  fs::remove_all(dir);
  return "2 backends x 4 runs byte-identical, " + std::to_string(bytes) + " bytes each";
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "special-case reductions", 1, special_cases},
      {2, "prefill bound fuzz", 10, prefill_bound},
      {3, "token ledger", 1, ledger_exact},
      {4, "compressibility canary", 30, canary},
      {5, "RL kernels", 10, rl_kernels},
      {6, "KL length-bias mechanism", 1, kl_mechanism},
      {7, "calibrator convergence", 30, calibrator},
      {8, "AP-trimming oracle sweep", 60, trimming_sweep},
      {9, "packing", 60, packing},
      {10, "IO sizing numerics", 1, sizing},
      {11, "end-to-end mock eval", 30, mock_eval},
      {12, "determinism", 60, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Check ck;
    std::string detail;
    const auto start = std::chrono::steady_clock::now();
    try {
      detail = c.run(ck);
    } catch (const std::exception& e) {
      ck.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = ck.ok() && in_time;
    failed += !pass;
    std::printf("[%s] %2d %-26s %7.3f s (limit %g s)  %s\n", pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), secs, c.limit_s, detail.c_str());
    if (!in_time) std::printf("       over the time limit\n");
    std::size_t shown = 0;
    for (const auto& f : ck.failures)
      if (!f.empty() && shown++ < 5) std::printf("       %s\n", f.c_str());
    if (ck.failures.size() > shown) std::printf("       ... %zu failures total\n", ck.failures.size());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
