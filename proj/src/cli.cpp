// SPDX-License-Identifier: Apache-2.0

#include "mrsa/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mrsa/backend.hpp"
#include "mrsa/dataprep.hpp"
#include "mrsa/guards.hpp"
#include "mrsa/jsonio.hpp"
#include "mrsa/orchestrator.hpp"
#include "mrsa/rlspine.hpp"
#include "mrsa/sizing.hpp"

namespace mrsa {

namespace {

// Flags that map straight onto config keys, applied after file and env.
struct Overrides {
  std::vector<std::pair<std::string, std::optional<std::string>>> flags;
  std::vector<std::string> sets;
  std::string config_path;

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    flags.emplace_back(key, std::nullopt);
    app->add_option(flag, flags.back().second, help + " [" + key + "]");
  }
};

void add_common(CLI::App* app, Overrides& o) {
  o.flags.reserve(32);  // options keep pointers into this vector
  app->add_option("--config", o.config_path, "TOML config file");
  app->add_option("--set", o.sets, "override any config key: --set rsa.N=8");
  o.add(app, "--seed", "seed", "global seed");
}

RunConfig resolve(const Overrides& o, const EnvLookup& env) {
  RunConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open config file '" + o.config_path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    c = parse_config(buf.str(), o.config_path);
  }
  apply_env(c, env);
  for (const auto& [key, value] : o.flags)
    if (value) set_config_value(c, key, *value);
  for (const auto& s : o.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
  }
  c.validate();
  return c;
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      os_ = &fallback;
    } else {
      file_.open(path);
      if (!file_) throw ConfigError("cannot write '" + path + "'");
      os_ = &file_;
    }
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

std::string row_id(const Json& row, std::size_t index) {
  if (auto it = row.find("id"); it != row.end())
    return it->is_string() ? it->get<std::string>() : it->dump();
  return std::to_string(index);
}

// ---------------------------------------------------------------------------
// run / replay

std::unique_ptr<Backend> make_backend(const RunConfig& c, const std::vector<Problem>& problems) {
  const auto& b = c.backend;
  if (b.kind == "echo") {
    EchoOptions o;
    o.length = b.echo_length;
    return std::make_unique<EchoBackend>(o);
  }
  if (b.kind == "oracle") {
    OracleOptions o;
    o.round_accuracy = b.oracle_accuracy;
    o.reasoning_length = b.oracle_reasoning_length;
    return std::make_unique<OracleBackend>(OracleBackend::for_problems(problems, o));
  }
  if (b.kind == "replay") return std::make_unique<ReplayBackend>(ReplayBackend::from_jsonl(b.replay_path));
  return std::make_unique<HttpBackend>(b.http);
}

int run_eval_command(const RunConfig& c, const std::string& problems_path,
                     const std::string& record_path, std::ostream& out, std::ostream& err) {
  auto problems = read_problems(problems_path);
  if (problems.empty()) throw ConfigError("'" + problems_path + "' contains no problems");
  auto backend = make_backend(c, problems);
  std::optional<RecordingBackend> recorder;
  Backend* used = backend.get();
  if (!record_path.empty()) used = &recorder.emplace(*backend);

  ExactMatchVerifier verifier;
  auto report = run_eval(problems, c.effective_rsa(), *used, verifier, c.concurrency);

  {
    Output o(c.output.report, out);
    *o << to_json(report).dump(2) << '\n';
  }
  if (!c.output.traces.empty()) write_jsonl(c.output.traces, trace_rows(report));
  if (recorder) recorder->write_jsonl(record_path);

  std::size_t flagged = 0;
  for (const auto& r : report.results)
    flagged += std::count(r.verifier_failed.begin(), r.verifier_failed.end(), true);
  char line[256];
  std::snprintf(line, sizeof line,
                "%zu problems, mean score %.4f, mean generated tokens %.1f, %zu failed, "
                "%zu candidates with verifier errors\n",
                report.results.size(), report.mean_score, report.mean_generated_tokens,
                report.failed, flagged);
  err << line;
  for (const auto& r : report.results)
    if (r.error) err << "problem " << r.problem_id << ": " << *r.error << '\n';
  return report.failed || flagged ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// guard

std::vector<TokenId> ids_of(const Json& row) {
  if (auto it = row.find("token_ids"); it != row.end()) return it->get<std::vector<TokenId>>();
  if (auto it = row.find("tokens"); it != row.end()) return it->get<std::vector<TokenId>>();
  throw ParseError("row has no token_ids");
}

int guard_command(const RunConfig& c, const std::string& input, const std::string& output,
                  std::ostream& out, std::ostream& err) {
  auto rows = read_jsonl(input);
  Output o(output, out);
  std::size_t failures = 0, flagged = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    Json res = {{"id", row_id(row, i)}};
    try {
      auto ids = ids_of(row);
      std::vector<double> lps;
      if (auto it = row.find("logprobs"); it != row.end() && !it->is_null())
        lps = it->get<std::vector<double>>();
      auto report = guard_rollout(ids, lps, c.guard);
      res["chunk_ratios"] = report.scan.ratios;
      res["chunk_tokens"] = report.scan.chunk_tokens;
      res["flush_overhead"] = report.scan.flush_overhead;
      res["flagged"] = report.flagged;
      res["rare_cutoffs"] = report.rare_cutoffs;
      res["rare_fractions"] = report.rare_fractions;
      if (!lps.empty()) {
        std::vector<std::size_t> pos;
        for (std::size_t t = 0; t < report.gibberish.size(); ++t)
          if (report.gibberish[t]) pos.push_back(t);
        res["gibberish_positions"] = pos;
      }
      if (auto it = row.find("reward"); it != row.end()) {
        res["reward"] = it->get<double>();
        res["gated_reward"] = reward_gate(report, it->get<double>());
      }
      flagged += report.flagged;
    } catch (const std::exception& e) {
      res["error"] = e.what();
      ++failures;
    }
    *o << res.dump() << '\n';
  }
  err << rows.size() << " rollouts, " << flagged << " flagged, " << failures << " errors\n";
  return failures ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// advantage

template <class T>
std::optional<T> opt_field(const Json& row, const char* key) {
  auto it = row.find(key);
  if (it == row.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

Json advantage_row(const RunConfig& c, const Json& row) {
  using Vec = std::vector<double>;
  using Mat = std::vector<std::vector<double>>;
  Json res;
  const auto rewards = row.at("rewards").get<Vec>();
  try {
    auto a = maxrl_advantage(rewards);
    res["maxrl"] = a.advantages;
    res["informative"] = a.informative;
  } catch (const DegenerateGroup& e) {
    res["maxrl"] = nullptr;
    res["informative"] = false;
    res["degenerate"] = e.what();
  }
  try {
    res["grpo"] = grpo_advantage(rewards).advantages;
  } catch (const DegenerateGroup&) {
    res["grpo"] = nullptr;
  }
  if (auto lengths = opt_field<Vec>(row, "lengths")) {
    const double best = opt_field<double>(row, "best_pass_rate").value_or(0.0);
    auto bonus = length_reward(rewards, *lengths, c.rl.length_params(best));
    res["length_bonus"] = bonus;
    try {
      res["combined"] = combined_advantage(rewards, bonus).advantages;
    } catch (const DegenerateGroup&) {
      res["combined"] = nullptr;
    }
  }
  if (auto losses = opt_field<Mat>(row, "token_losses")) {
    res["smtsn"] = smtsn_loss(*losses);
    res["token_mean"] = token_mean_loss(*losses);
  }
  if (auto div = opt_field<Mat>(row, "divergence")) {
    Json masks = Json::array();
    std::size_t kept = 0, total = 0;
    for (const auto& d : *div) {
      auto m = binary_tv_mask(d, c.rl.tv_delta);
      kept += std::count(m.begin(), m.end(), true);
      total += m.size();
      masks.push_back(m);
    }
    res["tv_keep"] = std::move(masks);
    res["tv_kept_fraction"] = total ? static_cast<double>(kept) / static_cast<double>(total) : 1.0;
  }
  if (auto lr = opt_field<Mat>(row, "log_ratios")) {
    if (lr->size() != rewards.size()) throw ParseError("log_ratios must have one entry per rollout");
    Vec adj;
    for (std::size_t i = 0; i < lr->size(); ++i)
      adj.push_back(k1_sequence_adjustment((*lr)[i], rewards[i], c.rl.beta_kl));
    res["k1_adjusted"] = adj;
  }
  if (auto it = row.find("chunks"); it != row.end() && !it->is_null()) {
    if (it->size() != rewards.size()) throw ParseError("chunks must have one entry per rollout");
    const bool rescale = row.value("rescale", true);
    Json all = Json::array();
    for (std::size_t i = 0; i < it->size(); ++i) {
      std::vector<LogRatioChunk> chunks;
      for (const auto& ch : (*it)[i])
        chunks.push_back({ch.at("log_ratios").get<Vec>(), ch.value("lag", 0.0)});
      all.push_back(chunk_local_adjustment(chunks, rewards[i], c.rl.beta_kl, rescale));
    }
    res["chunk_adjusted"] = std::move(all);
  }
  return res;
}

int advantage_command(const RunConfig& c, const std::string& input, const std::string& output,
                      std::ostream& out, std::ostream& err) {
  auto rows = read_jsonl(input);
  Output o(output, out);
  std::size_t failures = 0, degenerate = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Json res;
    try {
      res = advantage_row(c, rows[i]);
      degenerate += res.contains("degenerate");
    } catch (const std::exception& e) {
      res = {{"error", e.what()}};
      ++failures;
    }
    res["id"] = row_id(rows[i], i);
    *o << res.dump() << '\n';
  }
  err << rows.size() << " groups, " << degenerate << " degenerate, " << failures << " errors\n";
  return failures ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// schedule

int schedule_command(const RunConfig& c, const std::string& csv_path,
                     const std::string& summary_path, std::ostream& out, std::ostream& err) {
  const auto& cc = c.curriculum;
  std::vector<SyntheticEnv> envs;
  std::vector<CalibratorState> cals;
  for (std::size_t e = 0; e < cc.env_mu.size(); ++e) {
    envs.push_back({cc.env_mu[e], cc.env_s[e], 1e-6});
    SplitMix64 prior(derive_seed(c.seed, {fnv1a64("prior"), e}));
    cals.push_back(make_calibrator(cc.calibrator, prior));
  }
  SplitMix64 rng(derive_seed(c.seed, {fnv1a64("schedule")}));
  std::vector<std::size_t> counts(envs.size(), 0);
  std::vector<std::vector<double>> pass(envs.size());

  Output csv(csv_path, out);
  *csv << "iteration,env,difficulty,candidate,p_target,successes,pass_rate,ess,resampled\n";
  for (std::size_t it = 0; it < cc.iterations; ++it) {
    const std::size_t e = weighted_env_sampler(counts, rng);
    auto pt = calibration_step(envs[e], cals[e], cc.group, rng);
    ++counts[e];
    pass[e].push_back(pt.pass_rate);
    char line[256];
    std::snprintf(line, sizeof line, "%zu,%zu,%d,%zu,%.6f,%zu,%.6f,%.6f,%d\n", it, e,
                  pt.difficulty, pt.candidate, pt.p_target, pt.successes, pt.pass_rate, pt.ess,
                  pt.resampled ? 1 : 0);
    *csv << line;
  }

  Json envs_json = Json::array();
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const auto& st = cals[e];
    double mu = 0, s = 0;
    for (std::size_t j = 0; j < st.pool.size(); ++j) {
      mu += st.weights[j] * st.pool[j].mu;
      s += st.weights[j] * st.pool[j].s;
    }
    const auto& pr = pass[e];
    const std::size_t window = std::min<std::size_t>(50, pr.size());
    double tail = 0;
    for (std::size_t i = pr.size() - window; i < pr.size(); ++i) tail += pr[i];
    envs_json.push_back({{"index", e},
                         {"mu", envs[e].mu},
                         {"s", envs[e].s},
                         {"samples", counts[e]},
                         {"final_window_pass_rate", window ? tail / static_cast<double>(window) : 0.0},
                         {"posterior_mu", mu},
                         {"posterior_s", s},
                         {"ess", st.ess()},
                         {"resamples", st.resamples}});
  }
  Json summary = {{"iterations", cc.iterations},
                  {"group", cc.group},
                  {"seed", c.seed},
                  {"envs", std::move(envs_json)}};
  Output so(summary_path, out);
  *so << summary.dump(2) << '\n';
  err << cc.iterations << " iterations over " << envs.size() << " environment(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// trim

Conversation conversation_from_json(const Json& row, std::size_t index) {
  Conversation c;
  c.id = row_id(row, index);
  for (const auto& m : row.at("messages"))
    c.turns.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  return c;
}

Json conversation_json(const Conversation& c) {
  Json msgs = Json::array();
  for (const auto& t : c.turns) msgs.push_back({{"role", t.role}, {"content", t.content}});
  return {{"id", c.id}, {"messages", std::move(msgs)}};
}

int trim_command(const RunConfig& c, const std::string& input, const std::string& prefix,
                 const std::string& summary_path, std::ostream& out, std::ostream& err) {
  auto rows = read_jsonl(input);
  std::vector<Conversation> data;
  std::vector<std::string> load_errors(rows.size());
  std::vector<std::size_t> index;  // dataset position -> row
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      data.push_back(conversation_from_json(rows[i], i));
      index.push_back(i);
    } catch (const Json::exception& e) {
      load_errors[i] = e.what();
    }
  }
  TrimOptions opts;
  opts.delimiters = c.rsa.delimiters;
  opts.delimiter_tokens = c.dataprep.delimiter_tokens;
  auto sets = retrim_stage(data, c.dataprep.budgets, opts);

  std::size_t failures = 0;
  for (const auto& e : load_errors) failures += !e.empty();
  Json per_budget = Json::array();
  for (const auto& set : sets) {
    std::map<std::string, std::size_t> counts = {
        {"unchanged", 0}, {"tail-trimmed", 0}, {"prior-think-dropped", 0}, {"dropped", 0}};
    std::size_t errors = 0;
    std::ofstream f(prefix + "." + std::to_string(set.budget) + ".jsonl");
    if (!f) throw ConfigError("cannot write '" + prefix + "." + std::to_string(set.budget) + ".jsonl'");
    for (std::size_t k = 0; k < set.items.size(); ++k) {
      const auto& item = set.items[k];
      if (!item.outcome) {
        ++errors;
        err << "sample " << data[k].id << " at budget " << set.budget << ": " << item.error << '\n';
        continue;
      }
      ++counts[to_string(item.outcome->variant)];
      if (!item.outcome->conversation) continue;
      Json row = conversation_json(*item.outcome->conversation);
      row["variant"] = to_string(item.outcome->variant);
      row["tokens"] = item.outcome->tokens;
      row["retained_think_tokens"] = item.outcome->retained_think_tokens;
      row["dropped_blocks"] = item.outcome->dropped_blocks;
      f << row.dump() << '\n';
    }
    failures += errors;
    Json b = {{"budget", set.budget}, {"errors", errors}};
    for (const auto& [k, v] : counts) b[k] = v;
    per_budget.push_back(std::move(b));
  }
  Json summary = {{"samples", rows.size()}, {"budgets", std::move(per_budget)}};
  Output so(summary_path, out);
  *so << summary.dump(2) << '\n';
  for (std::size_t i = 0; i < load_errors.size(); ++i)
    if (!load_errors[i].empty()) err << "row " << i + 1 << ": " << load_errors[i] << '\n';
  return failures ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// pack

int pack_command(const RunConfig& c, const std::string& input, const std::string& mode,
                 const std::string& output, const std::string& summary_path, std::ostream& out,
                 std::ostream& err) {
  auto rows = read_jsonl(input);
  const std::size_t limit = mode == "bfd" ? c.dataprep.window : c.rl.microbatch_budget;
  std::vector<std::string> ids;
  std::vector<std::size_t> lengths;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string id = row_id(rows[i], i);
    try {
      const auto len = rows[i].at("length").get<std::size_t>();
      if (len > limit) {
        err << "item " << id << ": " << len << " tokens exceeds the limit of " << limit << '\n';
        ++failures;
        continue;
      }
      ids.push_back(id);
      lengths.push_back(len);
    } catch (const Json::exception& e) {
      err << "item " << id << ": " << e.what() << '\n';
      ++failures;
    }
  }

  Output o(output, out);
  Json summary;
  std::size_t total = 0;
  for (auto l : lengths) total += l;
  if (mode == "bfd") {
    auto bins = bfd_pack(lengths, c.dataprep.window);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      std::vector<std::string> items;
      for (auto i : bins[b].items) items.push_back(ids[i]);
      *o << Json{{"bin", b}, {"items", items}, {"tokens", bins[b].tokens}}.dump() << '\n';
    }
    summary = {{"mode", "bfd"},
               {"examples", lengths.size()},
               {"bins", bins.size()},
               {"window", c.dataprep.window},
               {"fill", bins.empty() ? 0.0
                                     : static_cast<double>(total) /
                                           static_cast<double>(bins.size() * c.dataprep.window)}};
  } else {
    auto plan = pack_microbatches(lengths, c.rl.microbatch_budget, c.rl.ranks);
    std::size_t mbs = 0;
    std::vector<std::size_t> rank_tokens;
    for (std::size_t r = 0; r < plan.size(); ++r) {
      rank_tokens.push_back(plan[r].tokens);
      for (std::size_t m = 0; m < plan[r].microbatches.size(); ++m, ++mbs) {
        std::vector<std::string> items;
        for (auto i : plan[r].microbatches[m].items) items.push_back(ids[i]);
        *o << Json{{"rank", r}, {"microbatch", m}, {"items", items},
                   {"tokens", plan[r].microbatches[m].tokens}}.dump()
           << '\n';
      }
    }
    const double imb = rank_imbalance(plan);
    summary = {{"mode", "microbatch"},
               {"rollouts", lengths.size()},
               {"ranks", c.rl.ranks},
               {"budget", c.rl.microbatch_budget},
               {"microbatches", mbs},
               {"rank_tokens", rank_tokens},
               {"imbalance", std::isfinite(imb) ? Json(imb) : Json(nullptr)}};
  }
  Output so(summary_path, out);
  *so << summary.dump(2) << '\n';
  return failures ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// iops

int iops_command(const RunConfig& c, bool json, std::ostream& out) {
  IoWorkload w = c.sizing.workload;
  if (c.sizing.extra_faults > 0)
    w.scatter = scatter_estimate(c.sizing.extra_faults, w.page_size, w.seq_len, w.bytes_per_token);
  const double pages = pages_per_iteration(w);
  const double need = iops_needed(w);
  const double tb = t_break(w);
  if (json) {
    out << Json{{"pages", pages}, {"sigma", w.scatter}, {"iops_needed", need},
                {"t_break", tb}, {"t", w.iteration_s}, {"iops_max", w.iops_max},
                {"io_bound", w.iteration_s < tb}}.dump(2)
        << '\n';
    return kExitOk;
  }
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "storage IOPS sizing\n"
                "  global batch G            %.0f sequences\n"
                "  sequence length s         %.0f tokens\n"
                "  bytes per token b         %g\n"
                "  page size P               %.0f bytes\n"
                "  iteration time t          %g s\n"
                "  IOPS capacity I_max       %g\n"
                "  scatter factor sigma      %g\n"
                "\n"
                "  pages per iteration       %.0f\n"
                "  IOPS needed               %.1f\n"
                "  break-even t_break        %.3f s\n"
                "  verdict                   %s\n",
                w.batch, w.seq_len, w.bytes_per_token, w.page_size, w.iteration_s, w.iops_max,
                w.scatter, pages, need, tb,
                w.iteration_s >= tb ? "storage keeps up (t >= t_break)"
                                    : "I/O bound (t < t_break)");
  out << buf;
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const EnvLookup& env) {
  CLI::App app{"Markovian RSA orchestration and RL data tooling", "mrsa"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // run / replay
  Overrides run_o, replay_o;
  std::string problems, record, records, replay_problems;
  auto* run = app.add_subcommand("run", "run Markovian RSA over a problem set");
  add_common(run, run_o);
  run->add_option("--problems", problems, "problems JSONL")->required();
  run->add_option("--record", record, "write every backend exchange as replay JSONL");
  auto rsa_flags = [](CLI::App* a, Overrides& o) {
    o.add(a, "--N", "rsa.N", "population size");
    o.add(a, "--C", "rsa.C", "candidates per aggregation prompt");
    o.add(a, "--T", "rsa.T", "aggregation rounds");
    o.add(a, "--beta", "rsa.beta", "decode budget for rounds before the last");
    o.add(a, "--tau", "rsa.tau", "carried tail length");
    o.add(a, "--final-budget", "rsa.final_budget", "decode budget of the last round");
    o.add(a, "--compaction", "rsa.compaction", "tail | pacore-hybrid");
    o.add(a, "--early-stop", "rsa.early_stop", "off | round-consensus");
    o.add(a, "--preset", "rsa.preset", "16k-4k | 40k-4k");
    o.add(a, "--concurrency", "concurrency", "in-flight request cap");
    o.add(a, "--out", "output.report", "EvalReport JSON path, - for stdout");
    o.add(a, "--traces", "output.traces", "per-trace JSONL dump");
  };
  rsa_flags(run, run_o);
  run_o.add(run, "--backend", "backend.kind", "echo | oracle | replay | http");
  run_o.add(run, "--endpoint", "backend.url", "server base URL");
  run_o.add(run, "--model", "backend.model", "model name");

  auto* replay = app.add_subcommand("replay", "re-run from a recorded exchange file");
  add_common(replay, replay_o);
  replay->add_option("--problems", replay_problems, "problems JSONL")->required();
  replay->add_option("--records", records, "replay JSONL written by run --record")->required();
  rsa_flags(replay, replay_o);

  // guard
  Overrides guard_o;
  std::string guard_in, guard_out = "-";
  auto* guard = app.add_subcommand("guard", "compressibility, rare-token and gibberish checks");
  add_common(guard, guard_o);
  guard->add_option("--input", guard_in, "rollout JSONL with token_ids")->required();
  guard->add_option("--output", guard_out, "report JSONL, - for stdout");
  guard_o.add(guard, "--chunk-size", "guard.chunk_size", "tokens per chunk");
  guard_o.add(guard, "--tau-repeat", "guard.tau_repeat", "ratio threshold");
  guard_o.add(guard, "--vocab", "guard.vocab_size", "vocabulary size");

  // advantage
  Overrides adv_o;
  std::string adv_in, adv_out = "-";
  auto* adv = app.add_subcommand("advantage", "group advantages, length bonus, masks, losses");
  add_common(adv, adv_o);
  adv->add_option("--input", adv_in, "rollout-group JSONL")->required();
  adv->add_option("--output", adv_out, "result JSONL, - for stdout");
  adv_o.add(adv, "--beta-kl", "rl.beta_kl", "KL-in-reward coefficient");
  adv_o.add(adv, "--delta", "rl.tv_delta", "trust-region threshold");
  adv_o.add(adv, "--length-scale", "rl.length_scale", "length bonus scale c");

  // schedule
  Overrides sch_o;
  std::string sch_csv = "trajectory.csv", sch_summary = "-";
  auto* sch = app.add_subcommand("schedule", "simulate difficulty calibration on synthetic envs");
  add_common(sch, sch_o);
  sch->add_option("--csv", sch_csv, "trajectory CSV path");
  sch->add_option("--summary", sch_summary, "summary JSON path, - for stdout");
  sch_o.add(sch, "--iterations", "curriculum.iterations", "calibration steps");
  sch_o.add(sch, "--group", "curriculum.group", "rollouts per step");

  // trim
  Overrides trim_o;
  std::string trim_in, trim_prefix = "trimmed", trim_summary = "-";
  auto* trim = app.add_subcommand("trim", "answer-preserving trimming at one or more budgets");
  add_common(trim, trim_o);
  trim->add_option("--input", trim_in, "conversation JSONL")->required();
  trim->add_option("--output", trim_prefix, "output prefix; writes PREFIX.<budget>.jsonl");
  trim->add_option("--summary", trim_summary, "summary JSON path, - for stdout");
  trim_o.add(trim, "--budgets", "dataprep.budgets", "comma-separated token budgets");

  // pack
  Overrides pack_o;
  std::string pack_in, pack_mode = "bfd", pack_out = "packed.jsonl", pack_summary = "-";
  auto* pack = app.add_subcommand("pack", "bin packing into windows or rank microbatches");
  add_common(pack, pack_o);
  pack->add_option("--input", pack_in, "JSONL rows with a length field")->required();
  pack->add_option("--mode", pack_mode, "bfd | microbatch")
      ->check(CLI::IsMember({"bfd", "microbatch"}));
  pack->add_option("--output", pack_out, "assignment JSONL, - for stdout");
  pack->add_option("--summary", pack_summary, "summary JSON path, - for stdout");
  pack_o.add(pack, "--window", "dataprep.window", "bfd window tokens");
  pack_o.add(pack, "--ranks", "rl.ranks", "data-parallel ranks");
  pack_o.add(pack, "--budget", "rl.microbatch_budget", "tokens per microbatch");

  // iops
  Overrides io_o;
  bool io_json = false;
  auto* io = app.add_subcommand("iops", "storage IOPS sizing report");
  add_common(io, io_o);
  io->add_flag("--json", io_json, "JSON instead of text");
  io_o.add(io, "--G", "sizing.G", "global batch (sequences)");
  io_o.add(io, "--s", "sizing.s", "sequence length (tokens)");
  io_o.add(io, "--b", "sizing.b", "bytes per token");
  io_o.add(io, "--P", "sizing.P", "page size (bytes)");
  io_o.add(io, "--t", "sizing.t", "iteration time (s)");
  io_o.add(io, "--Imax", "sizing.Imax", "IOPS capacity");
  io_o.add(io, "--sigma", "sizing.sigma", "scatter factor");
  io_o.add(io, "--m", "sizing.m", "extra page faults per sample; estimates sigma");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitConfig;
  }

  try {
    if (run->parsed()) return run_eval_command(resolve(run_o, env), problems, record, out, err);
    if (replay->parsed()) {
      auto c = resolve(replay_o, env);
      c.backend.kind = "replay";
      c.backend.replay_path = records;
      return run_eval_command(c, replay_problems, "", out, err);
    }
    if (guard->parsed()) return guard_command(resolve(guard_o, env), guard_in, guard_out, out, err);
    if (adv->parsed()) return advantage_command(resolve(adv_o, env), adv_in, adv_out, out, err);
    if (sch->parsed()) return schedule_command(resolve(sch_o, env), sch_csv, sch_summary, out, err);
    if (trim->parsed())
      return trim_command(resolve(trim_o, env), trim_in, trim_prefix, trim_summary, out, err);
    if (pack->parsed())
      return pack_command(resolve(pack_o, env), pack_in, pack_mode, pack_out, pack_summary, out,
                          err);
    if (io->parsed()) return iops_command(resolve(io_o, env), io_json, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPartial;
  }
  return kExitConfig;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace mrsa
