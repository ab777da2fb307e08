// SPDX-License-Identifier: Apache-2.0

#include "mrsa/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <toml.hpp>

namespace mrsa {

RsaConfig rsa_preset(Preset p) {
  RsaConfig c;
  c.beta = p == Preset::Capability40k4k ? 40960 : 16384;
  c.tau = 4096;
  c.final_budget = 40960;
  return c;
}

namespace {

Preset parse_preset(std::string_view s) {
  if (s == "16k-4k") return Preset::Default16k4k;
  if (s == "40k-4k") return Preset::Capability40k4k;
  throw ConfigError("rsa.preset must be '16k-4k' or '40k-4k', got '" + std::string(s) + "'");
}

void apply_preset(RsaConfig& rsa, Preset p) {
  auto d = rsa_preset(p);
  rsa.beta = d.beta;
  rsa.tau = d.tau;
  rsa.final_budget = d.final_budget;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& expected) {
  throw ConfigError("config key '" + key + "': expected " + expected);
}

// Conversions between TOML nodes, flag text and field types.
template <class T>
struct Conv;

template <>
struct Conv<std::int64_t> {
  static std::int64_t from_node(const toml::node& n, const std::string& key) {
    auto v = n.value_exact<std::int64_t>();
    if (!v) bad_value(key, "an integer");
    return *v;
  }
  static std::int64_t from_text(std::string_view s, const std::string& key) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, "an integer");
    return v;
  }
};

template <class T>
  requires std::is_integral_v<T>
T narrow(std::int64_t v, const std::string& key) {
  if constexpr (std::is_unsigned_v<T>) {
    if (v < 0) bad_value(key, "a non-negative integer");
  } else {
    if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max())
      bad_value(key, "an integer in range");
  }
  return static_cast<T>(v);
}

template <class T>
  requires(std::is_integral_v<T> && !std::is_same_v<T, bool>)
struct Conv<T> {
  static T from_node(const toml::node& n, const std::string& key) {
    return narrow<T>(Conv<std::int64_t>::from_node(n, key), key);
  }
  static T from_text(std::string_view s, const std::string& key) {
    return narrow<T>(Conv<std::int64_t>::from_text(s, key), key);
  }
  static std::int64_t to_value(T v) { return static_cast<std::int64_t>(v); }
};

template <>
struct Conv<double> {
  static double from_node(const toml::node& n, const std::string& key) {
    if (auto v = n.value_exact<double>()) return *v;
    if (auto v = n.value_exact<std::int64_t>()) return static_cast<double>(*v);
    bad_value(key, "a number");
  }
  static double from_text(std::string_view s, const std::string& key) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, "a number");
    return v;
  }
  static double to_value(double v) { return v; }
};

template <>
struct Conv<std::string> {
  static std::string from_node(const toml::node& n, const std::string& key) {
    auto v = n.value_exact<std::string>();
    if (!v) bad_value(key, "a string");
    return *v;
  }
  static std::string from_text(std::string_view s, const std::string&) { return std::string(s); }
  static std::string to_value(const std::string& v) { return v; }
};

template <class E>
struct Conv<std::vector<E>> {
  static std::vector<E> from_node(const toml::node& n, const std::string& key) {
    const auto* arr = n.as_array();
    if (!arr) bad_value(key, "an array");
    std::vector<E> out;
    for (const auto& item : *arr) out.push_back(Conv<E>::from_node(item, key));
    return out;
  }
  // Comma-separated list.
  static std::vector<E> from_text(std::string_view s, const std::string& key) {
    std::vector<E> out;
    while (!s.empty()) {
      auto comma = s.find(',');
      auto item = s.substr(0, comma);
      while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
      while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
      out.push_back(Conv<E>::from_text(item, key));
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
    return out;
  }
  static toml::array to_value(const std::vector<E>& v) {
    toml::array a;
    for (const auto& x : v) a.push_back(Conv<E>::to_value(x));
    return a;
  }
};

struct Field {
  std::string section;  // empty for top-level keys
  std::string key;
  std::function<void(RunConfig&, const toml::node&, const std::string&)> from_node;
  std::function<void(RunConfig&, std::string_view, const std::string&)> from_text;
  std::function<void(const RunConfig&, toml::table&)> write;

  std::string dotted() const { return section.empty() ? key : section + "." + key; }
};

template <class T, class Acc>
Field field(std::string section, std::string key, Acc acc) {
  Field f;
  f.section = std::move(section);
  f.key = key;
  f.from_node = [acc](RunConfig& c, const toml::node& n, const std::string& k) {
    acc(c) = Conv<T>::from_node(n, k);
  };
  f.from_text = [acc](RunConfig& c, std::string_view s, const std::string& k) {
    acc(c) = Conv<T>::from_text(s, k);
  };
  f.write = [acc, key](const RunConfig& c, toml::table& t) {
    t.insert_or_assign(key, Conv<T>::to_value(acc(const_cast<RunConfig&>(c))));
  };
  return f;
}

// Enum-valued key stored as its string form.
template <class E, class Acc>
Field enum_field(std::string section, std::string key, Acc acc,
                 E (*parse)(std::string_view), const char* (*show)(E)) {
  Field f;
  f.section = std::move(section);
  f.key = key;
  f.from_node = [acc, parse](RunConfig& c, const toml::node& n, const std::string& k) {
    acc(c) = parse(Conv<std::string>::from_node(n, k));
  };
  f.from_text = [acc, parse](RunConfig& c, std::string_view s, const std::string&) {
    acc(c) = parse(s);
  };
  f.write = [acc, show, key](const RunConfig& c, toml::table& t) {
    t.insert_or_assign(key, std::string(show(acc(const_cast<RunConfig&>(c)))));
  };
  return f;
}

#define ACC(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    using S = std::string;
    using Z = std::size_t;
    std::vector<Field> f;
    f.push_back(field<std::uint64_t>("", "seed", ACC(seed)));
    f.push_back(field<Z>("", "concurrency", ACC(concurrency)));

    f.push_back(field<Z>("rsa", "N", ACC(rsa.population)));
    f.push_back(field<Z>("rsa", "C", ACC(rsa.candidates)));
    f.push_back(field<Z>("rsa", "T", ACC(rsa.rounds)));
    f.push_back(field<Z>("rsa", "beta", ACC(rsa.beta)));
    f.push_back(field<Z>("rsa", "tau", ACC(rsa.tau)));
    f.push_back(field<Z>("rsa", "final_budget", ACC(rsa.final_budget)));
    f.push_back(enum_field<Compaction>("rsa", "compaction", ACC(rsa.compaction),
                                       &parse_compaction, &to_string));
    f.push_back(field<Z>("rsa", "max_aggregation_prompt", ACC(rsa.max_aggregation_prompt)));
    f.push_back(enum_field<EarlyStop>("rsa", "early_stop", ACC(rsa.early_stop),
                                      &parse_early_stop, &to_string));
    f.push_back(field<double>("rsa", "temperature", ACC(rsa.temperature)));
    f.push_back(field<double>("rsa", "top_p", ACC(rsa.top_p)));
    f.push_back(field<S>("rsa", "think_open", ACC(rsa.delimiters.open)));
    f.push_back(field<S>("rsa", "think_close", ACC(rsa.delimiters.close)));

    f.push_back(field<S>("backend", "kind", ACC(backend.kind)));
    f.push_back(field<S>("backend", "url", ACC(backend.http.url)));
    f.push_back(field<S>("backend", "path", ACC(backend.http.path)));
    f.push_back(field<S>("backend", "model", ACC(backend.http.model)));
    f.push_back(field<S>("backend", "api_key", ACC(backend.http.api_key)));
    f.push_back(field<double>("backend", "timeout_s", ACC(backend.http.timeout_s)));
    f.push_back(field<Z>("backend", "max_retries", ACC(backend.http.max_retries)));
    f.push_back(field<double>("backend", "backoff_base_s", ACC(backend.http.backoff_base_s)));
    f.push_back(field<double>("backend", "backoff_max_s", ACC(backend.http.backoff_max_s)));
    f.push_back(field<Z>("backend", "logprobs", ACC(backend.http.logprobs)));
    f.push_back(field<Z>("backend", "echo_length", ACC(backend.echo_length)));
    f.push_back(field<std::vector<double>>("backend", "oracle_accuracy", ACC(backend.oracle_accuracy)));
    f.push_back(field<Z>("backend", "oracle_reasoning_length", ACC(backend.oracle_reasoning_length)));
    f.push_back(field<S>("backend", "replay_path", ACC(backend.replay_path)));

    f.push_back(field<Z>("guard", "chunk_size", ACC(guard.chunk_size)));
    f.push_back(field<int>("guard", "window_bits", ACC(guard.window_bits)));
    f.push_back(field<int>("guard", "deflate_level", ACC(guard.deflate_level)));
    f.push_back(field<int>("guard", "mem_level", ACC(guard.mem_level)));
    f.push_back(field<double>("guard", "tau_repeat", ACC(guard.tau_repeat)));
    f.push_back(field<std::vector<double>>("guard", "rare_cutoffs", ACC(guard.rare_cutoffs)));
    f.push_back(field<std::uint32_t>("guard", "vocab_size", ACC(guard.vocab_size)));

    f.push_back(field<double>("rl", "beta_kl", ACC(rl.beta_kl)));
    f.push_back(field<double>("rl", "tv_delta", ACC(rl.tv_delta)));
    f.push_back(field<double>("rl", "max_length", ACC(rl.max_length)));
    f.push_back(field<double>("rl", "length_tolerance", ACC(rl.length_tolerance)));
    f.push_back(field<double>("rl", "acc_tolerance", ACC(rl.acc_tolerance)));
    f.push_back(field<double>("rl", "length_scale", ACC(rl.length_scale)));
    f.push_back(field<Z>("rl", "microbatch_budget", ACC(rl.microbatch_budget)));
    f.push_back(field<Z>("rl", "ranks", ACC(rl.ranks)));

    f.push_back(field<Z>("curriculum", "pool_size", ACC(curriculum.calibrator.pool_size)));
    f.push_back(field<double>("curriculum", "p_target", ACC(curriculum.calibrator.p_target)));
    f.push_back(field<double>("curriculum", "epsilon", ACC(curriculum.calibrator.epsilon)));
    f.push_back(field<double>("curriculum", "explore_low", ACC(curriculum.calibrator.explore_low)));
    f.push_back(field<double>("curriculum", "explore_high", ACC(curriculum.calibrator.explore_high)));
    f.push_back(field<double>("curriculum", "recency", ACC(curriculum.calibrator.recency)));
    f.push_back(field<double>("curriculum", "ess_fraction", ACC(curriculum.calibrator.ess_fraction)));
    f.push_back(field<double>("curriculum", "prior_mu_mean", ACC(curriculum.calibrator.prior_mu_mean)));
    f.push_back(field<double>("curriculum", "prior_mu_sd", ACC(curriculum.calibrator.prior_mu_sd)));
    f.push_back(field<double>("curriculum", "prior_s_mean", ACC(curriculum.calibrator.prior_s_mean)));
    f.push_back(field<double>("curriculum", "prior_s_sd", ACC(curriculum.calibrator.prior_s_sd)));
    f.push_back(field<double>("curriculum", "min_s", ACC(curriculum.calibrator.min_s)));
    f.push_back(field<int>("curriculum", "min_difficulty", ACC(curriculum.calibrator.min_difficulty)));
    f.push_back(field<int>("curriculum", "max_difficulty", ACC(curriculum.calibrator.max_difficulty)));
    f.push_back(field<Z>("curriculum", "iterations", ACC(curriculum.iterations)));
    f.push_back(field<Z>("curriculum", "group", ACC(curriculum.group)));
    f.push_back(field<std::vector<double>>("curriculum", "env_mu", ACC(curriculum.env_mu)));
    f.push_back(field<std::vector<double>>("curriculum", "env_s", ACC(curriculum.env_s)));

    f.push_back(field<std::vector<Z>>("dataprep", "budgets", ACC(dataprep.budgets)));
    f.push_back(field<Z>("dataprep", "window", ACC(dataprep.window)));
    f.push_back(field<Z>("dataprep", "delimiter_tokens", ACC(dataprep.delimiter_tokens)));

    f.push_back(field<double>("sizing", "G", ACC(sizing.workload.batch)));
    f.push_back(field<double>("sizing", "s", ACC(sizing.workload.seq_len)));
    f.push_back(field<double>("sizing", "b", ACC(sizing.workload.bytes_per_token)));
    f.push_back(field<double>("sizing", "P", ACC(sizing.workload.page_size)));
    f.push_back(field<double>("sizing", "t", ACC(sizing.workload.iteration_s)));
    f.push_back(field<double>("sizing", "Imax", ACC(sizing.workload.iops_max)));
    f.push_back(field<double>("sizing", "sigma", ACC(sizing.workload.scatter)));
    f.push_back(field<double>("sizing", "m", ACC(sizing.extra_faults)));

    f.push_back(field<S>("output", "report", ACC(output.report)));
    f.push_back(field<S>("output", "traces", ACC(output.traces)));
    return f;
  }();
  return fields;
}

#undef ACC

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : schema())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

bool is_section(std::string_view name) {
  for (const auto& f : schema())
    if (!f.section.empty() && f.section == name) return true;
  return false;
}

std::pair<std::string_view, std::string_view> split_key(std::string_view dotted) {
  auto dot = dotted.find('.');
  if (dot == std::string_view::npos) return {{}, dotted};
  return {dotted.substr(0, dot), dotted.substr(dot + 1)};
}

}  // namespace

LengthRewardParams RlConfig::length_params(double best_pass_rate) const {
  LengthRewardParams p;
  p.max_length = max_length;
  p.tolerance = length_tolerance;
  p.acc_tolerance = acc_tolerance;
  p.best_pass_rate = best_pass_rate;
  p.scale = length_scale;
  return p;
}

RsaConfig RunConfig::effective_rsa() const {
  RsaConfig r = rsa;
  r.seed = seed;
  return r;
}

void RunConfig::validate() const {
  auto scoped = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  if (seed > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw ConfigError("seed must be < 2^63");
  if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
  scoped("rsa", [&] { effective_rsa().validate(); });
  scoped("backend", [&] {
    const auto& b = backend;
    if (b.kind != "echo" && b.kind != "oracle" && b.kind != "replay" && b.kind != "http")
      throw ConfigError("kind must be one of echo, oracle, replay, http; got '" + b.kind + "'");
    if (!(b.http.timeout_s > 0)) throw ConfigError("timeout_s must be > 0");
    if (!(b.http.backoff_base_s >= 0 && b.http.backoff_max_s >= 0))
      throw ConfigError("backoff delays must be >= 0");
    if (b.oracle_accuracy.empty()) throw ConfigError("oracle_accuracy must be non-empty");
    for (double p : b.oracle_accuracy)
      if (!(p >= 0 && p <= 1)) throw ConfigError("oracle_accuracy entries must be in [0, 1]");
    if (b.kind == "replay" && b.replay_path.empty())
      throw ConfigError("replay_path is required when kind = \"replay\"");
  });
  scoped("guard", [&] { guard.validate(); });
  scoped("rl", [&] {
    rl.length_params(0).validate();
    if (!(rl.tv_delta >= 0)) throw ConfigError("tv_delta must be >= 0");
    if (rl.microbatch_budget < 1) throw ConfigError("microbatch_budget must be >= 1");
    if (rl.ranks < 1) throw ConfigError("ranks must be >= 1");
  });
  scoped("curriculum", [&] {
    curriculum.calibrator.validate();
    if (curriculum.group < 1) throw ConfigError("group must be >= 1");
    if (curriculum.env_mu.empty() || curriculum.env_mu.size() != curriculum.env_s.size())
      throw ConfigError("env_mu and env_s must be non-empty and of equal length");
    for (double s : curriculum.env_s)
      if (!(s > 0)) throw ConfigError("env_s entries must be > 0");
  });
  scoped("dataprep", [&] {
    if (dataprep.budgets.empty()) throw ConfigError("budgets must be non-empty");
    for (std::size_t i = 0; i < dataprep.budgets.size(); ++i) {
      if (dataprep.budgets[i] < 1) throw ConfigError("budgets must be >= 1");
      if (i && dataprep.budgets[i] < dataprep.budgets[i - 1])
        throw ConfigError("budgets must be ascending");
    }
    if (dataprep.window < 1) throw ConfigError("window must be >= 1");
  });
  scoped("sizing", [&] {
    sizing.workload.validate();
    if (!(sizing.extra_faults >= 0)) throw ConfigError("m must be >= 0");
  });
}

EnvLookup process_env() {
  return [](std::string_view name) -> std::optional<std::string> {
    if (const char* v = std::getenv(std::string(name).c_str())) return std::string(v);
    return std::nullopt;
  };
}

void apply_env(RunConfig& config, const EnvLookup& env) {
  if (!env) return;
  if (auto v = env("MRSA_ENDPOINT")) config.backend.http.url = *v;
  if (auto v = env("MRSA_API_KEY")) config.backend.http.api_key = *v;
  if (auto v = env("MRSA_MODEL")) config.backend.http.model = *v;
}

RunConfig parse_config(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  RunConfig c;
  // A preset sets beta/tau/final_budget before the explicit rsa keys.
  if (auto* rsa = root["rsa"].as_table())
    if (auto* p = rsa->get("preset"))
      apply_preset(c.rsa, parse_preset(Conv<std::string>::from_node(*p, "rsa.preset")));

  for (auto&& [k, v] : root) {
    const std::string name(k.str());
    if (const auto* tbl = v.as_table()) {
      if (!is_section(name)) throw ConfigError("unknown config section [" + name + "]");
      for (auto&& [k2, v2] : *tbl) {
        const std::string key(k2.str());
        const std::string dotted = name + "." + key;
        if (dotted == "rsa.preset") continue;
        const Field* f = find_field(name, key);
        if (!f) throw ConfigError("unknown config key '" + dotted + "'");
        f->from_node(c, v2, dotted);
      }
      continue;
    }
    const Field* f = find_field("", name);
    if (!f) throw ConfigError("unknown config key '" + name + "'");
    f->from_node(c, v, name);
  }
  return c;
}

RunConfig load_config(const std::string& path, const EnvLookup& env) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    c = parse_config(buf.str(), path);
  }
  apply_env(c, env);
  c.validate();
  return c;
}

void set_config_value(RunConfig& config, std::string_view dotted_key, std::string_view value) {
  auto [section, key] = split_key(dotted_key);
  if (dotted_key == "rsa.preset") {
    apply_preset(config.rsa, parse_preset(value));
    return;
  }
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("unknown config key '" + std::string(dotted_key) + "'");
  f->from_text(config, value, std::string(dotted_key));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.push_back(f.dotted());
  return out;
}

std::string to_toml(const RunConfig& config) {
  toml::table root;
  for (const auto& f : schema()) {
    if (f.section.empty()) {
      f.write(config, root);
      continue;
    }
    if (!root.contains(f.section)) {
      root.insert(f.section, toml::table{});
    }
    f.write(config, *root[f.section].as_table());
  }
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

}  // namespace mrsa
