// SPDX-License-Identifier: Apache-2.0
//
// TOML run configuration. Precedence, lowest first: built-in defaults, the
// config file, environment variables, command-line flags. The schema is
// listed in docs/config.md.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrsa/core.hpp"
#include "mrsa/curriculum.hpp"
#include "mrsa/guards.hpp"
#include "mrsa/http_backend.hpp"
#include "mrsa/rlspine.hpp"
#include "mrsa/sizing.hpp"

namespace mrsa {

enum class Preset { Default16k4k, Capability40k4k };

// 16K/4K: beta 16384, tau 4096. 40K/4K: beta 40960, tau 4096. Both decode
// the final round with 40960 tokens.
RsaConfig rsa_preset(Preset p);

struct BackendConfig {
  std::string kind = "echo";  // echo | oracle | replay | http
  HttpEndpoint http;
  std::size_t echo_length = 64;
  std::vector<double> oracle_accuracy = {0.3, 0.6};
  std::size_t oracle_reasoning_length = 32;
  std::string replay_path;

  bool operator==(const BackendConfig&) const = default;
};

struct RlConfig {
  double beta_kl = 1.0;
  double tv_delta = kDefaultTvDelta;
  double max_length = 81920;
  double length_tolerance = 256;
  double acc_tolerance = 0.1;
  double length_scale = 1.0;
  std::size_t microbatch_budget = kMicrobatchBudget;
  std::size_t ranks = 8;

  LengthRewardParams length_params(double best_pass_rate) const;
  bool operator==(const RlConfig&) const = default;
};

struct CurriculumConfig {
  CalibratorConfig calibrator;
  std::size_t iterations = 200;
  std::size_t group = 16;
  std::vector<double> env_mu = {37};  // one synthetic environment per entry
  std::vector<double> env_s = {4};

  bool operator==(const CurriculumConfig&) const = default;
};

struct DataprepConfig {
  std::vector<std::size_t> budgets = {4096, 32768, 131072};
  std::size_t window = 131072;
  std::size_t delimiter_tokens = 0;

  bool operator==(const DataprepConfig&) const = default;
};

struct SizingConfig {
  IoWorkload workload;
  double extra_faults = 0;  // m; when > 0 the scatter factor is estimated

  bool operator==(const SizingConfig&) const = default;
};

struct OutputConfig {
  std::string report = "report.json";
  std::string traces;  // per-trace JSONL dump, off when empty

  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t concurrency = 8;
  RsaConfig rsa;
  BackendConfig backend;
  GuardConfig guard;
  RlConfig rl;
  CurriculumConfig curriculum;
  DataprepConfig dataprep;
  SizingConfig sizing;
  OutputConfig output;

  // rsa.seed follows the global seed.
  RsaConfig effective_rsa() const;
  // Throws ConfigError naming the offending key or invariant.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

using EnvLookup = std::function<std::optional<std::string>(std::string_view)>;

// Reads the process environment.
EnvLookup process_env();

// Environment overrides: MRSA_ENDPOINT, MRSA_API_KEY, MRSA_MODEL.
void apply_env(RunConfig& config, const EnvLookup& env);

// Parses TOML text; unknown sections or keys are rejected.
RunConfig parse_config(std::string_view toml_text, const std::string& source = "<string>");

// Loads a file (empty path: defaults only), then applies the environment and
// validates.
RunConfig load_config(const std::string& path, const EnvLookup& env = process_env());

// Sets one dotted key ("rsa.N", "backend.url", "seed") from text, as a flag
// would. Throws ConfigError on unknown keys or bad values.
void set_config_value(RunConfig& config, std::string_view dotted_key, std::string_view value);

// Every key, in schema order.
std::vector<std::string> config_keys();

// Canonical TOML; parse_config(to_toml(c)) == c.
std::string to_toml(const RunConfig& config);

}  // namespace mrsa
