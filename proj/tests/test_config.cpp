#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "mrsa/config.hpp"
#include "mrsa/rng.hpp"

using namespace mrsa;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars](std::string_view k) -> std::optional<std::string> {
    auto it = vars.find(std::string(k));
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

std::string temp_file(const std::string& name, const std::string& text) {
  auto p = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("empty file gives defaults") {
  auto c = parse_config("");
  CHECK(c == RunConfig{});
  CHECK(c.rsa.population == 16);
  CHECK(c.rsa.candidates == 4);
  CHECK(c.rsa.rounds == 2);
  CHECK(c.rsa.beta == 16384);
  CHECK(c.rsa.tau == 4096);
}

TEST_CASE("file values and presets") {
  auto c = parse_config(R"(
seed = 11
[rsa]
N = 8
C = 2
T = 3
preset = "40k-4k"
compaction = "pacore-hybrid"
[guard]
rare_cutoffs = [0.2, 0.1]
[curriculum]
env_mu = [30.0, 50.0]
env_s = [2.0, 6.0]
)");
  CHECK(c.seed == 11);
  CHECK(c.effective_rsa().seed == 11);
  CHECK(c.rsa.population == 8);
  CHECK(c.rsa.rounds == 3);
  CHECK(c.rsa.beta == rsa_preset(Preset::Capability40k4k).beta);
  CHECK(c.rsa.compaction == Compaction::PacoreHybrid);
  CHECK(c.guard.rare_cutoffs == std::vector<double>{0.2, 0.1});
  CHECK(c.curriculum.env_s == std::vector<double>{2.0, 6.0});
}

TEST_CASE("schema errors name the key") {
  CHECK_THROWS_WITH_AS(parse_config("[rsa]\nNN = 3\n"), doctest::Contains("rsa.NN"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[bogus]\n"), doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[rsa]\nN = \"x\"\n"), doctest::Contains("rsa.N"), ConfigError);
  CHECK_THROWS_AS(parse_config("[rsa\n"), ConfigError);

  auto path = temp_file("mrsa_bad_tau.toml", "[rsa]\nbeta = 100\ntau = 200\n");
  CHECK_THROWS_WITH_AS(load_config(path, env_of({})), doctest::Contains("tau <= beta"), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config("/nonexistent/mrsa.toml", env_of({})), ConfigError);
}

TEST_CASE("environment overrides the file") {
  auto path = temp_file("mrsa_env.toml", "[backend]\nurl = \"http://file:1\"\nmodel = \"f\"\n");
  auto c = load_config(path, env_of({{"MRSA_ENDPOINT", "http://env:2"}, {"MRSA_API_KEY", "k"}}));
  std::filesystem::remove(path);
  CHECK(c.backend.http.url == "http://env:2");
  CHECK(c.backend.http.api_key == "k");
  CHECK(c.backend.http.model == "f");
}

TEST_CASE("dotted overrides") {
  RunConfig c;
  set_config_value(c, "rsa.N", "32");
  set_config_value(c, "rsa.early_stop", "round-consensus");
  set_config_value(c, "guard.rare_cutoffs", "0.3,0.2");
  set_config_value(c, "sizing.sigma", "8");
  set_config_value(c, "seed", "5");
  set_config_value(c, "rsa.preset", "16k-4k");
  CHECK(c.rsa.population == 32);
  CHECK(c.rsa.early_stop == EarlyStop::RoundConsensus);
  CHECK(c.guard.rare_cutoffs == std::vector<double>{0.3, 0.2});
  CHECK(c.sizing.workload.scatter == 8);
  CHECK(c.seed == 5);
  CHECK_THROWS_AS(set_config_value(c, "rsa.nope", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "rsa.N", "-1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "rsa.N", "abc"), ConfigError);
}

TEST_CASE("every key has a default and survives a round trip") {
  RunConfig d;
  CHECK(parse_config(to_toml(d)) == d);
  CHECK(config_keys().size() > 60);

  SplitMix64 g(77);
  for (int trial = 0; trial < 50; ++trial) {
    RunConfig c;
    c.seed = g() >> 1;
    c.concurrency = 1 + g.below(64);
    c.rsa.population = 1 + g.below(64);
    c.rsa.candidates = 1 + g.below(c.rsa.population);
    c.rsa.beta = 1 + g.below(100000);
    c.rsa.tau = 1 + g.below(c.rsa.beta);
    c.rsa.temperature = g.uniform() * 2;
    c.rsa.top_p = 1 - g.uniform() * 0.5;
    c.guard.tau_repeat = 0.001 + g.uniform() * 0.5;
    c.rl.beta_kl = g.uniform() / 3;
    c.curriculum.calibrator.epsilon = g.uniform();
    c.curriculum.env_mu = {g.uniform() * 100, g.uniform() * 100};
    c.curriculum.env_s = {0.1 + g.uniform(), 0.1 + g.uniform()};
    c.sizing.workload.iteration_s = 0.1 + g.uniform() * 10;
    c.backend.http.api_key = trial % 2 ? "k\"ey\\" : "";
    c.output.traces = "t.jsonl";
    c.validate();
    auto back = parse_config(to_toml(c));
    CHECK(back == c);
  }
}

TEST_CASE("validation") {
  RunConfig c;
  c.backend.kind = "carrier-pigeon";
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("backend"), ConfigError);
  c = {};
  c.backend.kind = "replay";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dataprep.budgets = {10, 5};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("ascending"), ConfigError);
  c = {};
  c.seed = ~0ULL;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
