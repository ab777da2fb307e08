// SPDX-License-Identifier: Apache-2.0
//
// Adaptive difficulty: the +1/-1 difficulty rule, a Thompson-sampling
// calibrator over logistic pass-rate curves sigma(-(d - mu)/s), and a
// synthetic environment to drive it in tests.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mrsa/error.hpp"
#include "mrsa/rng.hpp"

namespace mrsa {

// 1 iff |predicted - target| < tolerance.
int verify_reward(double target, double predicted, double tolerance);

struct DifficultyStep {
  int delta = 0;
  int difficulty = 0;
};

// +1 when the group passed above 0.7 at the current difficulty, -1 when it
// solved nothing (at any difficulty), else 0.
DifficultyStep difficulty_update(double mean_reward, int difficulty, int group_difficulty);

struct SchedulerState {
  int difficulty = 0;
  int min_difficulty = 0;
  int max_difficulty = 100;
  std::size_t samples = 0;

  // Applies difficulty_update and clamps to the declared range.
  DifficultyStep observe(double mean_reward, int group_difficulty);
};

// Stable log sigma(x).
double log_sigmoid(double x);
double sigmoid(double x);

// sigma(-(d - mu) / s)
double logistic_pass_rate(double d, double mu, double s);

struct LogisticCandidate {
  double mu = 0;
  double s = 1;
};

struct CalibratorConfig {
  std::size_t pool_size = 64;  // M
  double p_target = 0.5;
  double epsilon = 0.1;        // exploration probability
  double explore_low = 0.25;
  double explore_high = 0.75;
  double recency = 0.9;        // history decay per observation
  double ess_fraction = 0.5;   // resample when ESS < fraction * M
  double prior_mu_mean = 40, prior_mu_sd = 15;
  double prior_s_mean = 5, prior_s_sd = 2;
  double min_s = 0.05;
  int min_difficulty = 0;
  int max_difficulty = 100;

  void validate() const;  // throws ConfigError
  bool operator==(const CalibratorConfig&) const = default;
};

struct Outcome {
  double successes = 0;
  double failures = 0;
};

struct CalibratorState {
  CalibratorConfig config;
  std::vector<LogisticCandidate> pool;
  std::vector<double> weights;    // normalized
  std::map<int, Outcome> history;  // recency-weighted, per difficulty
  std::size_t resamples = 0;

  double ess() const;
  double ess_threshold() const;
};

// Pool drawn from the Gaussian prior; weights uniform.
CalibratorState make_calibrator(const CalibratorConfig& config, SplitMix64& rng);

// Explicit pool with uniform weights.
CalibratorState make_calibrator(const CalibratorConfig& config,
                                std::vector<LogisticCandidate> pool);

struct ThompsonDraw {
  int difficulty = 0;
  std::size_t candidate = 0;
  double p_target = 0.5;
  double raw_difficulty = 0;  // before rounding and clamping
  bool explored = false;
};

// d = mu_j + s_j ln((1 - p) / p), rounded half-to-even and clamped to the
// difficulty range.
ThompsonDraw thompson_sample_difficulty(const CalibratorState& state, SplitMix64& rng);

// Multiplies weights by Binomial(k; G, pass rate at d) in log space and
// renormalizes; records the outcome in the decayed history.
void posterior_update(CalibratorState& state, int difficulty, std::size_t successes,
                      std::size_t group);

// Resamples the pool proportionally to weight when ESS is below threshold.
// Returns true when it resampled.
bool ess_resample(CalibratorState& state, SplitMix64& rng);

// weight 1 / (1 + count), normalized.
std::vector<double> env_weights(std::span<const std::size_t> counts);
std::size_t weighted_env_sampler(std::span<const std::size_t> counts, SplitMix64& rng);

struct SyntheticEnv {
  double mu = 37;
  double s = 4;
  double tolerance = 1e-6;

  double pass_rate(double d) const { return logistic_pass_rate(d, mu, s); }
};

struct TrajectoryPoint {
  std::size_t iteration = 0;
  int difficulty = 0;
  std::size_t candidate = 0;
  double p_target = 0.5;
  std::size_t successes = 0;
  double pass_rate = 0;  // successes / G
  double ess = 0;
  double weight_sum = 1;
  bool resampled = false;
};

// One draw, one simulated group of G, one posterior update, then resampling
// if ESS dropped below threshold.
TrajectoryPoint calibration_step(const SyntheticEnv& env, CalibratorState& state,
                                 std::size_t group, SplitMix64& rng);

std::vector<TrajectoryPoint> simulate_calibration(const SyntheticEnv& env,
                                                  CalibratorState& state,
                                                  std::size_t iterations,
                                                  std::size_t group, SplitMix64& rng);

}  // namespace mrsa
