// SPDX-License-Identifier: Apache-2.0

#include "mrsa/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace mrsa {

int verify_reward(double target, double predicted, double tolerance) {
  if (!(tolerance >= 0)) throw ConfigError("verification tolerance must be >= 0");
  return std::abs(predicted - target) < tolerance ? 1 : 0;
}

DifficultyStep difficulty_update(double mean_reward, int difficulty, int group_difficulty) {
  if (!(mean_reward >= 0 && mean_reward <= 1))
    throw ConfigError("mean reward must be in [0, 1]");
  DifficultyStep s;
  if (mean_reward > 0.7 && group_difficulty == difficulty) s.delta = 1;
  else if (mean_reward == 0) s.delta = -1;
  s.difficulty = difficulty + s.delta;
  return s;
}

DifficultyStep SchedulerState::observe(double mean_reward, int group_difficulty) {
  auto s = difficulty_update(mean_reward, difficulty, group_difficulty);
  s.difficulty = std::clamp(s.difficulty, min_difficulty, max_difficulty);
  s.delta = s.difficulty - difficulty;
  difficulty = s.difficulty;
  ++samples;
  return s;
}

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logistic_pass_rate(double d, double mu, double s) { return sigmoid(-(d - mu) / s); }

void CalibratorConfig::validate() const {
  if (pool_size < 1) throw ConfigError("calibrator pool_size must be >= 1");
  if (!(p_target > 0 && p_target < 1)) throw ConfigError("p_target must be in (0, 1)");
  if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("epsilon must be in [0, 1]");
  if (!(explore_low > 0 && explore_low <= explore_high && explore_high < 1))
    throw ConfigError("exploration range must satisfy 0 < low <= high < 1");
  if (!(recency > 0 && recency <= 1)) throw ConfigError("recency must be in (0, 1]");
  if (!(ess_fraction > 0 && ess_fraction <= 1))
    throw ConfigError("ess_fraction must be in (0, 1]");
  if (!(prior_mu_sd >= 0 && prior_s_sd >= 0)) throw ConfigError("prior sds must be >= 0");
  if (!(min_s > 0)) throw ConfigError("min_s must be > 0");
  if (min_difficulty > max_difficulty)
    throw ConfigError("min_difficulty must not exceed max_difficulty");
}

double CalibratorState::ess() const {
  long double sq = 0;
  for (double w : weights) sq += static_cast<long double>(w) * w;
  return sq > 0 ? static_cast<double>(1.0L / sq) : 0.0;
}

double CalibratorState::ess_threshold() const {
  return config.ess_fraction * static_cast<double>(pool.size());
}

CalibratorState make_calibrator(const CalibratorConfig& config,
                                std::vector<LogisticCandidate> pool) {
  config.validate();
  if (pool.empty()) throw InvalidPool("calibrator pool is empty");
  for (const auto& c : pool)
    if (!(c.s > 0)) throw InvalidPool("candidate scale s must be > 0");
  CalibratorState st;
  st.config = config;
  st.weights.assign(pool.size(), 1.0 / static_cast<double>(pool.size()));
  st.pool = std::move(pool);
  return st;
}

CalibratorState make_calibrator(const CalibratorConfig& config, SplitMix64& rng) {
  config.validate();
  std::normal_distribution<double> mu(config.prior_mu_mean, config.prior_mu_sd);
  std::normal_distribution<double> s(config.prior_s_mean, config.prior_s_sd);
  std::vector<LogisticCandidate> pool(config.pool_size);
  for (auto& c : pool) {
    c.mu = config.prior_mu_sd > 0 ? mu(rng) : config.prior_mu_mean;
    c.s = std::max(config.min_s, config.prior_s_sd > 0 ? s(rng) : config.prior_s_mean);
  }
  return make_calibrator(config, std::move(pool));
}

namespace {

std::size_t categorical(std::span<const double> w, SplitMix64& rng) {
  long double total = 0;
  for (double x : w) total += x;
  if (!(total > 0)) throw InvalidPool("all calibrator weights are zero");
  const long double u = static_cast<long double>(rng.uniform()) * total;
  long double acc = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  // rounding left u at the very top: last positive weight
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0) return i;
  return w.size() - 1;
}

}  // namespace

ThompsonDraw thompson_sample_difficulty(const CalibratorState& state, SplitMix64& rng) {
  if (state.pool.empty()) throw InvalidPool("calibrator pool is empty");
  ThompsonDraw d;
  d.candidate = categorical(state.weights, rng);
  d.p_target = state.config.p_target;
  if (state.config.epsilon > 0 && rng.uniform() < state.config.epsilon) {
    d.explored = true;
    d.p_target = state.config.explore_low +
                 (state.config.explore_high - state.config.explore_low) * rng.uniform();
  }
  const auto& c = state.pool[d.candidate];
  d.raw_difficulty = c.mu + c.s * std::log((1 - d.p_target) / d.p_target);
  const double lo = state.config.min_difficulty, hi = state.config.max_difficulty;
  d.difficulty = static_cast<int>(std::clamp(std::nearbyint(d.raw_difficulty), lo, hi));
  return d;
}

void posterior_update(CalibratorState& state, int difficulty, std::size_t successes,
                      std::size_t group) {
  if (successes > group) throw ConfigError("successes exceed group size");
  if (state.pool.empty()) throw InvalidPool("calibrator pool is empty");
  const double k = static_cast<double>(successes), n = static_cast<double>(group);
  const double log_choose = std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
  std::vector<double> lw(state.pool.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < lw.size(); ++j) {
    const auto& c = state.pool[j];
    const double z = -(difficulty - c.mu) / c.s;
    const double ll = log_choose + k * log_sigmoid(z) + (n - k) * log_sigmoid(-z);
    lw[j] = state.weights[j] > 0 ? std::log(state.weights[j]) + ll
                                 : -std::numeric_limits<double>::infinity();
    top = std::max(top, lw[j]);
  }
  if (std::isfinite(top)) {
    long double sum = 0;
    for (double x : lw) sum += std::exp(static_cast<long double>(x - top));
    const double log_norm = top + static_cast<double>(std::log(sum));
    for (std::size_t j = 0; j < lw.size(); ++j) state.weights[j] = std::exp(lw[j] - log_norm);
    // absorb the last ulps so the sum is 1 to within double rounding
    long double total = 0;
    for (double w : state.weights) total += w;
    for (double& w : state.weights) w = static_cast<double>(w / total);
  }

  for (auto& [d, o] : state.history) {
    o.successes *= state.config.recency;
    o.failures *= state.config.recency;
  }
  auto& o = state.history[difficulty];
  o.successes += k;
  o.failures += n - k;
}

bool ess_resample(CalibratorState& state, SplitMix64& rng) {
  if (state.ess() >= state.ess_threshold()) return false;
  const std::size_t m = state.pool.size();
  std::vector<LogisticCandidate> next;
  next.reserve(m);
  for (std::size_t i = 0; i < m; ++i) next.push_back(state.pool[categorical(state.weights, rng)]);
  state.pool = std::move(next);
  state.weights.assign(m, 1.0 / static_cast<double>(m));
  ++state.resamples;
  return true;
}

std::vector<double> env_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ConfigError("need at least one environment");
  std::vector<double> w;
  long double total = 0;
  for (auto c : counts) {
    w.push_back(1.0 / (1.0 + static_cast<double>(c)));
    total += w.back();
  }
  for (double& x : w) x = static_cast<double>(x / total);
  return w;
}

std::size_t weighted_env_sampler(std::span<const std::size_t> counts, SplitMix64& rng) {
  return categorical(env_weights(counts), rng);
}

TrajectoryPoint calibration_step(const SyntheticEnv& env, CalibratorState& state,
                                 std::size_t group, SplitMix64& rng) {
  if (!(env.s > 0)) throw ConfigError("synthetic env needs s > 0");
  if (group < 1) throw ConfigError("group size must be >= 1");
  auto draw = thompson_sample_difficulty(state, rng);
  const double p = env.pass_rate(draw.difficulty);
  std::size_t k = 0;
  for (std::size_t g = 0; g < group; ++g) k += rng.uniform() < p;
  posterior_update(state, draw.difficulty, k, group);
  TrajectoryPoint pt;
  pt.difficulty = draw.difficulty;
  pt.candidate = draw.candidate;
  pt.p_target = draw.p_target;
  pt.successes = k;
  pt.pass_rate = static_cast<double>(k) / static_cast<double>(group);
  pt.resampled = ess_resample(state, rng);
  pt.ess = state.ess();
  long double ws = 0;
  for (double w : state.weights) ws += w;
  pt.weight_sum = static_cast<double>(ws);
  return pt;
}

std::vector<TrajectoryPoint> simulate_calibration(const SyntheticEnv& env,
                                                  CalibratorState& state,
                                                  std::size_t iterations,
                                                  std::size_t group, SplitMix64& rng) {
  std::vector<TrajectoryPoint> out;
  out.reserve(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    out.push_back(calibration_step(env, state, group, rng));
    out.back().iteration = it;
  }
  return out;
}

}  // namespace mrsa
