// SPDX-License-Identifier: Apache-2.0
//
// Numeric kernels for group-relative RL with verifiable rewards. All pure.

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mrsa/error.hpp"

namespace mrsa {

struct AdvantageResult {
  std::vector<double> advantages;
  bool informative = true;  // false when every reward is equal
};

// (r_i - mean) / mean. Throws DegenerateGroup when the mean is 0.
AdvantageResult maxrl_advantage(std::span<const double> rewards);

// (r_i - mean) / std with the population std. Throws DegenerateGroup on
// zero spread.
AdvantageResult grpo_advantage(std::span<const double> rewards);

struct LengthRewardParams {
  double max_length = 81920;   // l_max
  double tolerance = 256;      // T_l, tokens
  double acc_tolerance = 0.1;  // T_acc
  double best_pass_rate = 0;   // p*, running max solve rate of the source
  double scale = 1.0;          // c

  void validate() const;  // throws ConfigError
};

// Group-relative, difficulty-scaled length bonus. Zero for incorrect
// rollouts and for groups with fewer than two correct rollouts.
std::vector<double> length_reward(std::span<const double> rewards,
                                  std::span<const double> lengths,
                                  const LengthRewardParams& params);

// Running max of the pass rate per source.
double update_best_pass_rate(double best, double pass_rate);

// (r_i + dr_i - mean(r)) / mean(r): the bonus enters the numerator only.
AdvantageResult combined_advantage(std::span<const double> rewards,
                                   std::span<const double> bonus);

// Mean over rollouts of each rollout's token-loss sum.
double smtsn_loss(const std::vector<std::vector<double>>& token_losses);

// Flat per-token mean, for contrast with smtsn_loss.
double token_mean_loss(const std::vector<std::vector<double>>& token_losses);

inline constexpr double kDefaultTvDelta = 0.1;

// keep_t = divergence_t <= delta.
std::vector<bool> binary_tv_mask(std::span<const double> divergence,
                                 double delta = kDefaultTvDelta);

// Single-sample proxy 0.5 * |ratio - 1| for a per-token TV estimate. A proxy
// only; callers with a better estimator should pass their own values.
std::vector<double> tv_proxy(std::span<const double> ratios);

// A = r - beta_kl * sum_t l_t.
double k1_sequence_adjustment(std::span<const double> log_ratios, double reward,
                              double beta_kl);

struct LogRatioChunk {
  std::vector<double> log_ratios;
  double lag = 0;  // trainer updates between generator snapshot and now
};

// A_c = A - beta_kl * S_c / g(lag), g = max(1, lag) when rescaling, else 1.
std::vector<double> chunk_local_adjustment(std::span<const LogRatioChunk> chunks,
                                           double reward, double beta_kl,
                                           bool rescale);

// p_e - 1/E for each expert.
std::vector<double> router_bias_gradient(std::span<const double> load);

inline constexpr std::size_t kMicrobatchBudget = 131072;

struct Microbatch {
  std::vector<std::size_t> items;  // indices into the input lengths
  std::size_t tokens = 0;
};

struct RankPlan {
  std::vector<Microbatch> microbatches;
  std::size_t tokens = 0;
};

// Assigns rollouts to ranks (largest first, each to the lightest rank), then
// packs each rank's rollouts into budget-bounded microbatches first-fit
// decreasing. Throws OversizedRollout when a single rollout exceeds budget.
std::vector<RankPlan> pack_microbatches(std::span<const std::size_t> lengths,
                                        std::size_t budget, std::size_t ranks);

// max/min rank token total; infinity when some rank is empty and others not.
double rank_imbalance(const std::vector<RankPlan>& plan);

}  // namespace mrsa
