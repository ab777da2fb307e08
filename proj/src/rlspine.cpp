// SPDX-License-Identifier: Apache-2.0

#include "mrsa/rlspine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mrsa {

namespace {

void check_group(std::span<const double> rewards) {
  if (rewards.size() < 2)
    throw DegenerateGroup("a group needs at least 2 rollouts, got " +
                          std::to_string(rewards.size()));
  for (double r : rewards)
    if (!std::isfinite(r)) throw DegenerateGroup("non-finite reward");
}

long double mean_of(std::span<const double> v) {
  long double s = 0;
  for (double x : v) s += x;
  return s / static_cast<long double>(v.size());
}

bool all_equal(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Centered deviations whose sum is zeroed in extended precision.
std::vector<long double> centered(std::span<const double> numer, long double mean) {
  std::vector<long double> d(numer.size());
  long double drift = 0;
  for (std::size_t i = 0; i < numer.size(); ++i) {
    d[i] = static_cast<long double>(numer[i]) - mean;
    drift += d[i];
  }
  drift /= static_cast<long double>(d.size());
  for (auto& x : d) x -= drift;
  return d;
}

}  // namespace

AdvantageResult maxrl_advantage(std::span<const double> rewards) {
  check_group(rewards);
  const long double mean = mean_of(rewards);
  if (mean == 0) throw DegenerateGroup("mean reward is 0; the group carries no signal");
  AdvantageResult out;
  out.informative = !all_equal(rewards);
  out.advantages.resize(rewards.size(), 0.0);
  if (!out.informative) return out;
  auto d = centered(rewards, mean);
  for (std::size_t i = 0; i < d.size(); ++i)
    out.advantages[i] = static_cast<double>(d[i] / mean);
  return out;
}

AdvantageResult grpo_advantage(std::span<const double> rewards) {
  check_group(rewards);
  const long double mean = mean_of(rewards);
  long double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<long double>(rewards.size());
  const long double sd = std::sqrt(var);
  if (all_equal(rewards) || sd == 0)
    throw DegenerateGroup("reward standard deviation is 0");
  AdvantageResult out;
  for (auto d : centered(rewards, mean)) out.advantages.push_back(static_cast<double>(d / sd));
  return out;
}

void LengthRewardParams::validate() const {
  if (!(max_length > 0)) throw ConfigError("length reward: max_length must be > 0");
  if (!(acc_tolerance >= 0 && acc_tolerance <= 1))
    throw ConfigError("length reward: acc_tolerance must be in [0, 1]");
  if (!(scale >= 0)) throw ConfigError("length reward: scale must be >= 0");
  if (!(tolerance >= 0)) throw ConfigError("length reward: tolerance must be >= 0");
}

std::vector<double> length_reward(std::span<const double> rewards,
                                  std::span<const double> lengths,
                                  const LengthRewardParams& params) {
  params.validate();
  if (rewards.empty()) throw DegenerateGroup("empty group");
  for (double r : rewards)
    if (!std::isfinite(r)) throw DegenerateGroup("non-finite reward");
  if (lengths.size() != rewards.size())
    throw ConfigError("length reward: " + std::to_string(lengths.size()) +
                      " lengths for " + std::to_string(rewards.size()) + " rewards");
  for (double l : lengths)
    if (!(l >= 1)) throw ConfigError("length reward: lengths must be >= 1");

  const std::size_t g = rewards.size();
  std::vector<double> out(g, 0.0);
  std::size_t k = 0;
  double l_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g; ++i)
    if (rewards[i] == 1.0) {
      ++k;
      l_min = std::min(l_min, lengths[i]);
    }
  if (k == 0) return out;

  const double p = static_cast<double>(k) / static_cast<double>(g);
  const bool group_gate = p > params.best_pass_rate - params.acc_tolerance &&
                          p > 1.0 / static_cast<double>(g);
  if (!group_gate) return out;

  const double span = params.max_length - l_min;
  for (std::size_t i = 0; i < g; ++i) {
    if (rewards[i] != 1.0) continue;
    double lambda;
    if (lengths[i] <= l_min + params.tolerance) {
      lambda = 0.5;
    } else {
      const double frac = span > 0 ? (lengths[i] - l_min) / span : 1.0;
      lambda = 0.5 - std::clamp(frac, 0.0, 1.0);
    }
    out[i] = params.scale * p * lambda;
  }
  return out;
}

double update_best_pass_rate(double best, double pass_rate) {
  return std::max(best, pass_rate);
}

AdvantageResult combined_advantage(std::span<const double> rewards,
                                   std::span<const double> bonus) {
  check_group(rewards);
  if (bonus.size() != rewards.size())
    throw ConfigError("combined advantage: bonus and reward sizes differ");
  const long double mean = mean_of(rewards);
  if (mean == 0) throw DegenerateGroup("mean reward is 0; the group carries no signal");
  AdvantageResult out;
  bool any = false;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const long double a =
        (static_cast<long double>(rewards[i]) + bonus[i] - mean) / mean;
    out.advantages.push_back(static_cast<double>(a));
    any |= a != 0;
  }
  out.informative = any;
  return out;
}

double smtsn_loss(const std::vector<std::vector<double>>& token_losses) {
  if (token_losses.empty()) throw ConfigError("smtsn loss needs at least one rollout");
  long double total = 0;
  for (const auto& r : token_losses)
    for (double x : r) total += x;
  return static_cast<double>(total / static_cast<long double>(token_losses.size()));
}

double token_mean_loss(const std::vector<std::vector<double>>& token_losses) {
  long double total = 0;
  std::size_t n = 0;
  for (const auto& r : token_losses) {
    for (double x : r) total += x;
    n += r.size();
  }
  if (n == 0) throw ConfigError("token mean of zero tokens");
  return static_cast<double>(total / static_cast<long double>(n));
}

std::vector<bool> binary_tv_mask(std::span<const double> divergence, double delta) {
  std::vector<bool> keep(divergence.size());
  for (std::size_t i = 0; i < divergence.size(); ++i) keep[i] = divergence[i] <= delta;
  return keep;
}

std::vector<double> tv_proxy(std::span<const double> ratios) {
  std::vector<double> out;
  out.reserve(ratios.size());
  for (double r : ratios) out.push_back(0.5 * std::abs(r - 1.0));
  return out;
}

double k1_sequence_adjustment(std::span<const double> log_ratios, double reward,
                              double beta_kl) {
  long double s = 0;
  for (double l : log_ratios) s += l;
  return static_cast<double>(reward - beta_kl * s);
}

std::vector<double> chunk_local_adjustment(std::span<const LogRatioChunk> chunks,
                                           double reward, double beta_kl,
                                           bool rescale) {
  std::vector<double> out;
  for (const auto& c : chunks) {
    long double s = 0;
    for (double l : c.log_ratios) s += l;
    const long double g = rescale ? std::max(1.0L, static_cast<long double>(c.lag)) : 1.0L;
    out.push_back(static_cast<double>(reward - beta_kl * s / g));
  }
  return out;
}

std::vector<double> router_bias_gradient(std::span<const double> load) {
  if (load.empty()) throw InvalidDistribution("empty load vector");
  long double sum = 0;
  for (double p : load) {
    if (!(p >= 0)) throw InvalidDistribution("negative or NaN load fraction");
    sum += p;
  }
  if (std::abs(static_cast<double>(sum) - 1.0) > 1e-9)
    throw InvalidDistribution("load fractions sum to " +
                              std::to_string(static_cast<double>(sum)) + ", not 1");
  const double uniform = 1.0 / static_cast<double>(load.size());
  std::vector<double> g;
  for (double p : load) g.push_back(p - uniform);
  return g;
}

namespace {

// Moves or swaps single rollouts between the heaviest and lightest rank while
// that narrows their gap.
void rebalance(std::vector<std::vector<std::size_t>>& ranks,
               std::vector<std::size_t>& totals, std::span<const std::size_t> lengths) {
  for (int iter = 0; iter < 10000; ++iter) {
    auto hi = static_cast<std::size_t>(std::max_element(totals.begin(), totals.end()) - totals.begin());
    auto lo = static_cast<std::size_t>(std::min_element(totals.begin(), totals.end()) - totals.begin());
    const std::size_t gap = totals[hi] - totals[lo];
    if (gap == 0) return;
    // best change of the heavy rank's load: move item a (delta = a) or swap
    // a with lighter b (delta = a - b); the new gap is |gap - 2 delta|.
    std::size_t best_gap = gap;
    std::ptrdiff_t best_a = -1, best_b = -1;
    auto consider = [&](std::size_t delta, std::ptrdiff_t a, std::ptrdiff_t b) {
      if (delta == 0 || delta >= gap) return;
      const std::size_t ng = 2 * delta > gap ? 2 * delta - gap : gap - 2 * delta;
      if (ng < best_gap) {
        best_gap = ng;
        best_a = a;
        best_b = b;
      }
    };
    for (std::size_t ia = 0; ia < ranks[hi].size(); ++ia) {
      const std::size_t a = lengths[ranks[hi][ia]];
      consider(a, static_cast<std::ptrdiff_t>(ia), -1);
      for (std::size_t ib = 0; ib < ranks[lo].size(); ++ib) {
        const std::size_t b = lengths[ranks[lo][ib]];
        if (a > b) consider(a - b, static_cast<std::ptrdiff_t>(ia), static_cast<std::ptrdiff_t>(ib));
      }
    }
    if (best_a < 0) return;
    const std::size_t item_a = ranks[hi][best_a];
    ranks[hi].erase(ranks[hi].begin() + best_a);
    totals[hi] -= lengths[item_a];
    if (best_b >= 0) {
      const std::size_t item_b = ranks[lo][best_b];
      ranks[lo].erase(ranks[lo].begin() + best_b);
      totals[lo] -= lengths[item_b];
      ranks[hi].push_back(item_b);
      totals[hi] += lengths[item_b];
    }
    ranks[lo].push_back(item_a);
    totals[lo] += lengths[item_a];
  }
}

}  // namespace

std::vector<RankPlan> pack_microbatches(std::span<const std::size_t> lengths,
                                        std::size_t budget, std::size_t ranks) {
  if (ranks < 1) throw ConfigError("pack_microbatches needs at least one rank");
  if (budget < 1) throw ConfigError("microbatch budget must be >= 1");
  for (std::size_t i = 0; i < lengths.size(); ++i)
    if (lengths[i] > budget)
      throw OversizedRollout("rollout " + std::to_string(i) + " has " +
                             std::to_string(lengths[i]) + " tokens, budget is " +
                             std::to_string(budget));

  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });

  std::vector<std::vector<std::size_t>> assigned(ranks);
  std::vector<std::size_t> totals(ranks, 0);
  for (auto i : order) {
    auto r = static_cast<std::size_t>(std::min_element(totals.begin(), totals.end()) - totals.begin());
    assigned[r].push_back(i);
    totals[r] += lengths[i];
  }
  rebalance(assigned, totals, lengths);

  std::vector<RankPlan> plan(ranks);
  for (std::size_t r = 0; r < ranks; ++r) {
    auto items = assigned[r];
    std::stable_sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) {
      return lengths[a] != lengths[b] ? lengths[a] > lengths[b] : a < b;
    });
    auto& mbs = plan[r].microbatches;
    for (auto i : items) {
      auto fit = std::find_if(mbs.begin(), mbs.end(), [&](const Microbatch& m) {
        return m.tokens + lengths[i] <= budget;
      });
      if (fit == mbs.end()) fit = mbs.insert(mbs.end(), Microbatch{});
      fit->items.push_back(i);
      fit->tokens += lengths[i];
    }
    plan[r].tokens = totals[r];
  }
  return plan;
}

double rank_imbalance(const std::vector<RankPlan>& plan) {
  if (plan.empty()) return 1.0;
  std::size_t hi = 0, lo = std::numeric_limits<std::size_t>::max();
  for (const auto& r : plan) {
    hi = std::max(hi, r.tokens);
    lo = std::min(lo, r.tokens);
  }
  if (hi == 0) return 1.0;
  if (lo == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(hi) / static_cast<double>(lo);
}

}  // namespace mrsa
