// SPDX-License-Identifier: Apache-2.0

#include "mrsa/guards.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include <zlib.h>

namespace mrsa {

void GuardConfig::validate() const {
  if (chunk_size < 2) throw ConfigError("guard chunk_size must be >= 2");
  if (window_bits < 9 || window_bits > 15)
    throw ConfigError("guard window_bits must be in [9, 15]");
  if (deflate_level < 0 || deflate_level > 9)
    throw ConfigError("guard deflate_level must be in [0, 9]");
  if (mem_level < 1 || mem_level > 9)
    throw ConfigError("guard mem_level must be in [1, 9]");
  if (!(tau_repeat > 0.0 && tau_repeat < 1.0))
    throw ConfigError("guard tau_repeat must be in (0, 1)");
  for (double x : rare_cutoffs)
    if (!(x > 0.0 && x < 1.0)) throw ConfigError("rare cutoffs must be in (0, 1)");
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
}

namespace {

class RawDeflate {
 public:
  explicit RawDeflate(const GuardConfig& c) {
    if (deflateInit2(&s_, c.deflate_level, Z_DEFLATED, -c.window_bits, c.mem_level,
                     Z_DEFAULT_STRATEGY) != Z_OK)
      throw ConfigError("deflateInit2 rejected the guard configuration");
  }
  ~RawDeflate() { deflateEnd(&s_); }
  RawDeflate(const RawDeflate&) = delete;
  RawDeflate& operator=(const RawDeflate&) = delete;

  // Compresses `data` and sync-flushes; returns bytes produced.
  std::size_t feed_and_flush(const unsigned char* data, std::size_t n) {
    unsigned char out[16384];
    std::size_t produced = 0;
    s_.next_in = const_cast<unsigned char*>(data);
    s_.avail_in = static_cast<uInt>(n);
    do {
      s_.next_out = out;
      s_.avail_out = sizeof out;
      int rc = deflate(&s_, Z_SYNC_FLUSH);
      if (rc != Z_OK && rc != Z_BUF_ERROR) throw Error("deflate failed");
      produced += sizeof out - s_.avail_out;
    } while (s_.avail_out == 0);
    return produced;
  }

 private:
  z_stream s_{};
};

}  // namespace

std::size_t flush_overhead(const GuardConfig& config) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, std::size_t> cache;
  const auto key = std::make_tuple(config.window_bits, config.deflate_level, config.mem_level);
  std::lock_guard lock(mu);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  RawDeflate d(config);
  const std::size_t n = d.feed_and_flush(nullptr, 0);
  cache.emplace(key, n);
  return n;
}

CompressionScan compress_scan(std::span<const TokenId> ids,
                              const GuardConfig& config) {
  config.validate();
  CompressionScan scan;
  scan.flush_overhead = flush_overhead(config);
  const std::size_t n = ids.size();
  const std::size_t k = config.chunk_size;

  std::vector<unsigned char> bytes(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<std::uint32_t>(ids[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(v >> (8 * b));
  }

  const std::size_t full = n / k;
  if (full == 0) {
    scan.chunk_begin.push_back(0);
    scan.chunk_tokens.push_back(n);
  } else {
    for (std::size_t c = 0; c < full; ++c) {
      scan.chunk_begin.push_back(c * k);
      scan.chunk_tokens.push_back(k);
    }
    scan.chunk_tokens.back() += n - full * k;
  }

  RawDeflate d(config);
  for (std::size_t c = 0; c < scan.chunk_begin.size(); ++c) {
    const std::size_t raw = scan.chunk_tokens[c] * 4;
    const std::size_t got = d.feed_and_flush(bytes.data() + scan.chunk_begin[c] * 4, raw);
    scan.compressed_bytes.push_back(got);
    scan.ratios.push_back(raw == 0 ? 1.0
                                   : (static_cast<double>(got) -
                                      static_cast<double>(scan.flush_overhead)) /
                                         static_cast<double>(raw));
  }

  scan.degenerate = n < 2;
  if (!scan.degenerate)
    scan.flagged = std::any_of(scan.ratios.begin(), scan.ratios.end(),
                               [&](double r) { return r < config.tau_repeat; });
  return scan;
}

std::uint32_t top_region_start(std::uint32_t vocab, double fraction) {
  // ceil((1 - x) V) = V - floor(x V); snap x V to an integer when it is one
  // up to rounding so that e.g. x = 0.25, V = 8 gives 6 and not 7.
  const double xv = fraction * static_cast<double>(vocab);
  double fl = std::floor(xv);
  if (std::abs(xv - std::round(xv)) < 1e-9 * std::max(1.0, xv)) fl = std::round(xv);
  const double start = static_cast<double>(vocab) - fl;
  return static_cast<std::uint32_t>(std::clamp(start, 0.0, static_cast<double>(vocab)));
}

namespace {

void check_ids(std::span<const TokenId> ids, std::uint32_t vocab) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || static_cast<std::uint32_t>(ids[i]) >= vocab)
      throw InvalidToken("token id " + std::to_string(ids[i]) + " at position " +
                         std::to_string(i) + " outside [0, " + std::to_string(vocab) + ")");
}

}  // namespace

std::vector<double> rare_token_fraction(std::span<const TokenId> ids,
                                        std::uint32_t vocab,
                                        std::span<const double> cutoffs) {
  check_ids(ids, vocab);
  std::vector<double> out;
  for (double x : cutoffs) {
    if (!(x > 0.0 && x < 1.0)) throw ConfigError("rare cutoffs must be in (0, 1)");
    if (ids.empty()) {
      out.push_back(0.0);
      continue;
    }
    const auto start = top_region_start(vocab, x);
    const auto hits = std::count_if(ids.begin(), ids.end(), [&](TokenId t) {
      return static_cast<std::uint32_t>(t) >= start;
    });
    out.push_back(static_cast<double>(hits) / static_cast<double>(ids.size()));
  }
  return out;
}

std::vector<bool> gibberish_mask(std::span<const double> logprobs,
                                 std::span<const TokenId> ids,
                                 std::uint32_t vocab) {
  if (logprobs.empty() && !ids.empty())
    throw Unsupported("gibberish mask needs per-token logprobs");
  if (logprobs.size() != ids.size())
    throw Unsupported("got " + std::to_string(logprobs.size()) + " logprobs for " +
                      std::to_string(ids.size()) + " tokens");
  check_ids(ids, vocab);
  const double floor_lp = -std::log(static_cast<double>(vocab)) - 2.0;
  const auto start = top_region_start(vocab, 0.10);
  std::vector<bool> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out[i] = logprobs[i] < floor_lp && static_cast<std::uint32_t>(ids[i]) >= start;
  return out;
}

namespace {

double checked_sum(std::span<const double> p, double tol) {
  if (p.empty()) throw InvalidDistribution("empty distribution");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InvalidDistribution("negative or NaN probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol)
    throw InvalidDistribution("probabilities sum to " + std::to_string(sum) + ", not 1");
  return sum;
}

}  // namespace

MinpResult minp_filter(std::span<const double> probs, double min_p) {
  checked_sum(probs, 1e-6);
  if (!(min_p >= 0.0 && min_p <= 1.0))
    throw InvalidDistribution("min_p must be in [0, 1]");
  const double threshold = min_p * *std::max_element(probs.begin(), probs.end());
  MinpResult r;
  double mass = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] >= threshold) {
      r.kept.push_back(i);
      mass += probs[i];
    }
  for (auto i : r.kept) r.probs.push_back(probs[i] / mass);
  return r;
}

double normalized_entropy(std::span<const double> load) {
  if (load.size() < 2) throw InvalidDistribution("need at least 2 bins");
  checked_sum(load, 1e-9);
  double h = 0.0;
  for (double v : load)
    if (v > 0.0) h -= v * std::log(v);
  return std::clamp(h / std::log(static_cast<double>(load.size())), 0.0, 1.0);
}

GuardReport guard_rollout(std::span<const TokenId> ids,
                          std::span<const double> logprobs,
                          const GuardConfig& config) {
  GuardReport r;
  r.scan = compress_scan(ids, config);
  r.rare_cutoffs = config.rare_cutoffs;
  r.rare_fractions = rare_token_fraction(ids, config.vocab_size, config.rare_cutoffs);
  if (!logprobs.empty()) r.gibberish = gibberish_mask(logprobs, ids, config.vocab_size);
  r.flagged = r.scan.flagged;
  return r;
}

double reward_gate(const GuardReport& report, double reward) {
  return report.flagged ? 0.0 : reward;
}

}  // namespace mrsa
