// SPDX-License-Identifier: Apache-2.0
//
// Rollout-quality monitors. Guards return data only; nothing here touches
// training state.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mrsa/error.hpp"
#include "mrsa/tokens.hpp"

namespace mrsa {

inline constexpr std::uint32_t kDefaultVocab = 262272;

struct GuardConfig {
  std::size_t chunk_size = 256;  // tokens; 1024 bytes at 4 bytes per id
  int window_bits = 10;          // raw deflate, 1 KiB window
  int deflate_level = 1;
  int mem_level = 8;
  double tau_repeat = 0.05;
  std::vector<double> rare_cutoffs = {0.10, 0.05, 0.02, 0.01};
  std::uint32_t vocab_size = kDefaultVocab;

  void validate() const;  // throws ConfigError
  bool operator==(const GuardConfig&) const = default;
};

// Bytes a sync flush adds on an empty chunk for this compressor setup.
// Measured once per process and parameterization.
std::size_t flush_overhead(const GuardConfig& config);

struct CompressionScan {
  std::vector<std::size_t> chunk_begin;  // token offset of each chunk
  std::vector<std::size_t> chunk_tokens;
  std::vector<std::size_t> compressed_bytes;  // before overhead subtraction
  std::vector<double> ratios;
  std::size_t flush_overhead = 0;
  bool degenerate = false;  // fewer than 2 tokens; never flagged
  bool flagged = false;
};

// Token ids are written as 4-byte little-endian words into one stateful raw
// deflate stream, sync-flushed after every chunk. The final short chunk is
// merged into its predecessor.
CompressionScan compress_scan(std::span<const TokenId> ids,
                              const GuardConfig& config = {});

// First id of the top-x region of [0, V): ceil((1 - x) * V).
std::uint32_t top_region_start(std::uint32_t vocab, double fraction);

// Fraction of ids in the top-x region, per cutoff. Throws InvalidToken on an
// id outside [0, V).
std::vector<double> rare_token_fraction(std::span<const TokenId> ids,
                                        std::uint32_t vocab,
                                        std::span<const double> cutoffs);

// Tokens at least 2 nats below uniform log-probability whose id also lies in
// the top 10% of the id range. Throws Unsupported without logprobs.
std::vector<bool> gibberish_mask(std::span<const double> logprobs,
                                 std::span<const TokenId> ids,
                                 std::uint32_t vocab);

struct MinpResult {
  std::vector<std::size_t> kept;  // ascending indices
  std::vector<double> probs;      // renormalized, parallel to `kept`
};

MinpResult minp_filter(std::span<const double> probs, double min_p);

// H(p) / ln E, with 0 ln 0 = 0.
double normalized_entropy(std::span<const double> load);

struct GuardReport {
  CompressionScan scan;
  std::vector<double> rare_cutoffs;
  std::vector<double> rare_fractions;
  std::vector<bool> gibberish;  // empty when no logprobs were supplied
  bool flagged = false;
};

// Full report for one rollout. `logprobs` may be empty.
GuardReport guard_rollout(std::span<const TokenId> ids,
                          std::span<const double> logprobs,
                          const GuardConfig& config = {});

// Flagged rollouts lose their task reward regardless of the verifier.
double reward_gate(const GuardReport& report, double reward);

}  // namespace mrsa
