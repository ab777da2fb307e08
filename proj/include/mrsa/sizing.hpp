// SPDX-License-Identifier: Apache-2.0
//
// Random-read IOPS sizing for a streamed training data pipeline.

#pragma once

#include <cstdint>

namespace mrsa {

struct IoWorkload {
  double batch = 4096;       // G, sequences per global batch
  double seq_len = 4096;     // s, tokens
  double bytes_per_token = 4;  // b
  double page_size = 4096;   // P, bytes
  double iteration_s = 2.5;  // t
  double iops_max = 70000;   // I_max
  double scatter = 1;        // sigma >= 1

  void validate() const;  // throws ConfigError
  bool operator==(const IoWorkload&) const = default;
};

// ceil(G s b / P)
double pages_per_iteration(const IoWorkload& w);

// (sigma / t) * pages
double iops_needed(const IoWorkload& w);

// (sigma / I_max) * pages: the iteration time at which I/O stops keeping up.
double t_break(const IoWorkload& w);

// 1 + m P / (s b), m = extra page faults per sample.
double scatter_estimate(double extra_faults, double page_size, double seq_len,
                        double bytes_per_token);

}  // namespace mrsa
