// SPDX-License-Identifier: Apache-2.0

#include "mrsa/sizing.hpp"

#include <cmath>

#include "mrsa/error.hpp"

namespace mrsa {

void IoWorkload::validate() const {
  if (!(batch > 0 && seq_len > 0 && bytes_per_token > 0 && page_size > 0))
    throw ConfigError("G, s, b and P must be positive");
  if (!(iteration_s > 0)) throw ConfigError("iteration time t must be positive");
  if (!(iops_max > 0)) throw ConfigError("I_max must be positive");
  if (!(scatter >= 1)) throw ConfigError("scatter factor must be >= 1");
}

double pages_per_iteration(const IoWorkload& w) {
  w.validate();
  return std::ceil(w.batch * w.seq_len * w.bytes_per_token / w.page_size);
}

double iops_needed(const IoWorkload& w) {
  return w.scatter / w.iteration_s * pages_per_iteration(w);
}

double t_break(const IoWorkload& w) {
  if (std::isinf(w.iops_max)) return 0.0;
  return w.scatter / w.iops_max * pages_per_iteration(w);
}

double scatter_estimate(double extra_faults, double page_size, double seq_len,
                        double bytes_per_token) {
  if (!(seq_len * bytes_per_token > 0)) throw ConfigError("s * b must be positive");
  if (!(extra_faults >= 0 && page_size > 0))
    throw ConfigError("m must be >= 0 and P positive");
  return 1.0 + extra_faults * page_size / (seq_len * bytes_per_token);
}

}  // namespace mrsa
