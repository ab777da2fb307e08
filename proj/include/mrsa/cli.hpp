// SPDX-License-Identifier: Apache-2.0
//
// `mrsa` command line: run, replay, guard, advantage, schedule, trim, pack,
// iops. Exit codes: 0 success, 1 per-item failures (outputs still written),
// 2 usage or configuration errors.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mrsa/config.hpp"

namespace mrsa {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

// args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const EnvLookup& env = process_env());

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mrsa
