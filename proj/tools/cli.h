// Copyright 2026 The kanon-ols Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KANON_TOOLS_CLI_H_
#define KANON_TOOLS_CLI_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kanon/equivalence.h"
#include "kanon/interaction.h"

namespace kanon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::int64_t k_threshold = 2;
  ReleasePolicy release_policy = ReleasePolicy::kReject;
  double alpha = 0.05;
  Correction correction = Correction::kBenjaminiHochberg;
  int precision = 4;  // human-readable tables
};

// Entry point shared by the binary and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace kanon::cli

#endif  // KANON_TOOLS_CLI_H_
