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

#ifndef KANON_INTERACTION_H_
#define KANON_INTERACTION_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kanon/equivalence.h"
#include "kanon/gramian.h"

namespace kanon {

enum class Correction { kBonferroni, kSidak, kBenjaminiHochberg };

std::string to_string(Correction method);
Correction parse_correction(std::string_view text);

// Nested-model F test for the a x b interaction block. For heterogeneity
// screens pass a segment factor as factor_b.
struct PartialFResult {
  std::pair<std::string, std::string> pair;
  std::string endpoint;
  double res_ss_main = 0.0;
  double res_ss_full = 0.0;
  std::int64_t p_extra = 0;  // parameters added by the interaction block
  std::int64_t k_full = 0;   // parameters in the full model
  std::int64_t n = 0;
  std::int64_t df2 = 0;      // n - k_full
  double f_stat = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  Correction method = Correction::kBonferroni;
  bool rejected = false;
  // Set when the pair could not be evaluated; the statistics are then NaN.
  std::optional<std::string> diagnostic;

  bool ok() const { return !diagnostic.has_value(); }
};

// Builds the fully interacted Gramian once and fits the main-effects model on
// its leading block. Throws SparseCellError when some (a, b) combination has
// no subjects, rather than silently dropping columns.
PartialFResult partial_f(const EquivalenceTable& t, const std::string& factor_a,
                         const std::string& factor_b,
                         const std::string& endpoint,
                         const ReferenceLevels& references = {});

// Uses the table's first endpoint.
PartialFResult partial_f(const EquivalenceTable& t, const std::string& factor_a,
                         const std::string& factor_b);

// F statistic from the two residual sums of squares.
double partial_f_statistic(double res_ss_main, double res_ss_full,
                           std::int64_t p_extra, std::int64_t df2);

// Adjusted p-values in input order. Bonferroni: min(1, m p). Sidak:
// 1 - (1 - p)^m. Benjamini-Hochberg: step-up q-values, monotone in rank.
std::vector<double> adjust_p(const std::vector<double>& p_raw,
                             Correction method);

using PairKey = std::pair<std::string, std::string>;

struct ScreenInput {
  EquivalenceTable table;
  std::string endpoint;  // empty: the table's first endpoint
};

// Runs partial_f over every supplied pair (in parallel), corrects across the
// pairs that produced a p-value, flags rejections at `alpha` and returns the
// results sorted by adjusted p. Failing pairs come last with a diagnostic.
std::vector<PartialFResult> screen_all(
    const std::map<PairKey, ScreenInput>& tables, Correction method,
    double alpha);

std::vector<PartialFResult> screen_all(
    const std::map<PairKey, EquivalenceTable>& tables, Correction method,
    double alpha);

// Number of pairwise interaction checks among `tests` concurrent tests.
std::int64_t family_size(std::int64_t tests);

}  // namespace kanon

#endif  // KANON_INTERACTION_H_
