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

#ifndef KANON_MICRO_ORACLE_H_
#define KANON_MICRO_ORACLE_H_

#include <span>
#include <string>
#include <vector>

#include "kanon/equivalence.h"
#include "kanon/gramian.h"
#include "kanon/ols.h"

// Classical OLS on user-level rows. Exists to be obviously correct, not fast:
// it expands the full design matrix, accumulates X'X row by row and computes
// residuals explicitly. Only invert_spd is shared with the aggregate path.
namespace kanon::oracle {

struct DenseDesign {
  Matrix x;  // n x p
  Vector y;  // n
  std::vector<std::string> labels;
};

// One row per record (restricted to spec.arm_filter when set).
DenseDesign expand(std::span<const MicroRecord> micro, const DesignSpec& spec);

OlsFit dense_ols(const DenseDesign& d);

// Sum of y^2 over records in scope.
double dense_tss(std::span<const MicroRecord> micro, const DesignSpec& spec);

struct DensePartialF {
  double res_ss_main = 0.0;
  double res_ss_full = 0.0;
  std::int64_t p_extra = 0;
  std::int64_t df2 = 0;
  double f_stat = 0.0;
};

// Two dense regressions (main effects, fully interacted) with levels and
// reference levels derived from the records themselves.
DensePartialF dense_partial_f(std::span<const MicroRecord> micro,
                              const std::string& factor_a,
                              const std::string& factor_b,
                              const std::string& endpoint);

// Mean of raw covariate values over records.
double covariate_mean(std::span<const MicroRecord> micro,
                      const std::string& factor, const LevelValues& raw);

struct DenseAdjustment {
  OlsFit fit_a;
  OlsFit fit_b;
  double ate = 0.0;
  double var_sate = 0.0;
  double v_tau = 0.0;
  double sum_sq = 0.0;  // sum of demeaned x^2 over both arms
};

// Per-arm regressions on the pooled-demeaned covariate, evaluated row by row.
DenseAdjustment dense_adjust(std::span<const MicroRecord> micro,
                             const std::string& treatment,
                             const std::string& covariate,
                             const LevelValues& raw,
                             const std::string& endpoint);

// Pooled model: intercept, arm_b indicator, demeaned covariate and their
// product. The arm_b coefficient is the treatment effect.
OlsFit dense_pooled_ancova(std::span<const MicroRecord> micro,
                           const std::string& treatment,
                           const std::string& arm_b,
                           const std::string& covariate,
                           const LevelValues& raw,
                           const std::string& endpoint);

// Largest relative discrepancy between two fits over beta, se and t:
// |a - b| / max(|a|, |b|), or |a - b| when both are below 1e-12.
double max_relative_discrepancy(const OlsFit& a, const OlsFit& b);

}  // namespace kanon::oracle

#endif  // KANON_MICRO_ORACLE_H_
