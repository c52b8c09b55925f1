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

#ifndef KANON_ADJUST_H_
#define KANON_ADJUST_H_

#include <cstdint>
#include <string>
#include <vector>

#include "kanon/equivalence.h"
#include "kanon/gramian.h"
#include "kanon/ols.h"

namespace kanon {

struct CovariateSpec {
  std::string factor;
  LevelValues raw_values;  // before demeaning
};

// Regression-adjusted treatment effect from per-arm ANCOVA on pooled-demeaned
// covariates, with the conservative sample variance built from each arm's
// residual sum of squares.
struct AdjustmentResult {
  std::string endpoint;
  std::string arm_a;  // reference arm (first in arm order)
  std::string arm_b;
  std::vector<CovariateSpec> covariates;  // as supplied
  std::vector<LevelValues> demeaned;       // parallel to covariates
  OlsFit fit_a;
  OlsFit fit_b;
  std::int64_t n_a = 0;
  std::int64_t n_b = 0;
  std::int64_t reg_df_a = 0;
  std::int64_t reg_df_b = 0;
  double ate = 0.0;  // intercept_b - intercept_a
  double var_sate = 0.0;
  double t_sate = 0.0;

  // Auxiliary reference distributions for t_sate.
  double p_sate_normal = 1.0;
  double welch_df = 0.0;
  double p_sate_welch = 1.0;

  // Filled by pate_variance().
  bool has_pate = false;
  double v_tau = 0.0;
  double var_pate = 0.0;
  double t_pate = 0.0;
};

// Requires exactly two treatment arms. Throws DesignError otherwise and
// SingularMatrixError when a demeaned covariate is constant within an arm.
AdjustmentResult adjust(const EquivalenceTable& t,
                        const std::vector<CovariateSpec>& covariates,
                        const std::string& endpoint);

AdjustmentResult adjust(const EquivalenceTable& t, const std::string& covariate,
                        const LevelValues& value_map);

struct PateVariance {
  double sum_sq_a = 0.0;  // sum over arm a of demeaned x^2
  double sum_sq_b = 0.0;
  double v_tau = 0.0;
  double var_pate = 0.0;
  double t_pate = 0.0;
};

// V_tau = (Sxx_a + Sxx_b) (slope_b - slope_a)^2 / (N (N - 1)), added to
// Var(SATE). Only the single-covariate form is supported.
PateVariance pate_variance(const AdjustmentResult& r,
                           const EquivalenceTable& t);

// Checked form: `covariate` and `value_map` must be the ones `r` was fitted
// with.
PateVariance pate_variance(const AdjustmentResult& r, const EquivalenceTable& t,
                           const std::string& covariate,
                           const LevelValues& value_map);

// Convenience: fills the PATE fields of `r` in place.
void attach_pate(AdjustmentResult& r, const EquivalenceTable& t);

}  // namespace kanon

#endif  // KANON_ADJUST_H_
