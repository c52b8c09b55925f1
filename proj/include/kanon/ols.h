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

#ifndef KANON_OLS_H_
#define KANON_OLS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "kanon/gramian.h"
#include "kanon/matrix.h"

namespace kanon {

// Full OLS inference bundle. Identical layout whether it came from a Gramian
// or from the dense micro-data reference path.
struct OlsFit {
  std::vector<std::string> labels;
  Vector beta;
  Matrix xtx_inv;
  double tss = 0.0;
  double reg_ss = 0.0;
  double res_ss = 0.0;
  double mse = 0.0;
  std::int64_t n = 0;
  std::int64_t df_model = 0;  // p, including the intercept column
  std::int64_t df_resid = 0;  // n - p
  Vector se;
  Vector t_stat;
  Vector p_value;
};

// Pivot tolerance for invert_spd, relative to the largest diagonal entry.
inline constexpr double kSingularTolerance = 1e-10;

// Inverse of a symmetric positive-definite matrix through an LL' factorization.
// Throws SingularMatrixError naming the first column whose pivot drops below
// kSingularTolerance * max diagonal.
Matrix invert_spd(const Matrix& m);

// beta = (X'X)^-1 X'y; RegSS = beta'(X'X)beta; Res_SS = TSS - RegSS;
// MSE = Res_SS / (n - p); se = sqrt(MSE * diag((X'X)^-1)).
// Throws InsufficientDfError when n <= p, SingularMatrixError on collinear
// columns and ConsistencyError when Res_SS is materially negative (corrupted
// TSS sidecar). Tiny negative residuals from roundoff are clamped to 0.
OlsFit solve(const GramianSystem& g);

// Fills mse/se/t/p from beta, xtx_inv, res_ss, n and df. Shared by both fit
// paths so the inference layer is identical.
void finish_inference(OlsFit& fit);

}  // namespace kanon

#endif  // KANON_OLS_H_
