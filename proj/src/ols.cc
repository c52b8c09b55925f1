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

#include "kanon/ols.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kanon/distributions.h"
#include "kanon/errors.h"

namespace kanon {
namespace {

// Lower-triangular factor L with m = L L'.
Matrix cholesky(const Matrix& m) {
  const std::size_t p = m.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < p; ++i) max_diag = std::max(max_diag, m(i, i));
  const double tol = kSingularTolerance * max_diag;
  Matrix l(p, p);
  for (std::size_t j = 0; j < p; ++j) {
    double pivot = m(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > tol)) {
      throw SingularMatrixError(
          "matrix is singular or not positive definite: column " +
              std::to_string(j) + " depends on earlier columns (pivot " +
              std::to_string(pivot) + ")",
          j);
    }
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (std::size_t i = j + 1; i < p; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / d;
    }
  }
  return l;
}

}  // namespace

Matrix invert_spd(const Matrix& m) {
  const std::size_t p = m.rows();
  if (m.cols() != p) throw std::invalid_argument("invert_spd: not square");
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double scale = std::max({1.0, std::fabs(m(i, j)), std::fabs(m(j, i))});
      if (std::fabs(m(i, j) - m(j, i)) > 1e-12 * scale)
        throw std::invalid_argument("invert_spd: matrix is not symmetric");
    }
  if (p == 0) return {};
  const Matrix l = cholesky(m);

  // L^-1 by forward substitution, then m^-1 = L^-T L^-1.
  Matrix linv(p, p);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t i = c; i < p; ++i) {
      double s = i == c ? 1.0 : 0.0;
      for (std::size_t k = c; k < i; ++k) s -= l(i, k) * linv(k, c);
      linv(i, c) = s / l(i, i);
    }
  }
  Matrix inv(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < p; ++k) s += linv(k, i) * linv(k, j);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  return inv;
}

void finish_inference(OlsFit& fit) {
  const std::size_t p = fit.beta.size();
  fit.df_model = static_cast<std::int64_t>(p);
  fit.df_resid = fit.n - fit.df_model;
  if (fit.df_resid < 1)
    throw InsufficientDfError("n = " + std::to_string(fit.n) +
                              " leaves no residual degrees of freedom for " +
                              std::to_string(p) + " parameters");
  fit.mse = fit.res_ss / static_cast<double>(fit.df_resid);
  fit.se.assign(p, 0.0);
  fit.t_stat.assign(p, 0.0);
  fit.p_value.assign(p, 1.0);
  const double df = static_cast<double>(fit.df_resid);
  for (std::size_t i = 0; i < p; ++i) {
    fit.se[i] = std::sqrt(std::max(0.0, fit.mse * fit.xtx_inv(i, i)));
    if (fit.se[i] > 0.0) {
      fit.t_stat[i] = fit.beta[i] / fit.se[i];
    } else if (fit.beta[i] != 0.0) {
      fit.t_stat[i] = std::copysign(std::numeric_limits<double>::infinity(),
                                    fit.beta[i]);
    }
    fit.p_value[i] = t_p_value(fit.t_stat[i], df);
  }
}

OlsFit solve(const GramianSystem& g) {
  const std::size_t p = g.p();
  if (g.xtx.rows() != p || g.xtx.cols() != p)
    throw std::invalid_argument("Gramian shape does not match X'y");
  if (g.n <= static_cast<std::int64_t>(p))
    throw InsufficientDfError("n = " + std::to_string(g.n) +
                              " must exceed the " + std::to_string(p) +
                              " model parameters");
  OlsFit fit;
  fit.labels = g.labels;
  fit.n = g.n;
  fit.tss = g.tss;
  try {
    fit.xtx_inv = invert_spd(g.xtx);
  } catch (const SingularMatrixError& e) {
    const std::string name =
        e.column() < g.labels.size() ? g.labels[e.column()] : "?";
    throw SingularMatrixError("collinear design: column '" + name +
                                  "' is linearly dependent on earlier columns",
                              e.column());
  }
  fit.beta = fit.xtx_inv * std::span<const double>(g.xty);
  fit.reg_ss = quadratic_form(g.xtx, fit.beta);
  fit.res_ss = g.tss - fit.reg_ss;
  if (fit.res_ss < 0.0) {
    if (fit.res_ss < -1e-9 * g.tss)
      throw ConsistencyError(
          "residual sum of squares is negative (" +
          std::to_string(fit.res_ss) +
          "); the TSS sidecar does not match the class sums");
    fit.res_ss = 0.0;
  }
  finish_inference(fit);
  return fit;
}

}  // namespace kanon
