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

#include "kanon/micro_oracle.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "kanon/distributions.h"
#include "kanon/errors.h"

namespace kanon::oracle {
namespace {

const std::string& level_of(const MicroRecord& r, const std::string& factor) {
  for (const auto& a : r.assignments.assignments())
    if (a.factor == factor) return a.level;
  throw SchemaError("record '" + r.user_id + "' lacks factor '" + factor + "'");
}

double outcome(const MicroRecord& r, const std::string& endpoint) {
  auto it = r.outcomes.find(endpoint);
  if (it == r.outcomes.end())
    throw SchemaError("record '" + r.user_id + "' lacks endpoint '" +
                      endpoint + "'");
  return it->second;
}

double column_value(const Term& term, const MicroRecord& r) {
  if (term.kind() == Term::Kind::kDummy)
    return level_of(r, term.factor()) == term.level() ? 1.0 : 0.0;
  if (term.kind() == Term::Kind::kNumeric) {
    const std::string& level = level_of(r, term.factor());
    auto it = term.values().find(level);
    if (it == term.values().end())
      throw DesignError("level '" + level + "' missing from value map");
    return it->second;
  }
  double v = 1.0;
  for (const auto& part : term.parts()) v *= column_value(part, r);
  return v;
}

bool in_scope(const MicroRecord& r, const DesignSpec& spec) {
  return !spec.arm_filter ||
         level_of(r, spec.arm_filter->factor) == spec.arm_filter->level;
}

std::vector<std::string> levels_of(std::span<const MicroRecord> micro,
                                   const std::string& factor) {
  std::set<std::string> s;
  for (const auto& r : micro) s.insert(level_of(r, factor));
  return {s.begin(), s.end()};
}

double residual_ss(const DenseDesign& d, const Vector& beta) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.x.rows(); ++i) {
    double fitted = 0.0;
    for (std::size_t j = 0; j < d.x.cols(); ++j) fitted += d.x(i, j) * beta[j];
    const double e = d.y[i] - fitted;
    s += e * e;
  }
  return s;
}

}  // namespace

DenseDesign expand(std::span<const MicroRecord> micro, const DesignSpec& spec) {
  std::vector<const MicroRecord*> rows;
  for (const auto& r : micro)
    if (in_scope(r, spec)) rows.push_back(&r);
  const std::size_t p = spec.terms.size() + (spec.intercept ? 1 : 0);
  DenseDesign d;
  d.x = Matrix(rows.size(), p);
  d.y.resize(rows.size());
  if (spec.intercept) d.labels.push_back("Intercept");
  for (const auto& t : spec.terms) d.labels.push_back(t.label());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t c = 0;
    if (spec.intercept) d.x(i, c++) = 1.0;
    for (const auto& t : spec.terms) d.x(i, c++) = column_value(t, *rows[i]);
    d.y[i] = outcome(*rows[i], spec.endpoint);
  }
  return d;
}

double dense_tss(std::span<const MicroRecord> micro, const DesignSpec& spec) {
  double s = 0.0;
  for (const auto& r : micro)
    if (in_scope(r, spec)) {
      const double y = outcome(r, spec.endpoint);
      s += y * y;
    }
  return s;
}

OlsFit dense_ols(const DenseDesign& d) {
  const std::size_t n = d.x.rows();
  const std::size_t p = d.x.cols();
  if (d.y.size() != n) throw std::invalid_argument("x and y row counts differ");
  if (n <= p)
    throw InsufficientDfError("dense OLS needs more rows than columns");

  Matrix xtx(p, p);
  Vector xty(p, 0.0);
  double tss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < p; ++a) {
      xty[a] += d.x(i, a) * d.y[i];
      for (std::size_t b = 0; b < p; ++b) xtx(a, b) += d.x(i, a) * d.x(i, b);
    }
    tss += d.y[i] * d.y[i];
  }

  OlsFit fit;
  fit.labels = d.labels;
  fit.n = static_cast<std::int64_t>(n);
  fit.tss = tss;
  fit.xtx_inv = invert_spd(xtx);
  fit.beta.assign(p, 0.0);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) fit.beta[a] += fit.xtx_inv(a, b) * xty[b];
  fit.res_ss = residual_ss(d, fit.beta);
  fit.reg_ss = tss - fit.res_ss;
  fit.df_model = static_cast<std::int64_t>(p);
  fit.df_resid = fit.n - fit.df_model;
  fit.mse = fit.res_ss / static_cast<double>(fit.df_resid);
  for (std::size_t a = 0; a < p; ++a) {
    const double se = std::sqrt(fit.mse * fit.xtx_inv(a, a));
    const double t = fit.beta[a] / se;
    fit.se.push_back(se);
    fit.t_stat.push_back(t);
    fit.p_value.push_back(t_p_value(t, static_cast<double>(fit.df_resid)));
  }
  return fit;
}

DensePartialF dense_partial_f(std::span<const MicroRecord> micro,
                              const std::string& factor_a,
                              const std::string& factor_b,
                              const std::string& endpoint) {
  const auto la = levels_of(micro, factor_a);
  const auto lb = levels_of(micro, factor_b);
  const std::size_t k_main = 1 + (la.size() - 1) + (lb.size() - 1);
  const std::size_t k_full = k_main + (la.size() - 1) * (lb.size() - 1);
  const std::size_t n = micro.size();

  DenseDesign main, full;
  main.x = Matrix(n, k_main);
  full.x = Matrix(n, k_full);
  main.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = micro[i];
    const std::string& a = level_of(r, factor_a);
    const std::string& b = level_of(r, factor_b);
    std::vector<double> da, db;
    for (std::size_t j = 1; j < la.size(); ++j) da.push_back(a == la[j]);
    for (std::size_t j = 1; j < lb.size(); ++j) db.push_back(b == lb[j]);
    std::vector<double> row{1.0};
    row.insert(row.end(), da.begin(), da.end());
    row.insert(row.end(), db.begin(), db.end());
    for (std::size_t c = 0; c < k_main; ++c) main.x(i, c) = row[c];
    for (double u : da)
      for (double v : db) row.push_back(u * v);
    for (std::size_t c = 0; c < k_full; ++c) full.x(i, c) = row[c];
    main.y[i] = outcome(r, endpoint);
  }
  full.y = main.y;
  main.labels.resize(k_main);
  full.labels.resize(k_full);

  DensePartialF out;
  out.res_ss_main = dense_ols(main).res_ss;
  out.res_ss_full = dense_ols(full).res_ss;
  out.p_extra = static_cast<std::int64_t>(k_full - k_main);
  out.df2 = static_cast<std::int64_t>(n - k_full);
  out.f_stat = ((out.res_ss_main - out.res_ss_full) /
                static_cast<double>(out.p_extra)) /
               (out.res_ss_full / static_cast<double>(out.df2));
  return out;
}

double covariate_mean(std::span<const MicroRecord> micro,
                      const std::string& factor, const LevelValues& raw) {
  if (micro.empty()) throw DesignError("no records");
  double s = 0.0;
  for (const auto& r : micro) s += raw.at(level_of(r, factor));
  return s / static_cast<double>(micro.size());
}

namespace {

DenseDesign arm_design(std::span<const MicroRecord> micro,
                       const std::string& treatment, const std::string& arm,
                       const std::string& covariate, const LevelValues& raw,
                       double mean, const std::string& endpoint,
                       double* sum_sq) {
  DenseDesign d;
  std::vector<std::pair<double, double>> rows;
  for (const auto& r : micro) {
    if (level_of(r, treatment) != arm) continue;
    const double x = raw.at(level_of(r, covariate)) - mean;
    rows.emplace_back(x, outcome(r, endpoint));
    *sum_sq += x * x;
  }
  d.x = Matrix(rows.size(), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.x(i, 0) = 1.0;
    d.x(i, 1) = rows[i].first;
    d.y.push_back(rows[i].second);
  }
  d.labels = {"Intercept", covariate};
  return d;
}

}  // namespace

DenseAdjustment dense_adjust(std::span<const MicroRecord> micro,
                             const std::string& treatment,
                             const std::string& covariate,
                             const LevelValues& raw,
                             const std::string& endpoint) {
  const auto arms = levels_of(micro, treatment);
  if (arms.size() != 2) throw DesignError("need exactly two arms");
  const double mean = covariate_mean(micro, covariate, raw);
  DenseAdjustment out;
  out.fit_a = dense_ols(arm_design(micro, treatment, arms[0], covariate, raw,
                                   mean, endpoint, &out.sum_sq));
  out.fit_b = dense_ols(arm_design(micro, treatment, arms[1], covariate, raw,
                                   mean, endpoint, &out.sum_sq));
  out.ate = out.fit_b.beta[0] - out.fit_a.beta[0];
  auto component = [](const OlsFit& f) {
    const double n = static_cast<double>(f.n);
    return f.res_ss / (n * (n - static_cast<double>(f.df_model)));
  };
  out.var_sate = component(out.fit_a) + component(out.fit_b);
  const double n = static_cast<double>(out.fit_a.n + out.fit_b.n);
  const double gap = out.fit_b.beta[1] - out.fit_a.beta[1];
  out.v_tau = out.sum_sq * gap * gap / (n * (n - 1.0));
  return out;
}

OlsFit dense_pooled_ancova(std::span<const MicroRecord> micro,
                           const std::string& treatment,
                           const std::string& arm_b,
                           const std::string& covariate,
                           const LevelValues& raw,
                           const std::string& endpoint) {
  const double mean = covariate_mean(micro, covariate, raw);
  DenseDesign d;
  d.x = Matrix(micro.size(), 4);
  for (std::size_t i = 0; i < micro.size(); ++i) {
    const auto& r = micro[i];
    const double b = level_of(r, treatment) == arm_b ? 1.0 : 0.0;
    const double x = raw.at(level_of(r, covariate)) - mean;
    d.x(i, 0) = 1.0;
    d.x(i, 1) = b;
    d.x(i, 2) = x;
    d.x(i, 3) = b * x;
    d.y.push_back(outcome(r, endpoint));
  }
  d.labels = {"Intercept", "ATE", covariate, "Interaction"};
  return dense_ols(d);
}

double max_relative_discrepancy(const OlsFit& a, const OlsFit& b) {
  auto rel = [](double x, double y) {
    const double scale = std::max(std::fabs(x), std::fabs(y));
    const double diff = std::fabs(x - y);
    return scale < 1e-12 ? diff : diff / scale;
  };
  if (a.beta.size() != b.beta.size())
    throw std::invalid_argument("fits have different parameter counts");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.beta.size(); ++i) {
    worst = std::max(worst, rel(a.beta[i], b.beta[i]));
    worst = std::max(worst, rel(a.se[i], b.se[i]));
    worst = std::max(worst, rel(a.t_stat[i], b.t_stat[i]));
  }
  return worst;
}

}  // namespace kanon::oracle
