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

#include "kanon/adjust.h"

#include <cmath>

#include "kanon/distributions.h"
#include "kanon/errors.h"

namespace kanon {
namespace {

DesignSpec arm_design(const EquivalenceTable& t,
                      const std::vector<CovariateSpec>& covariates,
                      const std::vector<LevelValues>& demeaned,
                      const std::string& arm, const std::string& endpoint) {
  DesignSpec spec;
  spec.endpoint = endpoint;
  spec.arm_filter = ArmFilter{t.treatment_factor(), arm};
  for (std::size_t i = 0; i < covariates.size(); ++i)
    spec.terms.push_back(Term::Numeric(covariates[i].factor, demeaned[i]));
  return spec;
}

OlsFit fit_arm(const EquivalenceTable& t, const DesignSpec& spec) {
  const GramianSystem g = build_numeric(t, spec);
  try {
    return solve(g);
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError("arm " + spec.arm_filter->level + ": " +
                                  e.what() +
                                  " (covariate constant within the arm?)",
                              e.column());
  }
}

}  // namespace

AdjustmentResult adjust(const EquivalenceTable& t,
                        const std::vector<CovariateSpec>& covariates,
                        const std::string& endpoint) {
  if (covariates.empty()) throw DesignError("adjust needs a covariate");
  const auto arms = observed_levels(t, t.treatment_factor());
  if (arms.size() != 2)
    throw DesignError("regression adjustment needs exactly two treatment arms, "
                      "found " +
                      std::to_string(arms.size()));
  for (const auto& c : covariates)
    if (c.factor == t.treatment_factor())
      throw DesignError("the treatment factor cannot be a covariate");

  AdjustmentResult r;
  r.endpoint = endpoint;
  r.arm_a = arms[0];
  r.arm_b = arms[1];
  r.covariates = covariates;
  for (const auto& c : covariates)
    r.demeaned.push_back(demean_values(t, c.factor, c.raw_values));

  r.fit_a = fit_arm(t, arm_design(t, covariates, r.demeaned, r.arm_a, endpoint));
  r.fit_b = fit_arm(t, arm_design(t, covariates, r.demeaned, r.arm_b, endpoint));
  r.n_a = r.fit_a.n;
  r.n_b = r.fit_b.n;
  r.reg_df_a = r.fit_a.df_model;
  r.reg_df_b = r.fit_b.df_model;

  r.ate = r.fit_b.beta[0] - r.fit_a.beta[0];
  const double dfa = static_cast<double>(r.n_a - r.reg_df_a);
  const double dfb = static_cast<double>(r.n_b - r.reg_df_b);
  const double va = r.fit_a.res_ss / (static_cast<double>(r.n_a) * dfa);
  const double vb = r.fit_b.res_ss / (static_cast<double>(r.n_b) * dfb);
  r.var_sate = va + vb;
  r.t_sate = r.var_sate > 0.0 ? r.ate / std::sqrt(r.var_sate)
                              : (r.ate == 0.0 ? 0.0 : std::copysign(INFINITY, r.ate));
  r.p_sate_normal = normal_p_value(r.t_sate);
  const double denom = va * va / dfa + vb * vb / dfb;
  r.welch_df = denom > 0.0 ? r.var_sate * r.var_sate / denom : dfa + dfb;
  r.p_sate_welch = t_p_value(r.t_sate, r.welch_df);
  return r;
}

AdjustmentResult adjust(const EquivalenceTable& t, const std::string& covariate,
                        const LevelValues& value_map) {
  if (t.endpoints().empty()) throw SchemaError("table has no endpoints");
  return adjust(t, {CovariateSpec{covariate, value_map}},
                t.endpoints().front());
}

PateVariance pate_variance(const AdjustmentResult& r,
                           const EquivalenceTable& t) {
  if (r.covariates.size() != 1)
    throw NotSupportedError(
        "population variance correction is only defined here for a single "
        "covariate");
  const std::int64_t n = r.n_a + r.n_b;
  if (n < 2) throw DesignError("PATE variance needs N >= 2");
  const std::string& factor = r.covariates.front().factor;
  const LevelValues& values = r.demeaned.front();

  PateVariance out;
  for (const auto& [key, row] : t.rows()) {
    if (row.count == 0) continue;
    const double x = values.at(key.level(factor));
    const double w = x * x * static_cast<double>(row.count);
    const std::string& arm = key.level(t.treatment_factor());
    if (arm == r.arm_a)
      out.sum_sq_a += w;
    else if (arm == r.arm_b)
      out.sum_sq_b += w;
  }
  const double slope_gap = r.fit_b.beta[1] - r.fit_a.beta[1];
  const double dn = static_cast<double>(n);
  out.v_tau =
      (out.sum_sq_a + out.sum_sq_b) * slope_gap * slope_gap / (dn * (dn - 1.0));
  out.var_pate = r.var_sate + out.v_tau;
  out.t_pate = out.var_pate > 0.0 ? r.ate / std::sqrt(out.var_pate) : 0.0;
  return out;
}

PateVariance pate_variance(const AdjustmentResult& r, const EquivalenceTable& t,
                           const std::string& covariate,
                           const LevelValues& value_map) {
  if (r.covariates.size() != 1 || r.covariates.front().factor != covariate ||
      r.covariates.front().raw_values != value_map)
    throw DesignError("pate_variance called with a covariate or value map "
                      "different from the adjustment's");
  return pate_variance(r, t);
}

void attach_pate(AdjustmentResult& r, const EquivalenceTable& t) {
  const PateVariance v = pate_variance(r, t);
  r.has_pate = true;
  r.v_tau = v.v_tau;
  r.var_pate = v.var_pate;
  r.t_pate = v.t_pate;
}

}  // namespace kanon
