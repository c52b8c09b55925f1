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

#include "kanon/serialize.h"

#include <cstdio>

#include "kanon/errors.h"
#include "kanon/table_io.h"

namespace kanon {
using nlohmann::json;

namespace {

Term term_from_json(const json& j, const EquivalenceTable& t) {
  if (!j.is_object() || j.size() != 1)
    throw DesignError("a term must be an object with one key");
  if (j.contains("dummy")) {
    const auto& d = j["dummy"];
    return Term::Dummy(d.at("factor").get<std::string>(),
                       d.at("level").get<std::string>());
  }
  if (j.contains("numeric")) {
    const auto& d = j["numeric"];
    const auto factor = d.at("factor").get<std::string>();
    LevelValues values;
    if (d.contains("values")) {
      for (const auto& [level, v] : d["values"].items())
        values[level] = v.get<double>();
    } else {
      values = values_from_labels(t, factor);
    }
    if (d.value("demean", false)) values = demean_values(t, factor, values);
    return Term::Numeric(factor, std::move(values));
  }
  if (j.contains("interaction")) {
    std::vector<Term> parts;
    for (const auto& p : j["interaction"]) parts.push_back(term_from_json(p, t));
    return Term::Interaction(std::move(parts));
  }
  throw DesignError("unknown term kind in " + j.dump());
}

}  // namespace

DesignSpec design_spec_from_json(const json& j, const EquivalenceTable& t) {
  try {
    DesignSpec spec;
    spec.intercept = j.value("intercept", true);
    spec.endpoint = j.value("endpoint", t.endpoints().empty()
                                            ? std::string{}
                                            : t.endpoints().front());
    ReferenceLevels refs;
    if (j.contains("references"))
      for (const auto& [f, level] : j["references"].items())
        refs[f] = level.get<std::string>();
    if (j.contains("main_effects")) {
      for (const auto& f : j["main_effects"])
        for (auto& term : dummy_terms(t, f.get<std::string>(), refs))
          spec.terms.push_back(std::move(term));
    }
    if (j.contains("interactions")) {
      for (const auto& pair : j["interactions"]) {
        const auto a = pair.at(0).get<std::string>();
        const auto b = pair.at(1).get<std::string>();
        for (const auto& ta : dummy_terms(t, a, refs))
          for (const auto& tb : dummy_terms(t, b, refs))
            spec.terms.push_back(Term::Interaction({ta, tb}));
      }
    }
    if (j.contains("terms"))
      for (const auto& term : j["terms"])
        spec.terms.push_back(term_from_json(term, t));
    if (j.contains("arm_filter"))
      spec.arm_filter = ArmFilter{j["arm_filter"].at("factor").get<std::string>(),
                                  j["arm_filter"].at("level").get<std::string>()};
    return spec;
  } catch (const json::exception& e) {
    throw DesignError(std::string("invalid design document: ") + e.what());
  }
}

json to_json(const Term& term) {
  switch (term.kind()) {
    case Term::Kind::kDummy:
      return {{"dummy", {{"factor", term.factor()}, {"level", term.level()}}}};
    case Term::Kind::kNumeric: {
      json values = json::object();
      for (const auto& [level, v] : term.values()) values[level] = v;
      return {{"numeric", {{"factor", term.factor()}, {"values", values}}}};
    }
    case Term::Kind::kInteraction: {
      json parts = json::array();
      for (const auto& p : term.parts()) parts.push_back(to_json(p));
      return {{"interaction", parts}};
    }
  }
  return {};
}

json to_json(const DesignSpec& spec) {
  json j;
  j["intercept"] = spec.intercept;
  j["endpoint"] = spec.endpoint;
  j["terms"] = json::array();
  for (const auto& t : spec.terms) j["terms"].push_back(to_json(t));
  if (spec.arm_filter)
    j["arm_filter"] = {{"factor", spec.arm_filter->factor},
                       {"level", spec.arm_filter->level}};
  return j;
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

}  // namespace

json to_json(const GramianSystem& g) {
  return {{"labels", g.labels},
          {"xtx", matrix_json(g.xtx)},
          {"xty", g.xty},
          {"n", g.n},
          {"tss", g.tss}};
}

json to_json(const OlsFit& fit) {
  json coefficients = json::array();
  for (std::size_t i = 0; i < fit.beta.size(); ++i) {
    coefficients.push_back({{"label", fit.labels.at(i)},
                            {"estimate", fit.beta[i]},
                            {"se", fit.se[i]},
                            {"t", fit.t_stat[i]},
                            {"p", fit.p_value[i]}});
  }
  return {{"labels", fit.labels},
          {"beta", fit.beta},
          {"se", fit.se},
          {"t", fit.t_stat},
          {"p", fit.p_value},
          {"coefficients", coefficients},
          {"n", fit.n},
          {"df_model", fit.df_model},
          {"df_resid", fit.df_resid},
          {"tss", fit.tss},
          {"reg_ss", fit.reg_ss},
          {"res_ss", fit.res_ss},
          {"mse", fit.mse},
          {"xtx_inv", matrix_json(fit.xtx_inv)}};
}

json to_json(const PartialFResult& r) {
  json j = {{"pair", {r.pair.first, r.pair.second}},
            {"endpoint", r.endpoint},
            {"method", to_string(r.method)},
            {"ok", r.ok()}};
  if (r.ok()) {
    j["res_ss_main"] = r.res_ss_main;
    j["res_ss_full"] = r.res_ss_full;
    j["p_extra"] = r.p_extra;
    j["k_full"] = r.k_full;
    j["n"] = r.n;
    j["df1"] = r.p_extra;
    j["df2"] = r.df2;
    j["f"] = r.f_stat;
    j["p_raw"] = r.p_raw;
    j["p_adjusted"] = r.p_adjusted;
    j["rejected"] = r.rejected;
  } else {
    j["diagnostic"] = *r.diagnostic;
  }
  return j;
}

json to_json(const std::vector<PartialFResult>& results, Correction method,
             double alpha) {
  std::size_t family = 0, rejected = 0;
  json items = json::array();
  for (const auto& r : results) {
    if (r.ok()) ++family;
    if (r.rejected) ++rejected;
    items.push_back(to_json(r));
  }
  return {{"method", to_string(method)},
          {"alpha", alpha},
          {"pairs", results.size()},
          {"family_size", family},
          {"rejections", rejected},
          {"results", items}};
}

json to_json(const AdjustmentResult& r) {
  json covs = json::array();
  for (std::size_t i = 0; i < r.covariates.size(); ++i) {
    json raw = json::object(), dm = json::object();
    for (const auto& [l, v] : r.covariates[i].raw_values) raw[l] = v;
    for (const auto& [l, v] : r.demeaned[i]) dm[l] = v;
    covs.push_back({{"factor", r.covariates[i].factor},
                    {"raw_values", raw},
                    {"demeaned_values", dm}});
  }
  json j = {{"endpoint", r.endpoint},
            {"arm_a", r.arm_a},
            {"arm_b", r.arm_b},
            {"covariates", covs},
            {"fit_a", to_json(r.fit_a)},
            {"fit_b", to_json(r.fit_b)},
            {"n_a", r.n_a},
            {"n_b", r.n_b},
            {"reg_df_a", r.reg_df_a},
            {"reg_df_b", r.reg_df_b},
            {"ate", r.ate},
            {"var_sate", r.var_sate},
            {"t_sate", r.t_sate},
            {"auxiliary",
             {{"p_sate_normal", r.p_sate_normal},
              {"welch_satterthwaite_df", r.welch_df},
              {"p_sate_welch", r.p_sate_welch}}}};
  if (r.has_pate) {
    j["v_tau"] = r.v_tau;
    j["var_pate"] = r.var_pate;
    j["t_pate"] = r.t_pate;
  }
  return j;
}

LevelValues parse_value_map(std::string_view text) {
  LevelValues out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(start, end - start);
    if (!item.empty()) {
      auto eq = item.find('=');
      if (eq == std::string_view::npos || eq == 0)
        throw ParseError("expected level=value in '" + std::string(item) + "'",
                         start);
      out[std::string(item.substr(0, eq))] =
          parse_number(item.substr(eq + 1), "covariate value");
    }
    start = end + 1;
  }
  if (out.empty()) throw ParseError("empty value map", 0);
  return out;
}

std::string format_fit_table(const OlsFit& fit, int precision) {
  const int d = precision;
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %12s %12s %10s %10s\n", "", "Coef",
                "Std.Err", "t", "P>|t|");
  out += buf;
  for (std::size_t i = 0; i < fit.beta.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-24s %12.*f %12.*f %10.*f %10.*f\n",
                  fit.labels.at(i).c_str(), d, fit.beta[i], d, fit.se[i], d,
                  fit.t_stat[i], d, fit.p_value[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "n = %lld  df_resid = %lld  Res_SS = %.*f  MSE = %.*f\n",
                static_cast<long long>(fit.n),
                static_cast<long long>(fit.df_resid), d, fit.res_ss, d,
                fit.mse);
  out += buf;
  return out;
}

}  // namespace kanon
