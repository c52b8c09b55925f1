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

#include "kanon/gramian.h"

#include <algorithm>
#include <charconv>
#include <functional>
#include <cmath>
#include <set>

#include "kanon/errors.h"

namespace kanon {

Term Term::Dummy(std::string factor, std::string level) {
  Term t;
  t.kind_ = Kind::kDummy;
  t.factor_ = std::move(factor);
  t.level_ = std::move(level);
  return t;
}

Term Term::Numeric(std::string factor, LevelValues values) {
  Term t;
  t.kind_ = Kind::kNumeric;
  t.factor_ = std::move(factor);
  t.values_ = std::move(values);
  return t;
}

Term Term::Interaction(std::vector<Term> parts) {
  if (parts.size() < 2)
    throw DesignError("an interaction needs at least two parts");
  Term t;
  t.kind_ = Kind::kInteraction;
  t.parts_ = std::move(parts);
  return t;
}

std::string Term::label() const {
  switch (kind_) {
    case Kind::kDummy:
      return factor_ + "_" + level_;
    case Kind::kNumeric:
      return factor_;
    case Kind::kInteraction: {
      std::string out;
      for (std::size_t i = 0; i < parts_.size(); ++i) {
        if (i) out += ":";
        out += parts_[i].label();
      }
      return out;
    }
  }
  return {};
}

double Term::evaluate(const ClassKey& key) const {
  switch (kind_) {
    case Kind::kDummy:
      return key.level(factor_) == level_ ? 1.0 : 0.0;
    case Kind::kNumeric: {
      const std::string& level = key.level(factor_);
      auto it = values_.find(level);
      if (it == values_.end())
        throw DesignError("level '" + level + "' of factor '" + factor_ +
                          "' is missing from the value map");
      return it->second;
    }
    case Kind::kInteraction: {
      double v = 1.0;
      for (const auto& p : parts_) v *= p.evaluate(key);
      return v;
    }
  }
  return 0.0;
}

bool Term::dummy_only() const {
  if (kind_ == Kind::kDummy) return true;
  if (kind_ == Kind::kNumeric) return false;
  return std::all_of(parts_.begin(), parts_.end(),
                     [](const Term& p) { return p.dummy_only(); });
}

bool Term::has_numeric() const {
  if (kind_ == Kind::kNumeric) return true;
  return std::any_of(parts_.begin(), parts_.end(),
                     [](const Term& p) { return p.has_numeric(); });
}

std::vector<std::string> Term::referenced_factors() const {
  if (kind_ != Kind::kInteraction) return {factor_};
  std::vector<std::string> out;
  for (const auto& p : parts_)
    for (auto& f : p.referenced_factors()) out.push_back(std::move(f));
  return out;
}

std::vector<std::string> DesignSpec::labels() const {
  std::vector<std::string> out;
  if (intercept) out.push_back("Intercept");
  for (const auto& t : terms) out.push_back(t.label());
  return out;
}

GramianSystem GramianSystem::leading(std::size_t cols) const {
  if (cols > p()) throw std::out_of_range("leading block larger than system");
  GramianSystem out;
  out.xtx = xtx.leading_block(cols);
  out.xty.assign(xty.begin(), xty.begin() + static_cast<std::ptrdiff_t>(cols));
  out.n = n;
  out.tss = tss;
  out.labels.assign(labels.begin(),
                    labels.begin() + static_cast<std::ptrdiff_t>(cols));
  return out;
}

namespace {

bool in_scope(const ClassKey& key, const DesignSpec& spec) {
  return !spec.arm_filter ||
         key.level(spec.arm_filter->factor) == spec.arm_filter->level;
}

void check_common(const EquivalenceTable& t, const DesignSpec& spec) {
  if (!t.has_endpoint(spec.endpoint))
    throw DesignError("endpoint '" + spec.endpoint + "' not in table");
  if (t.tss_stale())
    throw StaleTssError(
        "TSS sidecar is stale after suppression; re-aggregate from micro-data "
        "before running inference");
  const auto& factors = t.factors();
  auto known = [&](const std::string& f) {
    return std::find(factors.begin(), factors.end(), f) != factors.end();
  };
  if (spec.arm_filter) {
    if (spec.arm_filter->factor != t.treatment_factor())
      throw DesignError("arm filter must use the treatment factor '" +
                        t.treatment_factor() +
                        "'; sums of squares exist per arm only");
  }
  // Interactions may only use factors already introduced by earlier terms.
  std::set<std::string> declared;
  for (const auto& term : spec.terms) {
    for (const auto& f : term.referenced_factors())
      if (!known(f)) throw DesignError("unknown factor '" + f + "'");
    if (term.kind() == Term::Kind::kInteraction) {
      for (const auto& f : term.referenced_factors())
        if (!declared.contains(f))
          throw DesignError("interaction " + term.label() +
                            " references undeclared factor '" + f + "'");
    } else {
      declared.insert(term.factor());
    }
  }
}

void check_dummy_levels(const EquivalenceTable& t, const DesignSpec& spec) {
  std::map<std::string, std::set<std::string>> main_levels;
  std::function<void(const Term&, bool)> visit = [&](const Term& term,
                                                     bool main) {
    if (term.kind() == Term::Kind::kDummy) {
      auto levels = observed_levels(t, term.factor());
      if (!std::binary_search(levels.begin(), levels.end(), term.level()))
        throw DesignError("level '" + term.level() + "' of factor '" +
                          term.factor() + "' does not occur in the table");
      if (main) main_levels[term.factor()].insert(term.level());
    } else if (term.kind() == Term::Kind::kInteraction) {
      for (const auto& p : term.parts()) visit(p, false);
    }
  };
  for (const auto& term : spec.terms) visit(term, true);
  if (!spec.intercept) return;
  for (const auto& [factor, levels] : main_levels) {
    if (levels.size() >= observed_levels(t, factor).size())
      throw DesignError("factor '" + factor +
                        "' has a dummy for every level; omit a reference "
                        "level when the intercept is present");
  }
}

void check_cardinality(const EquivalenceTable& t, const DesignSpec& spec,
                       std::int64_t n_scope) {
  std::set<std::string> numeric;
  std::function<void(const Term&)> visit = [&](const Term& term) {
    if (term.kind() == Term::Kind::kNumeric) numeric.insert(term.factor());
    for (const auto& p : term.parts()) visit(p);
  };
  for (const auto& term : spec.terms) visit(term);
  for (const auto& factor : numeric) {
    std::set<std::string> levels;
    for (const auto& [key, row] : t.rows())
      if (row.count > 0 && in_scope(key, spec))
        levels.insert(key.level(factor));
    if (n_scope > 1 && static_cast<std::int64_t>(levels.size()) >= n_scope)
      throw DataMinimizationError(
          "numeric factor '" + factor + "' has " +
          std::to_string(levels.size()) + " distinct levels for " +
          std::to_string(n_scope) +
          " subjects; coarsen it so classes pool several subjects");
  }
}

GramianSystem accumulate(const EquivalenceTable& t, const DesignSpec& spec) {
  const std::size_t p = spec.num_columns();
  if (p == 0) throw DesignError("design has no columns");
  GramianSystem g;
  g.xtx = Matrix(p, p);
  g.xty.assign(p, 0.0);
  g.labels = spec.labels();
  Vector x(p);
  for (const auto& [key, row] : t.rows()) {
    if (!in_scope(key, spec)) continue;
    std::size_t c = 0;
    if (spec.intercept) x[c++] = 1.0;
    for (const auto& term : spec.terms) x[c++] = term.evaluate(key);
    const double count = static_cast<double>(row.count);
    const double sum = row.sums.find(spec.endpoint)->second;
    for (std::size_t i = 0; i < p; ++i) {
      if (x[i] == 0.0) continue;
      g.xty[i] += x[i] * sum;
      for (std::size_t j = i; j < p; ++j) g.xtx(i, j) += x[i] * x[j] * count;
    }
    g.n += row.count;
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < i; ++j) g.xtx(i, j) = g.xtx(j, i);
  if (g.n == 0) throw DesignError("design scope contains no subjects");

  for (const auto& arm : t.arm_tss()) {
    if (spec.arm_filter && arm.level != spec.arm_filter->level) continue;
    g.tss += arm.tss.at(spec.endpoint);
  }
  return g;
}

}  // namespace

GramianSystem build_dummy(const EquivalenceTable& t, const DesignSpec& spec) {
  check_common(t, spec);
  for (const auto& term : spec.terms)
    if (!term.dummy_only())
      throw DesignError("term " + term.label() +
                        " is not a dummy; use build_numeric");
  check_dummy_levels(t, spec);
  return accumulate(t, spec);
}

GramianSystem build_numeric(const EquivalenceTable& t, const DesignSpec& spec) {
  check_common(t, spec);
  if (std::none_of(spec.terms.begin(), spec.terms.end(),
                   [](const Term& term) { return term.has_numeric(); }))
    throw DesignError("design has no numeric term; use build_dummy");
  GramianSystem g = accumulate(t, spec);
  check_cardinality(t, spec, g.n);
  return g;
}

GramianSystem build(const EquivalenceTable& t, const DesignSpec& spec) {
  const bool numeric = std::any_of(spec.terms.begin(), spec.terms.end(),
                                   [](const Term& x) { return x.has_numeric(); });
  return numeric ? build_numeric(t, spec) : build_dummy(t, spec);
}

LevelValues demean_values(const EquivalenceTable& t, std::string_view factor,
                          const LevelValues& raw) {
  const auto& factors = t.factors();
  if (std::find(factors.begin(), factors.end(), factor) == factors.end())
    throw DesignError("unknown factor '" + std::string(factor) + "'");
  if (t.n() <= 0) throw DesignError("cannot demean over an empty table");
  double weighted = 0.0;
  for (const auto& [key, row] : t.rows()) {
    if (row.count == 0) continue;
    const std::string& level = key.level(factor);
    auto it = raw.find(level);
    if (it == raw.end())
      throw DesignError("level '" + level + "' of factor '" +
                        std::string(factor) + "' is missing from the value map");
    weighted += it->second * static_cast<double>(row.count);
  }
  const double mean = weighted / static_cast<double>(t.n());
  LevelValues out;
  for (const auto& [level, v] : raw) out[level] = v - mean;
  return out;
}

LevelValues values_from_labels(const EquivalenceTable& t,
                               std::string_view factor) {
  LevelValues out;
  for (const auto& level : observed_levels(t, factor)) {
    double v = 0.0;
    auto [ptr, ec] =
        std::from_chars(level.data(), level.data() + level.size(), v);
    if (ec != std::errc() || ptr != level.data() + level.size() ||
        !std::isfinite(v))
      throw DesignError("level '" + level + "' of factor '" +
                        std::string(factor) +
                        "' is not numeric; supply an explicit value map");
    out[level] = v;
  }
  return out;
}

std::string reference_level(const EquivalenceTable& t, std::string_view factor,
                            const ReferenceLevels& overrides) {
  auto levels = observed_levels(t, factor);
  if (levels.empty())
    throw DesignError("factor '" + std::string(factor) + "' has no levels");
  if (auto it = overrides.find(factor); it != overrides.end()) {
    if (!std::binary_search(levels.begin(), levels.end(), it->second))
      throw DesignError("reference level '" + it->second +
                        "' does not occur for factor '" + std::string(factor) +
                        "'");
    return it->second;
  }
  return levels.front();
}

std::vector<Term> dummy_terms(const EquivalenceTable& t,
                              std::string_view factor,
                              const ReferenceLevels& overrides) {
  const std::string ref = reference_level(t, factor, overrides);
  std::vector<Term> out;
  for (const auto& level : observed_levels(t, factor))
    if (level != ref) out.push_back(Term::Dummy(std::string(factor), level));
  return out;
}

DesignSpec main_effects_design(const EquivalenceTable& t,
                               const std::vector<std::string>& factors,
                               const std::string& endpoint,
                               const ReferenceLevels& overrides) {
  DesignSpec spec;
  spec.endpoint = endpoint;
  for (const auto& f : factors)
    for (auto& term : dummy_terms(t, f, overrides))
      spec.terms.push_back(std::move(term));
  return spec;
}

DesignSpec full_interaction_design(const EquivalenceTable& t,
                                   const std::string& factor_a,
                                   const std::string& factor_b,
                                   const std::string& endpoint,
                                   const ReferenceLevels& overrides) {
  if (factor_a == factor_b)
    throw DesignError("interaction needs two distinct factors");
  DesignSpec spec =
      main_effects_design(t, {factor_a, factor_b}, endpoint, overrides);
  const auto a_terms = dummy_terms(t, factor_a, overrides);
  const auto b_terms = dummy_terms(t, factor_b, overrides);
  for (const auto& a : a_terms)
    for (const auto& b : b_terms) spec.terms.push_back(Term::Interaction({a, b}));
  return spec;
}

}  // namespace kanon
