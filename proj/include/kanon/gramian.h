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

#ifndef KANON_GRAMIAN_H_
#define KANON_GRAMIAN_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kanon/equivalence.h"
#include "kanon/matrix.h"

namespace kanon {

// Numeric interpretation of a factor's text levels.
using LevelValues = std::map<std::string, double, std::less<>>;

// One design-matrix column, evaluated per equivalence class.
class Term {
 public:
  enum class Kind { kDummy, kNumeric, kInteraction };

  static Term Dummy(std::string factor, std::string level);
  static Term Numeric(std::string factor, LevelValues values);
  static Term Interaction(std::vector<Term> parts);

  Kind kind() const { return kind_; }
  const std::string& factor() const { return factor_; }
  const std::string& level() const { return level_; }
  const LevelValues& values() const { return values_; }
  const std::vector<Term>& parts() const { return parts_; }

  // "Treatment_B", "Covariate", "Treatment_B:Covariate_2".
  std::string label() const;

  // Column value for every subject in the class. Throws DesignError when a
  // numeric map has no entry for the class's level.
  double evaluate(const ClassKey& key) const;

  bool dummy_only() const;
  bool has_numeric() const;
  // Factors touched by this term (recursively, in order of appearance).
  std::vector<std::string> referenced_factors() const;

 private:
  Kind kind_ = Kind::kDummy;
  std::string factor_;
  std::string level_;
  LevelValues values_;
  std::vector<Term> parts_;
};

struct ArmFilter {
  std::string factor;
  std::string level;
};

struct DesignSpec {
  bool intercept = true;
  std::vector<Term> terms;
  std::optional<ArmFilter> arm_filter;
  std::string endpoint;

  std::size_t num_columns() const { return terms.size() + (intercept ? 1 : 0); }
  std::vector<std::string> labels() const;
};

// Sufficient statistics for one regression.
struct GramianSystem {
  Matrix xtx;
  Vector xty;
  std::int64_t n = 0;
  double tss = 0.0;
  std::vector<std::string> labels;

  std::size_t p() const { return xty.size(); }
  // Leading sub-system over the first `cols` columns (nested model).
  GramianSystem leading(std::size_t cols) const;
};

// Dummy-coded (and interaction-of-dummy) design. Every X'X entry is a sum of
// class counts and every X'y entry a sum of class sums; cost is O(M p^2) in
// the number of classes M.
GramianSystem build_dummy(const EquivalenceTable& t, const DesignSpec& spec);

// Designs with numeric covariates: count-weighted moment sums of the level
// values. Rejects numeric factors whose cardinality reaches the in-scope n.
GramianSystem build_numeric(const EquivalenceTable& t, const DesignSpec& spec);

// Dispatches to build_dummy or build_numeric.
GramianSystem build(const EquivalenceTable& t, const DesignSpec& spec);

// Subtracts the count-weighted mean of `raw` over all rows (every arm).
LevelValues demean_values(const EquivalenceTable& t, std::string_view factor,
                          const LevelValues& raw);

// Parses each observed level label of `factor` as a number.
LevelValues values_from_labels(const EquivalenceTable& t,
                               std::string_view factor);

// Reference levels default to the lexicographically smallest observed level.
using ReferenceLevels = std::map<std::string, std::string, std::less<>>;

std::string reference_level(const EquivalenceTable& t, std::string_view factor,
                            const ReferenceLevels& overrides = {});

// Dummy terms for every non-reference level of `factor`.
std::vector<Term> dummy_terms(const EquivalenceTable& t,
                              std::string_view factor,
                              const ReferenceLevels& overrides = {});

// Intercept plus dummy main effects for each factor, in the order given.
DesignSpec main_effects_design(const EquivalenceTable& t,
                               const std::vector<std::string>& factors,
                               const std::string& endpoint,
                               const ReferenceLevels& overrides = {});

// Main effects of a and b followed by every a x b dummy product (a levels
// outer). The main-effects design is its leading block.
DesignSpec full_interaction_design(const EquivalenceTable& t,
                                   const std::string& factor_a,
                                   const std::string& factor_b,
                                   const std::string& endpoint,
                                   const ReferenceLevels& overrides = {});

}  // namespace kanon

#endif  // KANON_GRAMIAN_H_
