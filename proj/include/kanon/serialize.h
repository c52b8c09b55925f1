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

#ifndef KANON_SERIALIZE_H_
#define KANON_SERIALIZE_H_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kanon/adjust.h"
#include "kanon/equivalence.h"
#include "kanon/gramian.h"
#include "kanon/interaction.h"
#include "kanon/ols.h"

namespace kanon {

// Design document:
//
//   {
//     "endpoint": "TimeOnApp",              // default: table's first endpoint
//     "intercept": true,
//     "references": {"Covariate": "1"},     // dummy reference overrides
//     "main_effects": ["Treatment", "Covariate"],
//     "interactions": [["Treatment", "Covariate"]],
//     "terms": [
//       {"dummy": {"factor": "Treatment", "level": "B"}},
//       {"numeric": {"factor": "Covariate", "values": {"1": 1}, "demean": true}},
//       {"interaction": [<term>, <term>]}
//     ],
//     "arm_filter": {"factor": "Treatment", "level": "A"}
//   }
//
// "main_effects" and "interactions" expand to dummy terms using the levels in
// `context`, ahead of any explicit "terms". Numeric terms without "values"
// parse the level labels.
DesignSpec design_spec_from_json(const nlohmann::json& j,
                                 const EquivalenceTable& context);

nlohmann::json to_json(const Term& term);
nlohmann::json to_json(const DesignSpec& spec);
nlohmann::json to_json(const GramianSystem& g);
nlohmann::json to_json(const OlsFit& fit);
nlohmann::json to_json(const PartialFResult& r);
nlohmann::json to_json(const std::vector<PartialFResult>& results,
                       Correction method, double alpha);
nlohmann::json to_json(const AdjustmentResult& r);

// Parses "1=1,2=2,3=3".
LevelValues parse_value_map(std::string_view text);

// Fixed-width coefficient table for terminals.
std::string format_fit_table(const OlsFit& fit, int precision = 4);

}  // namespace kanon

#endif  // KANON_SERIALIZE_H_
