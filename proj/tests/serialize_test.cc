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

#include <gtest/gtest.h>

#include "kanon/errors.h"
#include "test_support.h"

namespace kanon {
namespace {

using nlohmann::json;

TEST(DesignSpecJsonTest, MainEffectsAndInteractions) {
  const auto t = testing::balanced();
  const auto spec = design_spec_from_json(json::parse(R"({
    "main_effects": ["Treatment", "Covariate"],
    "interactions": [["Treatment", "Covariate"]]
  })"),
                                          t);
  EXPECT_EQ(spec.endpoint, "TimeOnApp");
  EXPECT_TRUE(spec.intercept);
  EXPECT_EQ(spec.labels(),
            full_interaction_design(t, "Treatment", "Covariate", "TimeOnApp")
                .labels());
}

TEST(DesignSpecJsonTest, ReferencesNumericAndArmFilter) {
  const auto t = testing::shifted();
  const auto spec = design_spec_from_json(json::parse(R"({
    "endpoint": "TimeOnApp",
    "references": {"Treatment": "B"},
    "main_effects": ["Treatment"],
    "terms": [{"numeric": {"factor": "Covariate", "demean": true}}],
    "arm_filter": {"factor": "Treatment", "level": "A"}
  })"),
                                          t);
  ASSERT_EQ(spec.terms.size(), 2u);
  EXPECT_EQ(spec.terms[0].label(), "Treatment_A");
  EXPECT_NEAR(spec.terms[1].values().at("1"), 1 - 35.0 / 18, 1e-15);
  ASSERT_TRUE(spec.arm_filter.has_value());
  EXPECT_EQ(spec.arm_filter->level, "A");
}

TEST(DesignSpecJsonTest, ExplicitValuesAndNestedInteraction) {
  const auto t = testing::balanced();
  const auto spec = design_spec_from_json(json::parse(R"({
    "terms": [
      {"dummy": {"factor": "Treatment", "level": "B"}},
      {"numeric": {"factor": "Covariate", "values": {"1": 0, "2": 5, "3": 10}}},
      {"interaction": [{"dummy": {"factor": "Treatment", "level": "B"}},
                       {"numeric": {"factor": "Covariate",
                                    "values": {"1": 0, "2": 5, "3": 10}}}]}
    ]
  })"),
                                          t);
  EXPECT_EQ(spec.labels(), (std::vector<std::string>{
                               "Intercept", "Treatment_B", "Covariate",
                               "Treatment_B:Covariate"}));
  const auto back = design_spec_from_json(to_json(spec), t);
  EXPECT_EQ(back.labels(), spec.labels());
  EXPECT_EQ(back.terms[1].values(), spec.terms[1].values());
}

TEST(DesignSpecJsonTest, MalformedDocuments) {
  const auto t = testing::balanced();
  EXPECT_THROW(design_spec_from_json(json::parse(R"({"terms": [{"bogus": 1}]})"), t),
               DesignError);
  EXPECT_THROW(design_spec_from_json(json::parse(R"({"terms": [{"dummy": {}}]})"), t),
               DesignError);
  EXPECT_THROW(design_spec_from_json(json::parse(R"({"interactions": [["Treatment"]]})"), t),
               DesignError);
}

TEST(FitJsonTest, CarriesCoefficientsAndSums) {
  const auto t = testing::balanced();
  const auto fit = solve(build(t, main_effects_design(t, {"Treatment", "Covariate"},
                                                      "TimeOnApp")));
  const json j = to_json(fit);
  EXPECT_EQ(j["coefficients"].size(), 4u);
  EXPECT_EQ(j["coefficients"][3]["label"], "Covariate_3");
  EXPECT_DOUBLE_EQ(j["beta"][1].get<double>(), fit.beta[1]);
  EXPECT_EQ(j["df_resid"], 14);
  EXPECT_EQ(j["xtx_inv"].size(), 4u);
}

TEST(ScreenReportJsonTest, DiagnosticsOmitStatistics) {
  PartialFResult ok;
  ok.pair = {"a", "b"};
  ok.p_raw = ok.p_adjusted = 0.01;
  ok.rejected = true;
  PartialFResult bad;
  bad.pair = {"a", "c"};
  bad.diagnostic = "sparse-cell: ...";
  const json j = to_json(std::vector<PartialFResult>{ok, bad},
                         Correction::kBenjaminiHochberg, 0.05);
  EXPECT_EQ(j["family_size"], 1);
  EXPECT_EQ(j["rejections"], 1);
  EXPECT_EQ(j["method"], "bh");
  EXPECT_FALSE(j["results"][1].contains("f"));
  EXPECT_EQ(j["results"][1]["diagnostic"], "sparse-cell: ...");
}

TEST(AdjustmentJsonTest, PateBlockOnlyWhenAttached) {
  const auto t = testing::shifted();
  auto r = adjust(t, "Covariate", values_from_labels(t, "Covariate"));
  EXPECT_FALSE(to_json(r).contains("var_pate"));
  attach_pate(r, t);
  const json j = to_json(r);
  EXPECT_NEAR(j["var_pate"].get<double>(), 0.0991108266, 1e-10);
  EXPECT_TRUE(j["auxiliary"].contains("welch_satterthwaite_df"));
}

TEST(ParseValueMapTest, Basic) {
  const auto v = parse_value_map("1=1.5,2=-2,hi=3e2");
  EXPECT_EQ(v.size(), 3u);
  EXPECT_DOUBLE_EQ(v.at("hi"), 300.0);
  EXPECT_THROW(parse_value_map("1"), ParseError);
  EXPECT_THROW(parse_value_map(""), ParseError);
  EXPECT_THROW(parse_value_map("1=x"), ParseError);
}

TEST(FormatFitTableTest, Precision) {
  const auto t = testing::balanced();
  const auto fit = solve(build(t, main_effects_design(t, {"Treatment", "Covariate"},
                                                      "TimeOnApp")));
  EXPECT_NE(format_fit_table(fit).find("0.6583"), std::string::npos);
  EXPECT_NE(format_fit_table(fit, 6).find("0.658343"), std::string::npos);
}

}  // namespace
}  // namespace kanon
