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

#include "kanon/telemetry.h"

#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "kanon/errors.h"
#include "kanon/table_io.h"
#include "test_support.h"

namespace kanon {
namespace {

Schema exp_schema() {
  return make_schema("Treatment", {"Treatment", "Covariate"}, {"TimeOnApp"},
                     "exp42");
}

TEST(ParseEventTest, Assign) {
  const auto e = parse_event("A|exp42|B|Covariate=3");
  EXPECT_EQ(e.kind, TelemetryEvent::Kind::kAssign);
  EXPECT_EQ(e.test_id, "exp42");
  EXPECT_EQ(e.arm, "B");
  ASSERT_EQ(e.covariates.size(), 1u);
  EXPECT_EQ(e.covariates[0].factor, "Covariate");
  EXPECT_EQ(e.covariates[0].level, "3");
}

TEST(ParseEventTest, OutcomeWithCarriageReturn) {
  const auto e = parse_event("O|exp42|A|Covariate=1|TimeOnApp|4|2\r");
  EXPECT_EQ(e.kind, TelemetryEvent::Kind::kOutcome);
  EXPECT_EQ(e.endpoint, "TimeOnApp");
  EXPECT_DOUBLE_EQ(e.prior_total, 4.0);
  EXPECT_DOUBLE_EQ(e.delta, 2.0);
}

TEST(ParseEventTest, RoundTripsThroughFormat) {
  const auto e = parse_event("O|t|A|x=1,z=q|y|0.125|-0.5");
  EXPECT_EQ(parse_event(format_event(e)), e);
}

TEST(ParseEventTest, ReportsByteOffset) {
  try {
    parse_event("O|exp42|A|Covariate=1|TimeOnApp|4|2x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 35u);
  }
  try {
    parse_event("A|exp42|A|Covariate");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 10u);
  }
}

TEST(ParseEventTest, RejectsBadInput) {
  EXPECT_THROW(parse_event("X|t|A|"), ParseError);
  EXPECT_THROW(parse_event("A|t|A"), ParseError);
  EXPECT_THROW(parse_event("A||A|"), ParseError);
  EXPECT_THROW(parse_event("O|t|A||y|1"), ParseError);
  EXPECT_THROW(parse_event("O|t|A||y|-1|2"), RangeError);
  EXPECT_THROW(parse_event("O|t|A||y|0|nan"), RangeError);
  EXPECT_THROW(parse_event("O|t|A||y|0|1e999"), RangeError);
  EXPECT_THROW(parse_event("A|t|A|x=1,x=2"), ParseError);
}

TEST(TssIncrementTest, FourThenTwo) {
  EXPECT_DOUBLE_EQ(tss_increment(0.0, 4.0), 16.0);
  EXPECT_DOUBLE_EQ(tss_increment(4.0, 2.0), 20.0);
  EXPECT_DOUBLE_EQ(tss_increment(0.0, 4.0) + tss_increment(4.0, 2.0), 36.0);
}

TEST(ApplyEventTest, AssignThenTwoSessions) {
  EquivalenceTable t(exp_schema());
  t = apply_event(t, parse_event("A|exp42|A|Covariate=1"));
  t = apply_event(t, parse_event("O|exp42|A|Covariate=1|TimeOnApp|0|4"));
  t = apply_event(t, parse_event("O|exp42|A|Covariate=1|TimeOnApp|4|2"));
  const ClassKey key{{"Treatment", "A"}, {"Covariate", "1"}};
  EXPECT_EQ(t.rows().at(key).count, 1);
  EXPECT_DOUBLE_EQ(t.rows().at(key).sums.at("TimeOnApp"), 6.0);
  EXPECT_DOUBLE_EQ(t.find_arm("A")->tss.at("TimeOnApp"), 36.0);
  EXPECT_EQ(t.n(), 1);
}

TEST(ApplyEventTest, IsPure) {
  const EquivalenceTable t(exp_schema());
  const auto u = apply_event(t, parse_event("A|exp42|A|Covariate=1"));
  EXPECT_EQ(t.n(), 0);
  EXPECT_EQ(u.n(), 1);
}

TEST(ApplyEventTest, RejectsMisroutedEvents) {
  EquivalenceTable t(exp_schema());
  EXPECT_THROW(apply_event_in_place(t, parse_event("A|other|A|Covariate=1")),
               SchemaError);
  EXPECT_THROW(apply_event_in_place(t, parse_event("A|exp42|A|Region=EU")),
               SchemaError);
  EXPECT_THROW(
      apply_event_in_place(t, parse_event("O|exp42|A|Covariate=1|Clicks|0|1")),
      SchemaError);
}

TEST(ReplayTest, FixtureLogReproducesBatchAggregate) {
  EquivalenceTable t(read_schema(testing::data_path("exp42_schema.manifest.json")));
  std::ifstream in(testing::data_path("exp42_events.log"));
  const auto stats = replay(t, in);
  EXPECT_EQ(stats.assigns, 18u);
  EXPECT_EQ(stats.outcomes, 36u);
  EXPECT_TRUE(stats.warnings.empty());
  const auto batch = testing::balanced();
  for (const auto& [key, row] : batch.rows()) {
    EXPECT_EQ(t.rows().at(key).count, row.count);
    EXPECT_NEAR(t.rows().at(key).sums.at("TimeOnApp"), row.sums.at("TimeOnApp"),
                1e-9);
  }
  for (const auto& arm : batch.arm_tss())
    EXPECT_NEAR(t.find_arm(arm.level)->tss.at("TimeOnApp"),
                arm.tss.at("TimeOnApp"), 1e-9);
}

TEST(ReplayTest, ErrorsCarryLineNumber) {
  EquivalenceTable t(exp_schema());
  std::istringstream in("A|exp42|A|Covariate=1\n\nA|exp42|A|Covariate\n");
  try {
    replay(t, in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos)
        << e.what();
  }
}

TEST(TableIngestorTest, ConcurrentAppliesMatchSequential) {
  const Schema schema = exp_schema();
  std::vector<std::string> lines;
  for (int i = 0; i < 400; ++i) {
    const std::string arm = i % 2 ? "A" : "B";
    const std::string cov = "Covariate=" + std::to_string(i % 3 + 1);
    lines.push_back("A|exp42|" + arm + "|" + cov);
    lines.push_back("O|exp42|" + arm + "|" + cov + "|TimeOnApp|0|" +
                    std::to_string(0.25 * (i % 7)));
  }
  TableIngestor ingestor{EquivalenceTable(schema)};
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < lines.size(); i += 4) ingestor.apply_line(lines[i]);
    });
  for (auto& th : workers) th.join();
  EquivalenceTable seq(schema);
  for (const auto& l : lines) apply_event_in_place(seq, parse_event(l));
  const auto snap = ingestor.snapshot();
  EXPECT_EQ(snap.n(), seq.n());
  for (const auto& [key, row] : seq.rows()) {
    EXPECT_EQ(snap.rows().at(key).count, row.count);
    EXPECT_DOUBLE_EQ(snap.rows().at(key).sums.at("TimeOnApp"),
                     row.sums.at("TimeOnApp"));
  }
}

}  // namespace
}  // namespace kanon
