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

#include "kanon/equivalence.h"

#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "kanon/errors.h"
#include "test_support.h"

namespace kanon {
namespace {

using testing::random_instance;

TEST(ClassKeyTest, SortsAssignmentsByFactor) {
  ClassKey k{{"Treatment", "A"}, {"Covariate", "3"}};
  EXPECT_EQ(k.to_string(), "(Covariate=3, Treatment=A)");
  EXPECT_EQ(k.level("Treatment"), "A");
  EXPECT_EQ(k.find("Missing"), std::nullopt);
  EXPECT_THROW(k.level("Missing"), SchemaError);
  EXPECT_EQ(k.with("Treatment", "B").level("Treatment"), "B");
}

TEST(ClassKeyTest, RejectsDuplicateFactor) {
  EXPECT_THROW((ClassKey{{"a", "1"}, {"a", "2"}}), SchemaError);
}

TEST(AggregateTest, BalancedMicroCollapsesToSixClassesOfThree) {
  const auto micro = testing::balanced_micro();
  const auto t = aggregate(micro, "Treatment", {"TimeOnApp"});
  EXPECT_EQ(t.n(), 18);
  EXPECT_EQ(t.num_classes(), 6u);
  EXPECT_EQ(k_anonymity(t), 3);
  const auto& row = t.rows().at(ClassKey{{"Treatment", "A"}, {"Covariate", "1"}});
  EXPECT_EQ(row.count, 3);
  // Users XXX1, XXX4, XXX7.
  EXPECT_NEAR(row.sums.at("TimeOnApp"), 1.035051833 + 0.445755940 + 0.690041547,
              1e-12);
  EXPECT_NEAR(t.find_arm("A")->tss.at("TimeOnApp"), 17.90982008989893, 1e-12);
  EXPECT_NEAR(t.find_arm("B")->tss.at("TimeOnApp"), 19.633588912643834, 1e-12);
  EXPECT_TRUE(consistency_issues(t).empty());
}

TEST(AggregateTest, MatchesStoredFixture) {
  const auto t = aggregate(testing::balanced_micro(), "Treatment", {"TimeOnApp"});
  const auto stored = testing::balanced();
  ASSERT_EQ(stored.rows().size(), t.rows().size());
  for (const auto& [key, row] : t.rows()) {
    EXPECT_EQ(stored.rows().at(key).count, row.count);
    EXPECT_DOUBLE_EQ(stored.rows().at(key).sums.at("TimeOnApp"),
                     row.sums.at("TimeOnApp"));
  }
}

TEST(AggregateTest, InvariantToRecordOrder) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto inst = random_instance(rng, 8, 60);
    const auto t1 = aggregate(inst.micro, "Treatment", {"y"});
    std::shuffle(inst.micro.begin(), inst.micro.end(), rng);
    const auto t2 = aggregate(inst.micro, "Treatment", {"y"});
    ASSERT_EQ(t1.rows().size(), t2.rows().size());
    for (const auto& [key, row] : t1.rows()) {
      EXPECT_EQ(t2.rows().at(key).count, row.count);
      EXPECT_NEAR(t2.rows().at(key).sums.at("y"), row.sums.at("y"), 1e-9);
    }
  }
}

TEST(AggregateTest, RejectsMixedFactorSets) {
  std::vector<MicroRecord> micro(2);
  micro[0].assignments = ClassKey{{"Treatment", "A"}, {"x", "1"}};
  micro[0].outcomes = {{"y", 1.0}};
  micro[1].assignments = ClassKey{{"Treatment", "B"}};
  micro[1].outcomes = {{"y", 1.0}};
  EXPECT_THROW(aggregate(micro, "Treatment", {"y"}), SchemaError);
}

TEST(MergeTest, CommutativeAssociativeWithBlankIdentity) {
  std::mt19937_64 rng(12);
  auto inst = random_instance(rng, 30, 90, 2, 2, 3, 3);
  const std::span<const MicroRecord> all(inst.micro);
  const auto third = all.size() / 3;
  const auto a = aggregate(all.subspan(0, third), "Treatment", {"y"});
  const auto b = aggregate(all.subspan(third, third), "Treatment", {"y"});
  const auto c = aggregate(all.subspan(2 * third), "Treatment", {"y"});
  const auto whole = aggregate(all, "Treatment", {"y"});

  auto close = [](const EquivalenceTable& x, const EquivalenceTable& y) {
    if (x.n() != y.n() || x.rows().size() != y.rows().size()) return false;
    for (const auto& [key, row] : x.rows()) {
      auto it = y.rows().find(key);
      if (it == y.rows().end() || it->second.count != row.count) return false;
      if (std::fabs(it->second.sums.at("y") - row.sums.at("y")) > 1e-9)
        return false;
    }
    for (const auto& arm : x.arm_tss())
      if (std::fabs(y.find_arm(arm.level)->tss.at("y") - arm.tss.at("y")) >
          1e-9)
        return false;
    return true;
  };
  EXPECT_TRUE(close(merge(a, b), merge(b, a)));
  EXPECT_TRUE(close(merge(merge(a, b), c), merge(a, merge(b, c))));
  EXPECT_TRUE(close(merge(merge(a, b), c), whole));
  const EquivalenceTable blank(a.schema());
  EXPECT_TRUE(close(merge(a, blank), a));
  EXPECT_TRUE(close(merge(blank, a), a));
}

TEST(MergeTest, RejectsDifferentEndpoints) {
  const EquivalenceTable a(make_schema("T", {"T"}, {"y"}));
  const EquivalenceTable b(make_schema("T", {"T"}, {"z"}));
  EXPECT_THROW(merge(a, b), SchemaError);
}

TEST(ReleaseTest, RejectNamesOffendingClass) {
  const auto t = testing::shifted();
  EXPECT_EQ(k_anonymity(t), 2);
  try {
    release(t, 3, ReleasePolicy::kReject);
    FAIL() << "expected KAnonymityError";
  } catch (const KAnonymityError& e) {
    ASSERT_EQ(e.offending().size(), 1u);
    EXPECT_EQ(e.offending()[0], "(Covariate=3, Treatment=A)");
  }
  EXPECT_NO_THROW(release(t, 2, ReleasePolicy::kReject));
  EXPECT_NO_THROW(release(testing::balanced(), 3, ReleasePolicy::kReject));
}

TEST(ReleaseTest, SuppressDropsClassAndMarksTssStale) {
  const auto t = testing::shifted();
  const auto r = release(t, 3, ReleasePolicy::kSuppress);
  EXPECT_EQ(r.num_classes(), 5u);
  EXPECT_EQ(r.n(), 16);
  EXPECT_TRUE(r.tss_stale());
  EXPECT_EQ(k_anonymity(r), 3);
}

TEST(ReleaseTest, SuppressWithMicroRecomputesTss) {
  const auto micro = testing::shifted_micro();
  const auto t = aggregate(micro, "Treatment", {"TimeOnApp"});
  const auto r = release(t, 3, ReleasePolicy::kSuppress, micro);
  EXPECT_FALSE(r.tss_stale());
  EXPECT_EQ(r.n(), 16);
  // (A, 3) held XXX3 and XXX6.
  const double expected = 17.90982008989893 - 0.818065309 * 0.818065309 -
                          1.351287088 * 1.351287088;
  EXPECT_NEAR(r.find_arm("A")->tss.at("TimeOnApp"), expected, 1e-9);
  EXPECT_TRUE(consistency_issues(r).empty());
}

TEST(ReleaseTest, InvalidK) {
  EXPECT_THROW(release(testing::balanced(), 0, ReleasePolicy::kReject),
               std::invalid_argument);
}

TEST(ConsistencyTest, FlagsTssBelowCauchySchwarzFloor) {
  auto t = testing::balanced();
  t.add_tss("A", "TimeOnApp", -10.0);
  const auto issues = consistency_issues(t);
  ASSERT_FALSE(issues.empty());
  EXPECT_THROW(validate(t), ConsistencyError);
}

TEST(ObservedLevelsTest, SortedDistinct) {
  const auto t = testing::balanced();
  EXPECT_EQ(observed_levels(t, "Covariate"),
            (std::vector<std::string>{"1", "2", "3"}));
  EXPECT_EQ(t.arms(), (std::vector<std::string>{"A", "B"}));
}

TEST(ReleasePolicyTest, RoundTrip) {
  EXPECT_EQ(parse_release_policy(to_string(ReleasePolicy::kSuppress)),
            ReleasePolicy::kSuppress);
  EXPECT_THROW(parse_release_policy("drop"), std::invalid_argument);
}

}  // namespace
}  // namespace kanon
