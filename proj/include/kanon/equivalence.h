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

#ifndef KANON_EQUIVALENCE_H_
#define KANON_EQUIVALENCE_H_

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kanon {

struct Assignment {
  std::string factor;
  std::string level;

  auto operator<=>(const Assignment&) const = default;
};

// Identity of an equivalence class: one level per quasi-identifier. Stored in
// canonical order (by factor name) so equal keys compare equal regardless of
// construction order.
class ClassKey {
 public:
  ClassKey() = default;
  // Throws SchemaError on duplicate factor names.
  explicit ClassKey(std::vector<Assignment> assignments);
  ClassKey(std::initializer_list<Assignment> assignments)
      : ClassKey(std::vector<Assignment>(assignments)) {}

  const std::vector<Assignment>& assignments() const { return assignments_; }
  std::size_t size() const { return assignments_.size(); }

  std::optional<std::string_view> find(std::string_view factor) const;
  // Throws SchemaError when the factor is absent.
  const std::string& level(std::string_view factor) const;

  std::vector<std::string> factors() const;

  // Copy with one factor's level replaced (or added).
  ClassKey with(std::string_view factor, std::string_view level) const;

  // "(Covariate=3, Treatment=A)"
  std::string to_string() const;

  auto operator<=>(const ClassKey&) const = default;

 private:
  std::vector<Assignment> assignments_;
};

using EndpointValues = std::map<std::string, double, std::less<>>;

struct ClassRow {
  ClassKey key;
  std::int64_t count = 0;
  EndpointValues sums;

  bool operator==(const ClassRow&) const = default;
};

// Per-arm total sum of squares sidecar. Only kept per treatment arm, never per
// class, so the endpoint's within-class spread is not exposed.
struct ArmTss {
  std::string factor;
  std::string level;
  EndpointValues tss;

  bool operator==(const ArmTss&) const = default;
};

struct Schema {
  std::string treatment_factor;
  // Sorted, and always contains treatment_factor.
  std::vector<std::string> factors;
  std::vector<std::string> endpoints;
  // Optional experiment identifier; used to route telemetry.
  std::string test_id;

  bool operator==(const Schema&) const = default;
};

// Normalizes factor order and makes sure the treatment factor is present.
Schema make_schema(std::string treatment_factor,
                   std::vector<std::string> factors,
                   std::vector<std::string> endpoints,
                   std::string test_id = {});

class EquivalenceTable {
 public:
  EquivalenceTable() = default;
  explicit EquivalenceTable(Schema schema);

  const Schema& schema() const { return schema_; }
  const std::string& treatment_factor() const {
    return schema_.treatment_factor;
  }
  const std::vector<std::string>& endpoints() const {
    return schema_.endpoints;
  }
  const std::vector<std::string>& factors() const { return schema_.factors; }

  // Canonical (lexicographic by key) ordering.
  const std::map<ClassKey, ClassRow>& rows() const { return rows_; }
  // Ordered by arm level.
  const std::vector<ArmTss>& arm_tss() const { return arm_tss_; }
  std::vector<std::string> arms() const;
  const ArmTss* find_arm(std::string_view level) const;

  std::int64_t n() const { return n_; }
  std::size_t num_classes() const { return rows_.size(); }

  // Set when rows were suppressed without micro-data; the TSS sidecar no
  // longer matches the rows and inference must refuse the table.
  bool tss_stale() const { return tss_stale_; }
  void mark_tss_stale() { tss_stale_ = true; }

  bool has_endpoint(std::string_view endpoint) const;

  // Mutators keep n equal to the sum of counts. Keys must cover exactly the
  // schema's factor set.
  ClassRow& upsert_row(const ClassKey& key);
  void add_count(const ClassKey& key, std::int64_t delta);
  void add_sum(const ClassKey& key, std::string_view endpoint, double delta);
  ArmTss& upsert_arm(std::string_view level);
  void add_tss(std::string_view level, std::string_view endpoint, double delta);
  void erase_row(const ClassKey& key);

  bool operator==(const EquivalenceTable&) const = default;

 private:
  void check_key(const ClassKey& key) const;
  void check_endpoint(std::string_view endpoint) const;

  Schema schema_;
  std::map<ClassKey, ClassRow> rows_;
  std::vector<ArmTss> arm_tss_;
  std::int64_t n_ = 0;
  bool tss_stale_ = false;
};

struct MicroRecord {
  std::string user_id;
  ClassKey assignments;
  EndpointValues outcomes;
};

// Group-by over micro-data in a single pass. The factor set is taken from the
// first record (or is just the treatment factor when the input is empty).
EquivalenceTable aggregate(std::span<const MicroRecord> micro,
                           const std::string& treatment_factor,
                           const std::vector<std::string>& endpoints);

EquivalenceTable aggregate(std::span<const MicroRecord> micro,
                           const Schema& schema);

// Pointwise sum. A table with no rows and no arms acts as the identity for any
// schema with the same treatment factor and endpoints.
EquivalenceTable merge(const EquivalenceTable& a, const EquivalenceTable& b);

// Minimum positive class count; 0 for a table with no populated class.
std::int64_t k_anonymity(const EquivalenceTable& t);

enum class ReleasePolicy { kReject, kSuppress };

// Reject throws KAnonymityError naming the offending classes. Suppress drops
// classes with count < k and marks the TSS sidecar stale, since per-arm sums
// of squares cannot be reduced exactly without the micro-data.
EquivalenceTable release(const EquivalenceTable& t, std::int64_t k,
                         ReleasePolicy policy);

// Suppress variant that re-aggregates the survivors from micro-data, giving
// exact n and arm TSS. Reject behaves as above.
EquivalenceTable release(const EquivalenceTable& t, std::int64_t k,
                         ReleasePolicy policy,
                         std::span<const MicroRecord> micro);

// Read-time invariant checks. Returns human-readable findings: mismatched n,
// populated sums on empty classes, negative TSS, and arms whose TSS is below
// (sum)^2/count (impossible by Cauchy-Schwarz).
std::vector<std::string> consistency_issues(const EquivalenceTable& t);

// Throws ConsistencyError listing every issue.
void validate(const EquivalenceTable& t);

// Every level seen for `factor` across rows with count > 0, sorted.
std::vector<std::string> observed_levels(const EquivalenceTable& t,
                                         std::string_view factor);

std::string to_string(ReleasePolicy policy);
ReleasePolicy parse_release_policy(std::string_view text);

}  // namespace kanon

#endif  // KANON_EQUIVALENCE_H_
