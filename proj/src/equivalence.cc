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
#include <cmath>
#include <set>
#include <sstream>

#include "kanon/errors.h"

namespace kanon {

ClassKey::ClassKey(std::vector<Assignment> assignments)
    : assignments_(std::move(assignments)) {
  std::sort(assignments_.begin(), assignments_.end());
  for (std::size_t i = 1; i < assignments_.size(); ++i) {
    if (assignments_[i].factor == assignments_[i - 1].factor) {
      throw SchemaError("duplicate factor '" + assignments_[i].factor +
                        "' in class key");
    }
  }
}

std::optional<std::string_view> ClassKey::find(std::string_view factor) const {
  auto it = std::lower_bound(
      assignments_.begin(), assignments_.end(), factor,
      [](const Assignment& a, std::string_view f) { return a.factor < f; });
  if (it == assignments_.end() || it->factor != factor) return std::nullopt;
  return it->level;
}

const std::string& ClassKey::level(std::string_view factor) const {
  for (const auto& a : assignments_)
    if (a.factor == factor) return a.level;
  throw SchemaError("class key " + to_string() + " has no factor '" +
                    std::string(factor) + "'");
}

std::vector<std::string> ClassKey::factors() const {
  std::vector<std::string> out;
  out.reserve(assignments_.size());
  for (const auto& a : assignments_) out.push_back(a.factor);
  return out;
}

ClassKey ClassKey::with(std::string_view factor, std::string_view level) const {
  std::vector<Assignment> next = assignments_;
  bool replaced = false;
  for (auto& a : next) {
    if (a.factor == factor) {
      a.level = std::string(level);
      replaced = true;
    }
  }
  if (!replaced) next.push_back({std::string(factor), std::string(level)});
  return ClassKey(std::move(next));
}

std::string ClassKey::to_string() const {
  std::string out = "(";
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    if (i) out += ", ";
    out += assignments_[i].factor + "=" + assignments_[i].level;
  }
  return out + ")";
}

Schema make_schema(std::string treatment_factor,
                   std::vector<std::string> factors,
                   std::vector<std::string> endpoints, std::string test_id) {
  if (treatment_factor.empty()) throw SchemaError("empty treatment factor");
  if (std::find(factors.begin(), factors.end(), treatment_factor) ==
      factors.end()) {
    factors.push_back(treatment_factor);
  }
  std::sort(factors.begin(), factors.end());
  if (std::adjacent_find(factors.begin(), factors.end()) != factors.end())
    throw SchemaError("duplicate factor name in schema");
  std::set<std::string> seen;
  for (const auto& e : endpoints) {
    if (e.empty()) throw SchemaError("empty endpoint name");
    if (!seen.insert(e).second)
      throw SchemaError("duplicate endpoint '" + e + "'");
  }
  return Schema{std::move(treatment_factor), std::move(factors),
                std::move(endpoints), std::move(test_id)};
}

EquivalenceTable::EquivalenceTable(Schema schema)
    : schema_(make_schema(std::move(schema.treatment_factor),
                          std::move(schema.factors),
                          std::move(schema.endpoints),
                          std::move(schema.test_id))) {}

std::vector<std::string> EquivalenceTable::arms() const {
  std::vector<std::string> out;
  for (const auto& a : arm_tss_) out.push_back(a.level);
  return out;
}

const ArmTss* EquivalenceTable::find_arm(std::string_view level) const {
  for (const auto& a : arm_tss_)
    if (a.level == level) return &a;
  return nullptr;
}

bool EquivalenceTable::has_endpoint(std::string_view endpoint) const {
  return std::find(schema_.endpoints.begin(), schema_.endpoints.end(),
                   endpoint) != schema_.endpoints.end();
}

void EquivalenceTable::check_key(const ClassKey& key) const {
  const auto& a = key.assignments();
  bool ok = a.size() == schema_.factors.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i)
    ok = a[i].factor == schema_.factors[i];
  if (!ok)
    throw SchemaError("class key " + key.to_string() +
                      " does not match the table's factor set");
}

void EquivalenceTable::check_endpoint(std::string_view endpoint) const {
  if (!has_endpoint(endpoint))
    throw SchemaError("unknown endpoint '" + std::string(endpoint) + "'");
}

ClassRow& EquivalenceTable::upsert_row(const ClassKey& key) {
  check_key(key);
  auto [it, inserted] = rows_.try_emplace(key);
  if (inserted) {
    it->second.key = key;
    for (const auto& e : schema_.endpoints) it->second.sums[e] = 0.0;
  }
  return it->second;
}

void EquivalenceTable::add_count(const ClassKey& key, std::int64_t delta) {
  ClassRow& row = upsert_row(key);
  if (row.count + delta < 0)
    throw ConsistencyError("negative count for class " + key.to_string());
  row.count += delta;
  n_ += delta;
}

void EquivalenceTable::add_sum(const ClassKey& key, std::string_view endpoint,
                               double delta) {
  check_endpoint(endpoint);
  if (!std::isfinite(delta)) throw RangeError("non-finite endpoint value");
  ClassRow& row = upsert_row(key);
  row.sums.find(endpoint)->second += delta;
}

ArmTss& EquivalenceTable::upsert_arm(std::string_view level) {
  auto it = std::lower_bound(
      arm_tss_.begin(), arm_tss_.end(), level,
      [](const ArmTss& a, std::string_view l) { return a.level < l; });
  if (it != arm_tss_.end() && it->level == level) return *it;
  ArmTss arm{schema_.treatment_factor, std::string(level), {}};
  for (const auto& e : schema_.endpoints) arm.tss[e] = 0.0;
  return *arm_tss_.insert(it, std::move(arm));
}

void EquivalenceTable::add_tss(std::string_view level,
                               std::string_view endpoint, double delta) {
  check_endpoint(endpoint);
  if (!std::isfinite(delta)) throw RangeError("non-finite sum of squares");
  upsert_arm(level).tss.find(endpoint)->second += delta;
}

void EquivalenceTable::erase_row(const ClassKey& key) {
  auto it = rows_.find(key);
  if (it == rows_.end()) return;
  n_ -= it->second.count;
  rows_.erase(it);
}

namespace {

void accumulate(EquivalenceTable& t, const MicroRecord& r) {
  const Schema& s = t.schema();
  if (r.assignments.factors() != s.factors) {
    throw SchemaError("record '" + r.user_id + "' has factor set " +
                      r.assignments.to_string() +
                      " inconsistent with the table");
  }
  // Validate every endpoint before touching the table.
  for (const auto& e : s.endpoints) {
    auto it = r.outcomes.find(e);
    if (it == r.outcomes.end())
      throw SchemaError("record '" + r.user_id + "' is missing endpoint '" +
                        e + "'");
    if (!std::isfinite(it->second))
      throw RangeError("record '" + r.user_id +
                       "' has a non-finite value for '" + e + "'");
  }
  const std::string& arm = r.assignments.level(s.treatment_factor);
  t.add_count(r.assignments, 1);
  t.upsert_arm(arm);
  for (const auto& e : s.endpoints) {
    const double y = r.outcomes.find(e)->second;
    t.add_sum(r.assignments, e, y);
    t.add_tss(arm, e, y * y);
  }
}

}  // namespace

EquivalenceTable aggregate(std::span<const MicroRecord> micro,
                           const Schema& schema) {
  EquivalenceTable t(schema);
  for (const auto& r : micro) accumulate(t, r);
  return t;
}

EquivalenceTable aggregate(std::span<const MicroRecord> micro,
                           const std::string& treatment_factor,
                           const std::vector<std::string>& endpoints) {
  std::vector<std::string> factors;
  if (!micro.empty()) factors = micro.front().assignments.factors();
  if (!micro.empty() &&
      !micro.front().assignments.find(treatment_factor).has_value()) {
    throw SchemaError("records do not carry treatment factor '" +
                      treatment_factor + "'");
  }
  return aggregate(micro, make_schema(treatment_factor, std::move(factors),
                                      endpoints));
}

namespace {

bool is_blank(const EquivalenceTable& t) {
  return t.rows().empty() && t.arm_tss().empty() && !t.tss_stale();
}

}  // namespace

EquivalenceTable merge(const EquivalenceTable& a, const EquivalenceTable& b) {
  const Schema& sa = a.schema();
  const Schema& sb = b.schema();
  if (sa.treatment_factor != sb.treatment_factor ||
      sa.endpoints != sb.endpoints) {
    throw SchemaError("cannot merge tables with different schemas");
  }
  if (sa.factors != sb.factors) {
    if (is_blank(b)) return a;
    if (is_blank(a)) return b;
    throw SchemaError("cannot merge tables with different factor sets");
  }
  EquivalenceTable out = a;
  for (const auto& [key, row] : b.rows()) {
    out.add_count(key, row.count);
    for (const auto& [e, v] : row.sums) out.add_sum(key, e, v);
  }
  for (const auto& arm : b.arm_tss()) {
    out.upsert_arm(arm.level);
    for (const auto& [e, v] : arm.tss) out.add_tss(arm.level, e, v);
  }
  if (b.tss_stale()) out.mark_tss_stale();
  return out;
}

std::int64_t k_anonymity(const EquivalenceTable& t) {
  std::int64_t k = 0;
  for (const auto& [key, row] : t.rows()) {
    if (row.count > 0 && (k == 0 || row.count < k)) k = row.count;
  }
  return k;
}

namespace {

std::vector<std::string> violating_keys(const EquivalenceTable& t,
                                        std::int64_t k) {
  std::vector<std::string> out;
  for (const auto& [key, row] : t.rows())
    if (row.count < k) out.push_back(key.to_string());
  return out;
}

void reject_if_violating(const EquivalenceTable& t, std::int64_t k) {
  auto bad = violating_keys(t, k);
  if (bad.empty()) return;
  std::string msg = "k-anonymity " + std::to_string(k) +
                    " violated by class(es): ";
  for (std::size_t i = 0; i < bad.size(); ++i) {
    if (i) msg += "; ";
    msg += bad[i];
  }
  throw KAnonymityError(msg, std::move(bad));
}

}  // namespace

EquivalenceTable release(const EquivalenceTable& t, std::int64_t k,
                         ReleasePolicy policy) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (policy == ReleasePolicy::kReject) {
    reject_if_violating(t, k);
    return t;
  }
  EquivalenceTable out = t;
  bool removed = false;
  for (const auto& [key, row] : t.rows()) {
    if (row.count < k) {
      out.erase_row(key);
      removed = true;
    }
  }
  if (removed) out.mark_tss_stale();
  return out;
}

EquivalenceTable release(const EquivalenceTable& t, std::int64_t k,
                         ReleasePolicy policy,
                         std::span<const MicroRecord> micro) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (policy == ReleasePolicy::kReject) {
    reject_if_violating(t, k);
    return t;
  }
  std::set<ClassKey> dropped;
  for (const auto& [key, row] : t.rows())
    if (row.count < k) dropped.insert(key);
  std::vector<MicroRecord> survivors;
  for (const auto& r : micro)
    if (!dropped.contains(r.assignments)) survivors.push_back(r);
  EquivalenceTable out = aggregate(survivors, t.schema());
  // Zero-count classes carry nothing worth re-deriving; everything else must
  // match what the micro-data reproduces.
  for (const auto& [key, row] : t.rows()) {
    if (dropped.contains(key)) continue;
    auto it = out.rows().find(key);
    const std::int64_t got = it == out.rows().end() ? 0 : it->second.count;
    if (got != row.count)
      throw ConsistencyError("micro-data does not reproduce class " +
                             key.to_string());
  }
  return out;
}

std::vector<std::string> consistency_issues(const EquivalenceTable& t) {
  std::vector<std::string> issues;
  std::int64_t total = 0;
  std::map<std::string, std::pair<std::int64_t, EndpointValues>> per_arm;
  for (const auto& [key, row] : t.rows()) {
    total += row.count;
    if (row.count < 0) issues.push_back("negative count in " + key.to_string());
    if (row.count == 0) {
      for (const auto& [e, v] : row.sums)
        if (v != 0.0)
          issues.push_back("class " + key.to_string() +
                           " has count 0 but non-zero sum for '" + e + "'");
    }
    auto& arm = per_arm[key.level(t.treatment_factor())];
    arm.first += row.count;
    for (const auto& [e, v] : row.sums) arm.second[e] += v;
  }
  if (total != t.n())
    issues.push_back("n = " + std::to_string(t.n()) +
                     " differs from the sum of counts " +
                     std::to_string(total));
  for (const auto& arm : t.arm_tss()) {
    for (const auto& [e, v] : arm.tss)
      if (v < 0.0)
        issues.push_back("negative TSS for arm " + arm.level + " endpoint '" +
                         e + "'");
  }
  if (t.tss_stale()) return issues;
  for (const auto& [level, stats] : per_arm) {
    const auto& [count, sums] = stats;
    if (count <= 0) continue;
    const ArmTss* arm = t.find_arm(level);
    if (arm == nullptr) {
      issues.push_back("arm " + level + " has no TSS entry");
      continue;
    }
    for (const auto& [e, s] : sums) {
      const double tss = arm->tss.at(e);
      const double floor = s * s / static_cast<double>(count);
      if (tss < floor - 1e-9 * std::max(1.0, floor))
        issues.push_back("arm " + level + " endpoint '" + e + "' has TSS " +
                         std::to_string(tss) + " below sum^2/count " +
                         std::to_string(floor));
    }
  }
  return issues;
}

void validate(const EquivalenceTable& t) {
  auto issues = consistency_issues(t);
  if (issues.empty()) return;
  std::string msg = "inconsistent equivalence table:";
  for (const auto& i : issues) msg += "\n  " + i;
  throw ConsistencyError(msg);
}

std::vector<std::string> observed_levels(const EquivalenceTable& t,
                                         std::string_view factor) {
  std::set<std::string> levels;
  for (const auto& [key, row] : t.rows())
    if (row.count > 0) levels.insert(key.level(factor));
  return {levels.begin(), levels.end()};
}

std::string to_string(ReleasePolicy policy) {
  return policy == ReleasePolicy::kReject ? "reject" : "suppress";
}

ReleasePolicy parse_release_policy(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "reject") return ReleasePolicy::kReject;
  if (lower == "suppress") return ReleasePolicy::kSuppress;
  throw std::invalid_argument("unknown release policy '" + std::string(text) +
                              "'");
}

}  // namespace kanon
