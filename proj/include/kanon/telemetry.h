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

#ifndef KANON_TELEMETRY_H_
#define KANON_TELEMETRY_H_

#include <iosfwd>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "kanon/equivalence.h"

namespace kanon {

// One client message. Grammar, one event per line:
//
//   A|<test>|<arm>|<f1>=<v1>,<f2>=<v2>
//   O|<test>|<arm>|<f1>=<v1>,...|<endpoint>|<prior_total>|<delta>
//
// The covariate list may be empty. prior_total is the client's own running
// total for the endpoint before this report (0 on the first report); the
// server never keeps per-user state.
struct TelemetryEvent {
  enum class Kind { kAssign, kOutcome };

  Kind kind = Kind::kAssign;
  std::string test_id;
  std::string arm;
  std::vector<Assignment> covariates;
  std::string endpoint;
  double prior_total = 0.0;
  double delta = 0.0;

  bool operator==(const TelemetryEvent&) const = default;
};

// Throws ParseError (with byte offset) on malformed input and RangeError on
// non-finite or negative-prior numerics.
TelemetryEvent parse_event(std::string_view line);

std::string format_event(const TelemetryEvent& e);

// Increment added to an arm's sum of squares when a user's running total moves
// from prior to prior + delta: (prior + delta)^2 - prior^2.
inline double tss_increment(double prior, double delta) {
  return 2.0 * prior * delta + delta * delta;
}

// The class key an event lands in: the arm under the table's treatment factor
// plus the event's covariates.
ClassKey event_key(const EquivalenceTable& t, const TelemetryEvent& e);

// In-place state transition. Assign: count += 1. Outcome: sum += delta and the
// arm TSS grows by tss_increment(prior, delta). Throws SchemaError for unknown
// endpoints or mismatched factors and ConsistencyError if an arm TSS would go
// negative (the table is left untouched in that case).
void apply_event_in_place(EquivalenceTable& t, const TelemetryEvent& e);

EquivalenceTable apply_event(const EquivalenceTable& t,
                             const TelemetryEvent& e);

struct ReplayStats {
  std::size_t events = 0;
  std::size_t assigns = 0;
  std::size_t outcomes = 0;
  std::vector<std::string> warnings;
};

// Reads newline-delimited events, skipping blank lines and '#' comments.
// Parse and schema errors are rethrown with the 1-based line number.
ReplayStats replay(EquivalenceTable& t, std::istream& events);

// Serializes writers against one table and hands out consistent copies to
// readers.
class TableIngestor {
 public:
  explicit TableIngestor(EquivalenceTable initial)
      : table_(std::move(initial)) {}

  void apply(const TelemetryEvent& e);
  void apply_line(std::string_view line);
  EquivalenceTable snapshot() const;

 private:
  mutable std::mutex mu_;
  EquivalenceTable table_;
};

}  // namespace kanon

#endif  // KANON_TELEMETRY_H_
