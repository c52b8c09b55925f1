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

#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>

#include "kanon/errors.h"

namespace kanon {
namespace {

struct Field {
  std::string_view text;
  std::size_t offset;
};

std::vector<Field> split(std::string_view s, char sep, std::size_t base) {
  std::vector<Field> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back({s.substr(start, i - start), base + start});
      start = i + 1;
    }
  }
  return out;
}

double parse_number(const Field& f, const char* what) {
  if (f.text.empty())
    throw ParseError(std::string("empty ") + what, f.offset);
  double v = 0.0;
  const char* first = f.text.data();
  const char* last = first + f.text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::result_out_of_range)
    throw RangeError(std::string(what) + " out of range");
  if (ec != std::errc() || ptr != last)
    throw ParseError(std::string("malformed ") + what + " '" +
                         std::string(f.text) + "'",
                     f.offset + static_cast<std::size_t>(ptr - first));
  if (!std::isfinite(v))
    throw RangeError(std::string(what) + " is not finite");
  return v;
}

void require_nonempty(const Field& f, const char* what) {
  if (f.text.empty())
    throw ParseError(std::string("empty ") + what, f.offset);
}

std::vector<Assignment> parse_covariates(const Field& f) {
  std::vector<Assignment> out;
  if (f.text.empty()) return out;
  for (const Field& item : split(f.text, ',', f.offset)) {
    auto eq = item.text.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("covariate without '='", item.offset);
    Field name{item.text.substr(0, eq), item.offset};
    Field level{item.text.substr(eq + 1), item.offset + eq + 1};
    require_nonempty(name, "covariate name");
    require_nonempty(level, "covariate level");
    for (const auto& a : out)
      if (a.factor == name.text)
        throw ParseError("duplicate covariate '" + std::string(name.text) + "'",
                         name.offset);
    out.push_back({std::string(name.text), std::string(level.text)});
  }
  return out;
}

}  // namespace

TelemetryEvent parse_event(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto fields = split(line, '|', 0);
  TelemetryEvent e;
  const Field& kind = fields[0];
  if (kind.text == "A") {
    e.kind = TelemetryEvent::Kind::kAssign;
    if (fields.size() != 4)
      throw ParseError("assign event needs 4 fields, got " +
                           std::to_string(fields.size()),
                       fields.size() > 4 ? fields[4].offset : line.size());
  } else if (kind.text == "O") {
    e.kind = TelemetryEvent::Kind::kOutcome;
    if (fields.size() != 7)
      throw ParseError("outcome event needs 7 fields, got " +
                           std::to_string(fields.size()),
                       fields.size() > 7 ? fields[7].offset : line.size());
  } else {
    throw ParseError("unknown event kind '" + std::string(kind.text) + "'", 0);
  }
  require_nonempty(fields[1], "test id");
  require_nonempty(fields[2], "arm");
  e.test_id = std::string(fields[1].text);
  e.arm = std::string(fields[2].text);
  e.covariates = parse_covariates(fields[3]);
  if (e.kind == TelemetryEvent::Kind::kOutcome) {
    require_nonempty(fields[4], "endpoint");
    e.endpoint = std::string(fields[4].text);
    e.prior_total = parse_number(fields[5], "prior_total");
    e.delta = parse_number(fields[6], "delta");
    if (e.prior_total < 0.0) throw RangeError("prior_total must be >= 0");
  }
  return e;
}

std::string format_event(const TelemetryEvent& e) {
  std::ostringstream out;
  out.precision(17);
  out << (e.kind == TelemetryEvent::Kind::kAssign ? "A" : "O") << '|'
      << e.test_id << '|' << e.arm << '|';
  for (std::size_t i = 0; i < e.covariates.size(); ++i) {
    if (i) out << ',';
    out << e.covariates[i].factor << '=' << e.covariates[i].level;
  }
  if (e.kind == TelemetryEvent::Kind::kOutcome)
    out << '|' << e.endpoint << '|' << e.prior_total << '|' << e.delta;
  return out.str();
}

ClassKey event_key(const EquivalenceTable& t, const TelemetryEvent& e) {
  const Schema& s = t.schema();
  if (!s.test_id.empty() && e.test_id != s.test_id)
    throw SchemaError("event for test '" + e.test_id +
                      "' routed to table for test '" + s.test_id + "'");
  std::vector<Assignment> a = e.covariates;
  for (const auto& c : a)
    if (c.factor == s.treatment_factor)
      throw SchemaError("covariate list repeats the treatment factor");
  a.push_back({s.treatment_factor, e.arm});
  ClassKey key(std::move(a));
  if (key.factors() != s.factors)
    throw SchemaError("event key " + key.to_string() +
                      " does not match the table's factor set");
  return key;
}

void apply_event_in_place(EquivalenceTable& t, const TelemetryEvent& e) {
  const ClassKey key = event_key(t, e);
  if (e.kind == TelemetryEvent::Kind::kAssign) {
    t.add_count(key, 1);
    t.upsert_arm(e.arm);
    return;
  }
  if (!t.has_endpoint(e.endpoint))
    throw SchemaError("outcome for endpoint '" + e.endpoint +
                      "' not in the table schema");
  if (!std::isfinite(e.delta) || !std::isfinite(e.prior_total) ||
      e.prior_total < 0.0)
    throw RangeError("outcome event carries invalid numerics");
  const double inc = tss_increment(e.prior_total, e.delta);
  const ArmTss* arm = t.find_arm(e.arm);
  const double current = arm ? arm->tss.at(e.endpoint) : 0.0;
  if (current + inc < 0.0)
    throw ConsistencyError("arm " + e.arm + " TSS for '" + e.endpoint +
                           "' would become negative");
  t.add_sum(key, e.endpoint, e.delta);
  t.add_tss(e.arm, e.endpoint, inc);
}

EquivalenceTable apply_event(const EquivalenceTable& t,
                             const TelemetryEvent& e) {
  EquivalenceTable out = t;
  apply_event_in_place(out, e);
  return out;
}

ReplayStats replay(EquivalenceTable& t, std::istream& events) {
  ReplayStats stats;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(events, line)) {
    ++lineno;
    std::string_view v(line);
    if (!v.empty() && v.back() == '\r') v.remove_suffix(1);
    if (v.empty() || v.front() == '#') continue;
    try {
      TelemetryEvent e = parse_event(v);
      apply_event_in_place(t, e);
      ++stats.events;
      if (e.kind == TelemetryEvent::Kind::kAssign)
        ++stats.assigns;
      else
        ++stats.outcomes;
    } catch (const ParseError& err) {
      throw ParseError("line " + std::to_string(lineno) + ": " + err.what(),
                       err.offset());
    } catch (const SchemaError& err) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + err.what());
    } catch (const RangeError& err) {
      throw RangeError("line " + std::to_string(lineno) + ": " + err.what());
    } catch (const ConsistencyError& err) {
      throw ConsistencyError("line " + std::to_string(lineno) + ": " +
                             err.what());
    }
  }
  stats.warnings = consistency_issues(t);
  return stats;
}

void TableIngestor::apply(const TelemetryEvent& e) {
  std::lock_guard lock(mu_);
  apply_event_in_place(table_, e);
}

void TableIngestor::apply_line(std::string_view line) {
  TelemetryEvent e = parse_event(line);
  apply(e);
}

EquivalenceTable TableIngestor::snapshot() const {
  std::lock_guard lock(mu_);
  return table_;
}

}  // namespace kanon
