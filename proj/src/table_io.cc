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

#include "kanon/table_io.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kanon/errors.h"

namespace kanon {
namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t offset = 0;
  char c;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  while (in.get(c)) {
    ++offset;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          ++offset;
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) throw ParseError("stray quote in CSV field", offset);
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field", offset);
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(std::string_view text, std::string_view what) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ParseError("malformed " + std::string(what) + " '" +
                         std::string(text) + "'",
                     static_cast<std::size_t>(ptr - text.data()));
  if (!std::isfinite(v))
    throw RangeError(std::string(what) + " is not finite");
  return v;
}

namespace {

std::int64_t parse_count(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() ||
      v < 0)
    throw ParseError("malformed count '" + std::string(text) + "'",
                     static_cast<std::size_t>(ptr - text.data()));
  return v;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string> read_rows_header(const std::vector<std::string>& header,
                                          std::vector<std::string>& factors,
                                          std::vector<std::string>& endpoints) {
  std::vector<std::string> kinds;
  bool saw_count = false;
  for (const auto& h : header) {
    if (h.rfind("factor:", 0) == 0) {
      factors.push_back(h.substr(7));
      kinds.push_back("factor");
    } else if (h.rfind("sum:", 0) == 0) {
      endpoints.push_back(h.substr(4));
      kinds.push_back("sum");
    } else if (h == "count") {
      if (saw_count) throw SchemaError("duplicate count column");
      saw_count = true;
      kinds.push_back("count");
    } else {
      throw SchemaError("unexpected column '" + h + "' in class table");
    }
  }
  if (!saw_count) throw SchemaError("class table has no count column");
  return kinds;
}

}  // namespace

TablePaths table_paths(const fs::path& any) {
  std::string s = any.string();
  for (std::string_view suffix : {".manifest.json", ".tss.csv", ".csv"}) {
    if (ends_with(s, suffix)) {
      s.resize(s.size() - suffix.size());
      break;
    }
  }
  return {s + ".csv", s + ".tss.csv", s + ".manifest.json"};
}

void write_rows_csv(const EquivalenceTable& t, std::ostream& out) {
  bool first = true;
  auto cell = [&](const std::string& v) {
    if (!first) out << ',';
    out << csv_escape(v);
    first = false;
  };
  for (const auto& f : t.factors()) cell("factor:" + f);
  cell("count");
  for (const auto& e : t.endpoints()) cell("sum:" + e);
  out << '\n';
  for (const auto& [key, row] : t.rows()) {
    first = true;
    for (const auto& a : key.assignments()) cell(a.level);
    cell(std::to_string(row.count));
    for (const auto& e : t.endpoints()) cell(format_number(row.sums.at(e)));
    out << '\n';
  }
}

void write_tss_csv(const EquivalenceTable& t, std::ostream& out) {
  out << "arm";
  for (const auto& e : t.endpoints()) out << ',' << csv_escape("tss:" + e);
  out << '\n';
  for (const auto& arm : t.arm_tss()) {
    out << csv_escape(arm.level);
    for (const auto& e : t.endpoints()) out << ',' << format_number(arm.tss.at(e));
    out << '\n';
  }
}

std::string manifest_json(const EquivalenceTable& t, const TablePaths& paths) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["treatment_factor"] = t.treatment_factor();
  j["factors"] = t.factors();
  j["endpoints"] = t.endpoints();
  if (!t.schema().test_id.empty()) j["test_id"] = t.schema().test_id;
  j["rows_file"] = paths.rows.filename().string();
  j["tss_file"] = paths.tss.filename().string();
  j["n"] = t.n();
  j["classes"] = t.num_classes();
  j["tss_stale"] = t.tss_stale();
  return j.dump(2) + "\n";
}

void write_table(const EquivalenceTable& t, const fs::path& path) {
  const TablePaths paths = table_paths(path);
  if (paths.rows.has_parent_path())
    fs::create_directories(paths.rows.parent_path());
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(paths.rows);
    write_rows_csv(t, out);
  }
  {
    auto out = open(paths.tss);
    write_tss_csv(t, out);
  }
  {
    auto out = open(paths.manifest);
    out << manifest_json(t, paths);
  }
}

namespace {

json load_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

Schema schema_from_json(const json& j) {
  try {
    const int version = j.value("schema_version", kSchemaVersion);
    if (version != kSchemaVersion)
      throw SchemaError("unsupported schema_version " + std::to_string(version));
    return make_schema(j.at("treatment_factor").get<std::string>(),
                       j.value("factors", std::vector<std::string>{}),
                       j.at("endpoints").get<std::vector<std::string>>(),
                       j.value("test_id", std::string{}));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid manifest: ") + e.what());
  }
}

}  // namespace

Schema read_schema(const fs::path& manifest) {
  return schema_from_json(load_json(table_paths(manifest).manifest));
}

EquivalenceTable read_table_streams(const Schema& schema, bool tss_stale,
                                    std::istream& rows_in,
                                    std::istream& tss_in) {
  EquivalenceTable t(schema);
  const auto rows = read_csv(rows_in);
  if (rows.empty()) throw SchemaError("class table has no header");
  std::vector<std::string> factors, endpoints;
  const auto kinds = read_rows_header(rows[0], factors, endpoints);
  std::vector<std::string> sorted = factors;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != schema.factors)
    throw SchemaError("class table factor columns disagree with the manifest");
  if (std::vector<std::string>(endpoints) != schema.endpoints)
    throw SchemaError("class table endpoint columns disagree with the manifest");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != kinds.size())
      throw SchemaError("class table row " + std::to_string(r) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(kinds.size()));
    std::vector<Assignment> key;
    std::int64_t count = 0;
    std::vector<double> sums;
    std::size_t fi = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (kinds[c] == "factor")
        key.push_back({factors[fi++], cells[c]});
      else if (kinds[c] == "count")
        count = parse_count(cells[c]);
      else
        sums.push_back(parse_number(cells[c], "sum"));
    }
    ClassKey k(std::move(key));
    if (t.rows().contains(k))
      throw SchemaError("duplicate class " + k.to_string());
    t.add_count(k, count);
    for (std::size_t e = 0; e < endpoints.size(); ++e)
      t.add_sum(k, endpoints[e], sums[e]);
  }

  const auto tss = read_csv(tss_in);
  if (tss.empty() || tss[0].empty() || tss[0][0] != "arm")
    throw SchemaError("TSS table must start with an 'arm' column");
  std::vector<std::string> tss_endpoints;
  for (std::size_t c = 1; c < tss[0].size(); ++c) {
    if (tss[0][c].rfind("tss:", 0) != 0)
      throw SchemaError("unexpected TSS column '" + tss[0][c] + "'");
    tss_endpoints.push_back(tss[0][c].substr(4));
  }
  if (tss_endpoints != schema.endpoints)
    throw SchemaError("TSS endpoint columns disagree with the manifest");
  for (std::size_t r = 1; r < tss.size(); ++r) {
    if (tss[r].size() != tss[0].size())
      throw SchemaError("TSS row " + std::to_string(r) + " is ragged");
    if (t.find_arm(tss[r][0]) != nullptr)
      throw SchemaError("duplicate arm '" + tss[r][0] + "'");
    t.upsert_arm(tss[r][0]);
    for (std::size_t e = 0; e < tss_endpoints.size(); ++e)
      t.add_tss(tss[r][0], tss_endpoints[e], parse_number(tss[r][e + 1], "tss"));
  }
  if (tss_stale) t.mark_tss_stale();
  return t;
}

EquivalenceTable read_table(const fs::path& path, bool check) {
  const TablePaths paths = table_paths(path);
  const json manifest = load_json(paths.manifest);
  const Schema schema = schema_from_json(manifest);
  const fs::path dir = paths.manifest.parent_path();
  const fs::path rows_path =
      manifest.contains("rows_file")
          ? dir / manifest["rows_file"].get<std::string>()
          : paths.rows;
  const fs::path tss_path = manifest.contains("tss_file")
                                ? dir / manifest["tss_file"].get<std::string>()
                                : paths.tss;
  std::ifstream rows(rows_path), tss(tss_path);
  if (!rows) throw Error("cannot read " + rows_path.string());
  if (!tss) throw Error("cannot read " + tss_path.string());
  EquivalenceTable t = read_table_streams(
      schema, manifest.value("tss_stale", false), rows, tss);
  if (manifest.contains("n") && manifest["n"].get<std::int64_t>() != t.n())
    throw ConsistencyError("manifest n disagrees with the class counts");
  if (check) validate(t);
  return t;
}

std::vector<MicroRecord> read_micro_csv(
    std::istream& in, const std::vector<std::string>& endpoints) {
  const auto rows = read_csv(in);
  if (rows.empty()) throw SchemaError("micro-data file has no header");
  const auto& header = rows[0];
  std::ptrdiff_t id_col = -1;
  std::vector<std::ptrdiff_t> endpoint_cols(endpoints.size(), -1);
  std::vector<std::size_t> factor_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "user_id") {
      id_col = static_cast<std::ptrdiff_t>(c);
      continue;
    }
    auto it = std::find(endpoints.begin(), endpoints.end(), header[c]);
    if (it != endpoints.end())
      endpoint_cols[it - endpoints.begin()] = static_cast<std::ptrdiff_t>(c);
    else
      factor_cols.push_back(c);
  }
  if (id_col < 0) throw SchemaError("micro-data file has no user_id column");
  for (std::size_t e = 0; e < endpoints.size(); ++e)
    if (endpoint_cols[e] < 0)
      throw SchemaError("micro-data file has no column for endpoint '" +
                        endpoints[e] + "'");
  std::vector<MicroRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size())
      throw SchemaError("micro-data row " + std::to_string(r) + " is ragged");
    MicroRecord rec;
    rec.user_id = cells[static_cast<std::size_t>(id_col)];
    std::vector<Assignment> key;
    for (std::size_t c : factor_cols) key.push_back({header[c], cells[c]});
    rec.assignments = ClassKey(std::move(key));
    for (std::size_t e = 0; e < endpoints.size(); ++e) {
      const auto& text = cells[static_cast<std::size_t>(endpoint_cols[e])];
      if (text.empty())
        throw SchemaError("record '" + rec.user_id + "' is missing endpoint '" +
                          endpoints[e] + "'");
      rec.outcomes[endpoints[e]] = parse_number(text, endpoints[e]);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<MicroRecord> read_micro_csv(
    const fs::path& path, const std::vector<std::string>& endpoints) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return read_micro_csv(in, endpoints);
}

void write_micro_csv(std::span<const MicroRecord> micro,
                     const std::vector<std::string>& factors,
                     const std::vector<std::string>& endpoints,
                     std::ostream& out) {
  out << "user_id";
  for (const auto& f : factors) out << ',' << csv_escape(f);
  for (const auto& e : endpoints) out << ',' << csv_escape(e);
  out << '\n';
  for (const auto& r : micro) {
    out << csv_escape(r.user_id);
    for (const auto& f : factors) out << ',' << csv_escape(r.assignments.level(f));
    for (const auto& e : endpoints) out << ',' << format_number(r.outcomes.at(e));
    out << '\n';
  }
}

}  // namespace kanon
