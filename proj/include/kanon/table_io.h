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

#ifndef KANON_TABLE_IO_H_
#define KANON_TABLE_IO_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kanon/equivalence.h"

namespace kanon {

inline constexpr int kSchemaVersion = 1;

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, CRLF.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::string csv_escape(std::string_view field);

// 17 significant digits; round-trips every double.
std::string format_number(double v);
double parse_number(std::string_view text, std::string_view what);

// On-disk layout of one equivalence table, given a base path "dir/name":
//   dir/name.csv            factor:<f>..., count, sum:<endpoint>...
//   dir/name.tss.csv        arm, tss:<endpoint>...
//   dir/name.manifest.json  treatment factor, factors, endpoints, version
struct TablePaths {
  std::filesystem::path rows;
  std::filesystem::path tss;
  std::filesystem::path manifest;
};

// Accepts "name.csv", "name.manifest.json", "name.tss.csv" or "name".
TablePaths table_paths(const std::filesystem::path& any);

void write_rows_csv(const EquivalenceTable& t, std::ostream& out);
void write_tss_csv(const EquivalenceTable& t, std::ostream& out);
std::string manifest_json(const EquivalenceTable& t, const TablePaths& paths);

void write_table(const EquivalenceTable& t, const std::filesystem::path& path);

// Loads rows and TSS, then checks the table's invariants (throws
// ConsistencyError on violation unless `check` is false).
EquivalenceTable read_table(const std::filesystem::path& path,
                            bool check = true);

EquivalenceTable read_table_streams(const Schema& schema, bool tss_stale,
                                    std::istream& rows, std::istream& tss);

// Schema (and stale flag) from a manifest document.
Schema read_schema(const std::filesystem::path& manifest);

// Micro-data CSV: a user_id column, one column per endpoint listed in
// `endpoints`, and every remaining column treated as a factor.
std::vector<MicroRecord> read_micro_csv(std::istream& in,
                                        const std::vector<std::string>& endpoints);
std::vector<MicroRecord> read_micro_csv(const std::filesystem::path& path,
                                        const std::vector<std::string>& endpoints);

void write_micro_csv(std::span<const MicroRecord> micro,
                     const std::vector<std::string>& factors,
                     const std::vector<std::string>& endpoints,
                     std::ostream& out);

}  // namespace kanon

#endif  // KANON_TABLE_IO_H_
