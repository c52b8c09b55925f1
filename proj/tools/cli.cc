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

#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kanon/adjust.h"
#include "kanon/errors.h"
#include "kanon/gramian.h"
#include "kanon/micro_oracle.h"
#include "kanon/ols.h"
#include "kanon/serialize.h"
#include "kanon/table_io.h"
#include "kanon/telemetry.h"

namespace kanon::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Usage problems detected after CLI11 parsing (bad enum text, missing inputs).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::int64_t> k;
  std::optional<std::string> policy;
  std::optional<double> alpha;
  std::optional<std::string> method;
  std::optional<int> precision;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config; explicit flags win");
  cmd->add_option("--k", f.k, "k-anonymity threshold applied before release");
  cmd->add_option("--policy", f.policy, "release policy: reject | suppress");
  cmd->add_option("--alpha", f.alpha, "significance level");
  cmd->add_option("--method", f.method,
                  "multiple-comparison correction: bonferroni | sidak | bh");
  cmd->add_option("--precision", f.precision, "decimals in human tables");
  cmd->add_option("--out", f.out, "output path");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  try {
    if (!f.config.empty()) {
      std::ifstream in(f.config);
      if (!in) throw UsageError("cannot read config " + f.config);
      const json j = json::parse(in);
      if (j.contains("k")) cfg.k_threshold = j["k"].get<std::int64_t>();
      if (j.contains("policy"))
        cfg.release_policy = parse_release_policy(j["policy"].get<std::string>());
      if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
      if (j.contains("method"))
        cfg.correction = parse_correction(j["method"].get<std::string>());
      if (j.contains("precision")) cfg.precision = j["precision"].get<int>();
    }
    if (f.k) cfg.k_threshold = *f.k;
    if (f.policy) cfg.release_policy = parse_release_policy(*f.policy);
    if (f.alpha) cfg.alpha = *f.alpha;
    if (f.method) cfg.correction = parse_correction(*f.method);
    if (f.precision) cfg.precision = *f.precision;
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (cfg.k_threshold < 1) throw UsageError("--k must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw UsageError("--alpha must lie in (0, 1)");
  if (cfg.precision < 0 || cfg.precision > 17)
    throw UsageError("--precision must lie in [0, 17]");
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void emit_json(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << '\n';
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + path);
  f << j.dump(2) << '\n';
}

// Every statistic is computed on the released table only.
EquivalenceTable gate(const EquivalenceTable& t, const RunConfig& cfg) {
  return release(t, cfg.k_threshold, cfg.release_policy);
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const KAnonymityError*>(&e)) return "k_anonymity";
  if (dynamic_cast<const SparseCellError*>(&e)) return "sparse_cell";
  if (dynamic_cast<const SingularMatrixError*>(&e)) return "singular";
  if (dynamic_cast<const InsufficientDfError*>(&e)) return "insufficient_df";
  if (dynamic_cast<const StaleTssError*>(&e)) return "stale_tss";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const RangeError*>(&e)) return "range";
  if (dynamic_cast<const SchemaError*>(&e)) return "schema";
  if (dynamic_cast<const ConsistencyError*>(&e)) return "consistency";
  if (dynamic_cast<const DataMinimizationError*>(&e)) return "data_minimization";
  if (dynamic_cast<const DesignError*>(&e)) return "design";
  if (dynamic_cast<const NotSupportedError*>(&e)) return "not_supported";
  return "error";
}

void report_error(std::ostream& err, const std::exception& e) {
  json j = {{"error", error_kind(e)}, {"message", e.what()}};
  if (auto* k = dynamic_cast<const KAnonymityError*>(&e))
    j["classes"] = k->offending();
  if (auto* s = dynamic_cast<const SparseCellError*>(&e)) j["cells"] = s->cells();
  err << j.dump() << '\n';
}

// ---- subcommands -----------------------------------------------------------

struct IngestArgs {
  std::string schema, events, initial;
  bool strict = false;
};

int cmd_ingest(const IngestArgs& a, const CommonFlags& f, std::ostream& out,
               std::ostream& err) {
  resolve_config(f);
  if (f.out.empty()) throw UsageError("ingest needs --out");
  EquivalenceTable t = a.initial.empty()
                           ? EquivalenceTable(read_schema(a.schema))
                           : read_table(a.initial, /*check=*/false);
  if (!a.initial.empty() && !(t.schema() == read_schema(a.schema)))
    throw SchemaError("--initial table schema differs from --schema");
  std::ifstream in(a.events);
  if (!in) throw Error("cannot read " + a.events);
  const ReplayStats stats = replay(t, in);
  for (const auto& w : stats.warnings) err << "warning: " << w << '\n';
  if (a.strict && !stats.warnings.empty())
    throw ConsistencyError("consistency warnings are fatal under --strict (" +
                           std::to_string(stats.warnings.size()) + ")");
  write_table(t, f.out);
  out << "ingested " << stats.events << " events (" << stats.assigns
      << " assign, " << stats.outcomes << " outcome); n = " << t.n()
      << ", classes = " << t.num_classes() << '\n';
  return kExitOk;
}

struct AggregateArgs {
  std::string micro, treatment, endpoints, test_id;
};

int cmd_aggregate(const AggregateArgs& a, const CommonFlags& f,
                  std::ostream& out) {
  resolve_config(f);
  if (f.out.empty()) throw UsageError("aggregate needs --out");
  const auto endpoints = split_list(a.endpoints);
  if (endpoints.empty()) throw UsageError("--endpoints is empty");
  const auto micro = read_micro_csv(a.micro, endpoints);
  EquivalenceTable t = aggregate(micro, a.treatment, endpoints);
  if (!a.test_id.empty()) {
    Schema s = t.schema();
    s.test_id = a.test_id;
    t = aggregate(micro, s);
  }
  write_table(t, f.out);
  out << "aggregated " << micro.size() << " records into " << t.num_classes()
      << " classes; k = " << k_anonymity(t) << '\n';
  return kExitOk;
}

struct ReleaseArgs {
  std::string table, micro;
};

int cmd_release(const ReleaseArgs& a, const CommonFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  if (f.out.empty()) throw UsageError("release needs --out");
  const EquivalenceTable t = read_table(a.table);
  EquivalenceTable released;
  if (!a.micro.empty()) {
    const auto micro = read_micro_csv(a.micro, t.endpoints());
    released = release(t, cfg.k_threshold, cfg.release_policy, micro);
  } else {
    released = release(t, cfg.k_threshold, cfg.release_policy);
  }
  write_table(released, f.out);
  out << "released " << released.num_classes() << " of " << t.num_classes()
      << " classes; n = " << released.n() << ", k = " << k_anonymity(released)
      << (released.tss_stale() ? " (TSS stale: inference disabled)" : "")
      << '\n';
  return kExitOk;
}

struct RegressArgs {
  std::string table, spec, endpoint, factors;
};

int cmd_regress(const RegressArgs& a, const CommonFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const EquivalenceTable t = gate(read_table(a.table), cfg);
  DesignSpec spec;
  if (!a.spec.empty()) {
    std::ifstream in(a.spec);
    if (!in) throw Error("cannot read " + a.spec);
    spec = design_spec_from_json(json::parse(in), t);
    if (!a.endpoint.empty()) spec.endpoint = a.endpoint;
  } else {
    std::vector<std::string> factors = split_list(a.factors);
    if (factors.empty()) {
      factors.push_back(t.treatment_factor());
      for (const auto& x : t.factors())
        if (x != t.treatment_factor()) factors.push_back(x);
    }
    const std::string endpoint =
        a.endpoint.empty() ? t.endpoints().at(0) : a.endpoint;
    spec = main_effects_design(t, factors, endpoint);
  }
  const GramianSystem g = build(t, spec);
  const OlsFit fit = solve(g);
  json j = {{"design", to_json(spec)},
            {"gramian", to_json(g)},
            {"fit", to_json(fit)},
            {"k_anonymity", k_anonymity(t)}};
  emit_json(j, f.out, out);
  if (!f.out.empty()) out << format_fit_table(fit, cfg.precision);
  return kExitOk;
}

struct ScreenArgs {
  std::string tables, endpoint;
};

int cmd_screen(const ScreenArgs& a, const CommonFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  if (!fs::is_directory(a.tables))
    throw UsageError("--tables must be a directory");
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(a.tables)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 14 &&
        name.compare(name.size() - 14, 14, ".manifest.json") == 0)
      manifests.push_back(entry.path());
  }
  std::sort(manifests.begin(), manifests.end());

  std::map<PairKey, ScreenInput> inputs;
  std::vector<PartialFResult> failed;
  for (const auto& m : manifests) {
    PairKey pair{m.filename().string(), ""};
    try {
      std::ifstream in(m);
      const json manifest = json::parse(in);
      const EquivalenceTable t = read_table(m);
      if (manifest.contains("pair")) {
        pair = {manifest["pair"].at(0).get<std::string>(),
                manifest["pair"].at(1).get<std::string>()};
      } else {
        std::vector<std::string> others;
        for (const auto& x : t.factors())
          if (x != t.treatment_factor()) others.push_back(x);
        if (others.size() != 1)
          throw SchemaError(m.filename().string() +
                            ": add a \"pair\" entry to the manifest; the table "
                            "has more than two factors");
        pair = {t.treatment_factor(), others[0]};
      }
      if (inputs.contains(pair))
        throw SchemaError("pair supplied by more than one table");
      inputs.emplace(pair, ScreenInput{gate(t, cfg), a.endpoint});
    } catch (const std::exception& e) {
      PartialFResult r;
      r.pair = pair;
      r.method = cfg.correction;
      r.res_ss_main = r.res_ss_full = r.f_stat = r.p_raw = r.p_adjusted =
          std::numeric_limits<double>::quiet_NaN();
      r.diagnostic = m.filename().string() + ": " + e.what();
      failed.push_back(std::move(r));
    }
  }
  auto results = screen_all(inputs, cfg.correction, cfg.alpha);
  results.insert(results.end(), failed.begin(), failed.end());
  emit_json(to_json(results, cfg.correction, cfg.alpha), f.out, out);
  if (!f.out.empty()) {
    std::size_t rejected = 0;
    for (const auto& r : results) rejected += r.rejected;
    out << "screened " << results.size() << " pair(s); " << rejected
        << " flagged at alpha = " << cfg.alpha << " (" << to_string(cfg.correction)
        << ")\n";
  }
  return kExitOk;
}

struct AdjustArgs {
  std::string table, covariate, values, endpoint;
};

int cmd_adjust(const AdjustArgs& a, const CommonFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const EquivalenceTable t = gate(read_table(a.table), cfg);
  const LevelValues values = a.values.empty()
                                 ? values_from_labels(t, a.covariate)
                                 : parse_value_map(a.values);
  const std::string endpoint =
      a.endpoint.empty() ? t.endpoints().at(0) : a.endpoint;
  AdjustmentResult r = adjust(t, {CovariateSpec{a.covariate, values}}, endpoint);
  attach_pate(r, t);
  emit_json(to_json(r), f.out, out);
  if (!f.out.empty()) {
    char buf[256];
    const int p = cfg.precision;
    std::snprintf(buf, sizeof buf,
                  "ATE (%s - %s) = %.*f  Var(SATE) = %.*f  t_SATE = %.*f  "
                  "Var(PATE) = %.*f  t_PATE = %.*f\n",
                  r.arm_b.c_str(), r.arm_a.c_str(), p, r.ate, p, r.var_sate, p,
                  r.t_sate, p, r.var_pate, p, r.t_pate);
    out << buf;
  }
  return kExitOk;
}

struct VerifyArgs {
  std::string micro, spec, treatment, endpoints;
};

int cmd_verify(const VerifyArgs& a, const CommonFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  std::ifstream in(a.spec);
  if (!in) throw Error("cannot read " + a.spec);
  const json doc = json::parse(in);
  const std::string treatment =
      !a.treatment.empty() ? a.treatment
                           : doc.value("treatment_factor", std::string{});
  if (treatment.empty())
    throw UsageError("give --treatment or \"treatment_factor\" in the spec");
  std::vector<std::string> endpoints = split_list(a.endpoints);
  if (endpoints.empty()) {
    if (!doc.contains("endpoint"))
      throw UsageError("give --endpoints or \"endpoint\" in the spec");
    endpoints.push_back(doc["endpoint"].get<std::string>());
  }
  const auto micro = read_micro_csv(a.micro, endpoints);
  const EquivalenceTable t = gate(aggregate(micro, treatment, endpoints), cfg);
  const DesignSpec spec = design_spec_from_json(doc, t);
  const OlsFit agg = solve(build(t, spec));
  const OlsFit dense = oracle::dense_ols(oracle::expand(micro, spec));
  const double worst = oracle::max_relative_discrepancy(agg, dense);
  constexpr double kThreshold = 1e-7;
  const bool pass = worst <= kThreshold;
  json j = {{"max_relative_discrepancy", worst},
            {"threshold", kThreshold},
            {"pass", pass},
            {"aggregate", to_json(agg)},
            {"micro", to_json(dense)}};
  if (!f.out.empty()) emit_json(j, f.out, out);
  char buf[128];
  std::snprintf(buf, sizeof buf, "max relative discrepancy (beta/se/t): %.3e\n",
                worst);
  out << buf << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"OLS a/b-test analysis on k-anonymized equivalence classes",
               "kanon"};
  app.require_subcommand(1);

  CommonFlags common;

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "replay telemetry events");
  c_ingest->add_option("--schema", ingest.schema, "table manifest")->required();
  c_ingest->add_option("--events", ingest.events, "event log")->required();
  c_ingest->add_option("--initial", ingest.initial, "table to continue from");
  c_ingest->add_flag("--strict", ingest.strict,
                     "treat consistency warnings as errors");
  add_common(c_ingest, common);

  AggregateArgs agg;
  auto* c_agg = app.add_subcommand("aggregate", "group micro-data into classes");
  c_agg->add_option("--micro", agg.micro, "micro-data CSV")->required();
  c_agg->add_option("--treatment", agg.treatment, "treatment factor")
      ->required();
  c_agg->add_option("--endpoints", agg.endpoints, "comma-separated endpoints")
      ->required();
  c_agg->add_option("--test-id", agg.test_id, "experiment id for telemetry");
  add_common(c_agg, common);

  ReleaseArgs rel;
  auto* c_rel = app.add_subcommand("release", "apply the k-anonymity gate");
  c_rel->add_option("--table", rel.table, "equivalence table")->required();
  c_rel->add_option("--micro", rel.micro,
                    "micro-data for exact suppression (optional)");
  add_common(c_rel, common);

  RegressArgs reg;
  auto* c_reg = app.add_subcommand("regress", "OLS on an equivalence table");
  c_reg->add_option("--table", reg.table, "equivalence table")->required();
  c_reg->add_option("--spec", reg.spec, "design JSON");
  c_reg->add_option("--endpoint", reg.endpoint, "endpoint");
  c_reg->add_option("--factors", reg.factors,
                    "comma-separated main-effect factors (default: all)");
  add_common(c_reg, common);

  ScreenArgs scr;
  auto* c_scr = app.add_subcommand("screen", "pairwise partial-F interaction screen");
  c_scr->add_option("--tables", scr.tables, "directory of pair tables")
      ->required();
  c_scr->add_option("--endpoint", scr.endpoint, "endpoint");
  add_common(c_scr, common);

  AdjustArgs adj;
  auto* c_adj = app.add_subcommand("adjust", "regression-adjusted ATE");
  c_adj->add_option("--table", adj.table, "equivalence table")->required();
  c_adj->add_option("--covariate", adj.covariate, "covariate factor")
      ->required();
  c_adj->add_option("--values", adj.values,
                    "level=value list (default: parse level labels)");
  c_adj->add_option("--endpoint", adj.endpoint, "endpoint");
  add_common(c_adj, common);

  VerifyArgs ver;
  auto* c_ver = app.add_subcommand(
      "verify", "compare the aggregate path with dense micro-data OLS");
  c_ver->add_option("--micro", ver.micro, "micro-data CSV")->required();
  c_ver->add_option("--spec", ver.spec, "design JSON")->required();
  c_ver->add_option("--treatment", ver.treatment, "treatment factor");
  c_ver->add_option("--endpoints", ver.endpoints, "comma-separated endpoints");
  add_common(c_ver, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, common, out, err);
    if (c_agg->parsed()) return cmd_aggregate(agg, common, out);
    if (c_rel->parsed()) return cmd_release(rel, common, out);
    if (c_reg->parsed()) return cmd_regress(reg, common, out);
    if (c_scr->parsed()) return cmd_screen(scr, common, out);
    if (c_adj->parsed()) return cmd_adjust(adj, common, out);
    if (c_ver->parsed()) return cmd_verify(ver, common, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    report_error(err, e);
    return kExitData;
  } catch (const json::exception& e) {
    report_error(err, e);
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    report_error(err, e);
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace kanon::cli
