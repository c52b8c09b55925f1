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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kanon/adjust.h"
#include "kanon/equivalence.h"
#include "kanon/errors.h"
#include "kanon/gramian.h"
#include "kanon/interaction.h"
#include "kanon/ols.h"
#include "kanon/serialize.h"
#include "kanon/table_io.h"
#include "kanon/telemetry.h"

namespace py = pybind11;

namespace kanon {
namespace {

using nlohmann::json;

// Records arrive as dicts. Keys other than user_id and the endpoints are
// factors unless `factors` is given.
std::vector<MicroRecord> to_micro(const std::vector<py::dict>& records,
                                  const std::vector<std::string>& endpoints,
                                  const std::vector<std::string>& factors) {
  std::vector<MicroRecord> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    MicroRecord m;
    std::vector<Assignment> key;
    for (const auto& [k, v] : rec) {
      const auto name = py::str(k).cast<std::string>();
      if (name == "user_id") {
        m.user_id = py::str(v).cast<std::string>();
      } else if (std::find(endpoints.begin(), endpoints.end(), name) !=
                 endpoints.end()) {
        m.outcomes[name] = v.cast<double>();
      } else if (factors.empty() ||
                 std::find(factors.begin(), factors.end(), name) != factors.end()) {
        key.push_back({name, py::str(v).cast<std::string>()});
      }
    }
    m.assignments = ClassKey(std::move(key));
    out.push_back(std::move(m));
  }
  return out;
}

py::list rows_of(const EquivalenceTable& t) {
  py::list out;
  for (const auto& [key, row] : t.rows()) {
    py::dict d;
    py::dict levels;
    for (const auto& a : key.assignments()) levels[py::str(a.factor)] = a.level;
    d["key"] = levels;
    d["count"] = row.count;
    d["sums"] = std::map<std::string, double>(row.sums.begin(), row.sums.end());
    out.append(d);
  }
  return out;
}

std::string regress(const EquivalenceTable& t, const std::string& spec_json) {
  const auto spec = design_spec_from_json(
      spec_json.empty() ? json::object() : json::parse(spec_json), t);
  return to_json(solve(build(t, spec))).dump();
}

std::string adjust_json(const EquivalenceTable& t, const std::string& covariate,
                        const std::map<std::string, double>& values,
                        const std::string& endpoint, bool pate) {
  const LevelValues v = values.empty()
                            ? values_from_labels(t, covariate)
                            : LevelValues(values.begin(), values.end());
  auto r = adjust(t, {CovariateSpec{covariate, v}},
                  endpoint.empty() ? t.schema().endpoints.at(0) : endpoint);
  if (pate) attach_pate(r, t);
  return to_json(r).dump();
}

std::string screen_json(const std::map<PairKey, EquivalenceTable>& tables,
                        const std::string& method, double alpha) {
  const auto c = parse_correction(method);
  return to_json(screen_all(tables, c, alpha), c, alpha).dump();
}

}  // namespace
}  // namespace kanon

PYBIND11_MODULE(_core, m) {
  using namespace kanon;
  m.doc() = "OLS on k-anonymized equivalence-class tables";

  auto& base = py::register_exception<Error>(m, "KanonError", PyExc_ValueError);
  py::register_exception<KAnonymityError>(m, "KAnonymityError", base.ptr());
  py::register_exception<StaleTssError>(m, "StaleTssError", base.ptr());
  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", base.ptr());
  py::register_exception<SparseCellError>(m, "SparseCellError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<DesignError>(m, "DesignError", base.ptr());
  py::register_exception<ConsistencyError>(m, "ConsistencyError", base.ptr());
  py::register_exception<InsufficientDfError>(m, "InsufficientDfError", base.ptr());
  py::register_exception<NotSupportedError>(m, "NotSupportedError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<DataMinimizationError>(m, "DataMinimizationError",
                                                base.ptr());
  // Carries the offending class keys on the exception object.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const KAnonymityError& e) {
      py::object cls = py::module_::import("kanon_ols._core").attr("KAnonymityError");
      py::object err = cls(e.what());
      err.attr("classes") = e.offending();
      PyErr_SetObject(cls.ptr(), err.ptr());
    }
  });

  py::class_<EquivalenceTable>(m, "Table")
      .def_property_readonly("n", &EquivalenceTable::n)
      .def_property_readonly("treatment_factor", &EquivalenceTable::treatment_factor)
      .def_property_readonly("factors",
                             [](const EquivalenceTable& t) { return t.schema().factors; })
      .def_property_readonly("endpoints",
                             [](const EquivalenceTable& t) { return t.schema().endpoints; })
      .def_property_readonly("test_id",
                             [](const EquivalenceTable& t) { return t.schema().test_id; })
      .def_property_readonly("tss_stale", &EquivalenceTable::tss_stale)
      .def_property_readonly("k_anonymity", &k_anonymity)
      .def_property_readonly("rows", &rows_of)
      .def_property_readonly("arm_tss",
                             [](const EquivalenceTable& t) {
                               py::dict d;
                               for (const auto& a : t.arm_tss())
                                 d[py::str(a.level)] = std::map<std::string, double>(
                                     a.tss.begin(), a.tss.end());
                               return d;
                             })
      .def("__len__", &EquivalenceTable::num_classes)
      .def("__eq__", [](const EquivalenceTable& a, const EquivalenceTable& b) {
        return a == b;
      });

  m.def("aggregate",
        [](const std::vector<py::dict>& records, const std::string& treatment,
           const std::vector<std::string>& endpoints,
           const std::vector<std::string>& factors, const std::string& test_id) {
          const auto micro = to_micro(records, endpoints, factors);
          std::vector<std::string> f = factors;
          if (f.empty() && !micro.empty())
            for (const auto& a : micro.front().assignments.assignments())
              f.push_back(a.factor);
          return aggregate(micro, make_schema(treatment, f, endpoints, test_id));
        },
        py::arg("records"), py::arg("treatment"), py::arg("endpoints"),
        py::arg("factors") = std::vector<std::string>{},
        py::arg("test_id") = std::string{});
  m.def("merge", &merge, py::arg("a"), py::arg("b"));
  m.def("read_table",
        [](const std::filesystem::path& p) { return read_table(p); }, py::arg("path"));
  m.def("write_table", &write_table, py::arg("table"), py::arg("path"));
  m.def("read_micro_csv",
        [](const std::filesystem::path& p, const std::vector<std::string>& endpoints) {
          py::list out;
          for (const auto& r : read_micro_csv(p, endpoints)) {
            py::dict d;
            d["user_id"] = r.user_id;
            for (const auto& a : r.assignments.assignments()) d[py::str(a.factor)] = a.level;
            for (const auto& [e, v] : r.outcomes) d[py::str(e)] = v;
            out.append(d);
          }
          return out;
        },
        py::arg("path"), py::arg("endpoints"));
  m.def("release",
        [](const EquivalenceTable& t, std::int64_t k, const std::string& policy,
           std::optional<std::vector<py::dict>> micro) {
          const auto pol = parse_release_policy(policy);
          if (!micro) return release(t, k, pol);
          return release(t, k, pol, to_micro(*micro, t.schema().endpoints, t.schema().factors));
        },
        py::arg("table"), py::arg("k"), py::arg("policy") = "reject",
        py::arg("micro") = py::none());
  m.def("replay",
        [](EquivalenceTable& t, const std::string& events) {
          std::istringstream in(events);
          const auto s = replay(t, in);
          py::dict d;
          d["events"] = s.events;
          d["assigns"] = s.assigns;
          d["outcomes"] = s.outcomes;
          d["warnings"] = s.warnings;
          return d;
        },
        py::arg("table"), py::arg("events"),
        "Applies a newline-separated event log to the table in place.");
  m.def("empty_table",
        [](const std::string& treatment, const std::vector<std::string>& factors,
           const std::vector<std::string>& endpoints, const std::string& test_id) {
          return EquivalenceTable(make_schema(treatment, factors, endpoints, test_id));
        },
        py::arg("treatment"), py::arg("factors"), py::arg("endpoints"),
        py::arg("test_id") = std::string{});
  m.def("_regress", &regress);
  m.def("_partial_f",
        [](const EquivalenceTable& t, const std::string& a, const std::string& b,
           const std::string& endpoint) {
          return to_json(partial_f(t, a, b,
                                   endpoint.empty() ? t.schema().endpoints.at(0)
                                                    : endpoint))
              .dump();
        });
  m.def("_screen", &screen_json);
  m.def("_adjust", &adjust_json);
  m.def("_adjust_p",
        [](const std::vector<double>& p, const std::string& method) {
          return adjust_p(p, parse_correction(method));
        });
}
