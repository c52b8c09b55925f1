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

#include "kanon/interaction.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <thread>

#include "kanon/distributions.h"
#include "kanon/errors.h"
#include "kanon/ols.h"

namespace kanon {

std::string to_string(Correction method) {
  switch (method) {
    case Correction::kBonferroni:
      return "bonferroni";
    case Correction::kSidak:
      return "sidak";
    case Correction::kBenjaminiHochberg:
      return "bh";
  }
  return {};
}

Correction parse_correction(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "bonferroni") return Correction::kBonferroni;
  if (lower == "sidak") return Correction::kSidak;
  if (lower == "bh" || lower == "benjamini-hochberg" || lower == "fdr")
    return Correction::kBenjaminiHochberg;
  throw std::invalid_argument("unknown correction method '" +
                              std::string(text) + "'");
}

namespace {

void check_full_crossing(const EquivalenceTable& t, const std::string& a,
                         const std::string& b) {
  std::map<std::pair<std::string, std::string>, std::int64_t> cells;
  for (const auto& la : observed_levels(t, a))
    for (const auto& lb : observed_levels(t, b)) cells[{la, lb}] = 0;
  for (const auto& [key, row] : t.rows())
    if (row.count > 0) cells[{key.level(a), key.level(b)}] += row.count;
  std::vector<std::string> empty;
  for (const auto& [levels, count] : cells)
    if (count == 0)
      empty.push_back("(" + a + "=" + levels.first + ", " + b + "=" +
                      levels.second + ")");
  if (empty.empty()) return;
  std::string msg = "sparse-cell: no subjects in interaction cell(s) ";
  for (std::size_t i = 0; i < empty.size(); ++i) {
    if (i) msg += "; ";
    msg += empty[i];
  }
  throw SparseCellError(msg, std::move(empty));
}

}  // namespace

double partial_f_statistic(double res_ss_main, double res_ss_full,
                           std::int64_t p_extra, std::int64_t df2) {
  if (p_extra < 1 || df2 < 1)
    throw InsufficientDfError("partial F needs positive degrees of freedom");
  const double gain = std::max(0.0, res_ss_main - res_ss_full);
  if (res_ss_full <= 0.0)
    return gain > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return (gain / static_cast<double>(p_extra)) /
         (res_ss_full / static_cast<double>(df2));
}

PartialFResult partial_f(const EquivalenceTable& t, const std::string& factor_a,
                         const std::string& factor_b,
                         const std::string& endpoint,
                         const ReferenceLevels& references) {
  check_full_crossing(t, factor_a, factor_b);
  const DesignSpec full =
      full_interaction_design(t, factor_a, factor_b, endpoint, references);
  const std::size_t la = observed_levels(t, factor_a).size();
  const std::size_t lb = observed_levels(t, factor_b).size();
  const std::size_t k_main = 1 + (la - 1) + (lb - 1);

  const GramianSystem g_full = build_dummy(t, full);
  const GramianSystem g_main = g_full.leading(k_main);

  PartialFResult r;
  r.pair = {factor_a, factor_b};
  r.endpoint = endpoint;
  r.n = g_full.n;
  r.k_full = static_cast<std::int64_t>(g_full.p());
  r.p_extra = r.k_full - static_cast<std::int64_t>(k_main);
  r.df2 = r.n - r.k_full;
  if (r.p_extra < 1)
    throw DesignError("factors '" + factor_a + "' and '" + factor_b +
                      "' need at least two levels each");
  if (r.df2 < 1)
    throw InsufficientDfError("full model with " + std::to_string(r.k_full) +
                              " parameters needs more than " +
                              std::to_string(r.n) + " subjects");
  const OlsFit main_fit = solve(g_main);
  const OlsFit full_fit = solve(g_full);
  r.res_ss_main = main_fit.res_ss;
  r.res_ss_full = full_fit.res_ss;
  r.f_stat = partial_f_statistic(r.res_ss_main, r.res_ss_full, r.p_extra,
                                 r.df2);
  r.p_raw = f_p_value(r.f_stat, static_cast<double>(r.p_extra),
                      static_cast<double>(r.df2));
  r.p_adjusted = r.p_raw;
  return r;
}

PartialFResult partial_f(const EquivalenceTable& t, const std::string& factor_a,
                         const std::string& factor_b) {
  if (t.endpoints().empty()) throw SchemaError("table has no endpoints");
  return partial_f(t, factor_a, factor_b, t.endpoints().front());
}

std::vector<double> adjust_p(const std::vector<double>& p_raw,
                             Correction method) {
  const std::size_t m = p_raw.size();
  for (double p : p_raw)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("p-values must lie in [0, 1]");
  std::vector<double> out(m);
  const double dm = static_cast<double>(m);
  switch (method) {
    case Correction::kBonferroni:
      for (std::size_t i = 0; i < m; ++i) out[i] = std::min(1.0, p_raw[i] * dm);
      break;
    case Correction::kSidak:
      for (std::size_t i = 0; i < m; ++i)
        out[i] = std::min(1.0, -std::expm1(dm * std::log1p(-p_raw[i])));
      break;
    case Correction::kBenjaminiHochberg: {
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return p_raw[a] < p_raw[b];
      });
      double running = 1.0;
      for (std::size_t r = m; r-- > 0;) {
        const double q = p_raw[order[r]] * dm / static_cast<double>(r + 1);
        running = std::min(running, q);
        out[order[r]] = running;
      }
      break;
    }
  }
  return out;
}

std::vector<PartialFResult> screen_all(
    const std::map<PairKey, ScreenInput>& tables, Correction method,
    double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0, 1)");
  std::vector<const std::pair<const PairKey, ScreenInput>*> items;
  for (const auto& entry : tables) items.push_back(&entry);
  std::vector<PartialFResult> results(items.size());

  auto evaluate = [&](std::size_t i) {
    const auto& [pair, input] = *items[i];
    PartialFResult r;
    try {
      const std::string endpoint =
          input.endpoint.empty() && !input.table.endpoints().empty()
              ? input.table.endpoints().front()
              : input.endpoint;
      r = partial_f(input.table, pair.first, pair.second, endpoint);
    } catch (const std::exception& e) {
      r = PartialFResult{};
      r.pair = pair;
      r.endpoint = input.endpoint;
      r.res_ss_main = r.res_ss_full = r.f_stat = r.p_raw = r.p_adjusted =
          std::numeric_limits<double>::quiet_NaN();
      r.diagnostic = e.what();
    }
    results[i] = std::move(r);
  };

  const std::size_t workers = std::min<std::size_t>(
      items.size(), std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) evaluate(i);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < items.size(); i += workers) evaluate(i);
      }));
    }
    for (auto& j : jobs) j.get();
  }

  std::vector<std::size_t> family;
  std::vector<double> raw;
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].method = method;
    if (results[i].ok()) {
      family.push_back(i);
      raw.push_back(results[i].p_raw);
    }
  }
  const auto adjusted = adjust_p(raw, method);
  for (std::size_t j = 0; j < family.size(); ++j) {
    auto& r = results[family[j]];
    r.p_adjusted = adjusted[j];
    r.rejected = r.p_adjusted <= alpha;
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const PartialFResult& a, const PartialFResult& b) {
                     if (a.ok() != b.ok()) return a.ok();
                     if (!a.ok()) return false;
                     return a.p_adjusted < b.p_adjusted;
                   });
  return results;
}

std::vector<PartialFResult> screen_all(
    const std::map<PairKey, EquivalenceTable>& tables, Correction method,
    double alpha) {
  std::map<PairKey, ScreenInput> inputs;
  for (const auto& [pair, t] : tables) inputs.emplace(pair, ScreenInput{t, {}});
  return screen_all(inputs, method, alpha);
}

std::int64_t family_size(std::int64_t tests) {
  if (tests < 2) return 0;
  return tests * (tests - 1) / 2;
}

}  // namespace kanon
