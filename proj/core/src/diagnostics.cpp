// Copyright 2026 The USL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "usl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "usl/errors.hpp"
#include "usl/rng.hpp"

namespace usl {

SelectionReport report(const SelectionFile& selection, const LabelVector& labels,
                       const EmbeddingMatrix& matrix,
                       const UtilityScores& utility) {
  const std::size_t n = matrix.rows();
  if (labels.size() != n) {
    throw DataError("label count " + std::to_string(labels.size()) +
                    " does not match instance count " + std::to_string(n));
  }
  if (utility.utility.size() != n) {
    throw DataError("utility count does not match instance count");
  }
  validate_selection(selection, n);

  // Work on a sorted copy so the report does not depend on selection order.
  std::vector<std::size_t> picked = selection.indices;
  std::sort(picked.begin(), picked.end());

  SelectionReport out;
  out.budget = picked.size();
  out.per_class_counts.assign(labels.num_classes, 0);
  for (std::size_t idx : picked) ++out.per_class_counts[labels.labels[idx]];
  out.coverage = static_cast<std::size_t>(
      std::count_if(out.per_class_counts.begin(), out.per_class_counts.end(),
                    [](std::size_t c) { return c > 0; }));

  const double classes = static_cast<double>(labels.num_classes);
  const double mean_count = static_cast<double>(out.budget) / classes;
  double var = 0.0;
  for (std::size_t c : out.per_class_counts) {
    const double diff = static_cast<double>(c) - mean_count;
    var += diff * diff;
  }
  out.count_std = std::sqrt(var / classes);
  // Exact zero whenever the counts are all equal.
  if (std::all_of(out.per_class_counts.begin(), out.per_class_counts.end(),
                  [&](std::size_t c) { return c == out.per_class_counts[0]; })) {
    out.count_std = 0.0;
  }

  std::vector<double> sorted_utility = utility.utility;
  std::sort(sorted_utility.begin(), sorted_utility.end());
  double percentile_sum = 0.0;
  for (std::size_t idx : picked) {
    const auto below = std::lower_bound(sorted_utility.begin(),
                                        sorted_utility.end(),
                                        utility.utility[idx]) -
                       sorted_utility.begin();
    percentile_sum += n > 1 ? 100.0 * static_cast<double>(below) /
                                  static_cast<double>(n - 1)
                            : 100.0;
  }
  out.mean_utility_rank_percentile =
      percentile_sum / static_cast<double>(out.budget);

  out.min_pairwise_distance = 0.0;
  if (picked.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < picked.size(); ++a) {
      for (std::size_t b = a + 1; b < picked.size(); ++b) {
        best = std::min(best, euclidean_distance(matrix.row(picked[a]),
                                                 matrix.row(picked[b])));
      }
    }
    out.min_pairwise_distance = best;
  }
  return out;
}

nlohmann::json to_json(const SelectionReport& report) {
  return {
      {"budget", report.budget},
      {"coverage", report.coverage},
      {"per_class_counts", report.per_class_counts},
      {"count_std", report.count_std},
      {"mean_utility_rank_percentile", report.mean_utility_rank_percentile},
      {"min_pairwise_distance", report.min_pairwise_distance},
  };
}

std::string_view to_string(Layout layout) {
  return layout == Layout::kRing ? "ring" : "random_centers";
}

Layout parse_layout(std::string_view name) {
  if (name == "ring") return Layout::kRing;
  if (name == "random_centers" || name == "random") return Layout::kRandomCenters;
  throw InvalidArgument("unknown layout '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  if (modes < 1 || per_mode < 1 || dim < 1) {
    throw InvalidArgument("modes, per_mode and dim must be positive");
  }
  if (!(sigma > 0.0) || !(radius > 0.0)) {
    throw InvalidArgument("sigma and radius must be positive");
  }
  if (layout == Layout::kRing && dim < 2) {
    throw InvalidArgument("ring layout needs dim >= 2");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim;
  Rng rng(spec.seed);

  std::vector<double> centers(spec.modes * d, 0.0);
  for (std::size_t m = 0; m < spec.modes; ++m) {
    double* center = centers.data() + m * d;
    if (spec.layout == Layout::kRing) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) /
                           static_cast<double>(spec.modes);
      center[0] = spec.radius * std::cos(angle);
      center[1] = spec.radius * std::sin(angle);
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        center[j] = rng.uniform(-spec.radius, spec.radius);
      }
    }
  }

  const std::size_t n = spec.modes * spec.per_mode;
  std::vector<double> data(n * d);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t m = 0; m < spec.modes; ++m) {
    for (std::size_t p = 0; p < spec.per_mode; ++p) {
      const std::size_t i = m * spec.per_mode + p;
      labels[i] = static_cast<std::uint32_t>(m);
      for (std::size_t j = 0; j < d; ++j) {
        data[i * d + j] = centers[m * d + j] + spec.sigma * rng.normal();
      }
    }
  }
  EmbeddingMatrix embeddings(n, d, std::move(data));
  if (spec.normalize) embeddings = l2_normalize(embeddings);
  return {std::move(embeddings), make_labels(std::move(labels), spec.modes),
          std::move(centers)};
}

SelectionFile random_selection(std::size_t n, std::size_t budget,
                               std::uint64_t seed) {
  if (budget < 1 || budget > n) {
    throw InvalidArgument("budget must be in [1, n]");
  }
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < budget; ++i) {
    std::swap(order[i], order[i + rng.below(n - i)]);
  }
  order.resize(budget);
  return SelectionFile{std::move(order)};
}

SelectionFile stratified_selection(const LabelVector& labels, std::size_t budget,
                                   std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (budget < 1 || budget > n) {
    throw InvalidArgument("budget must be in [1, n]");
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(labels.num_classes);
  for (std::size_t i = 0; i < n; ++i) by_class[labels.labels[i]].push_back(i);
  // Shuffle each class once; quotas then take prefixes.
  for (auto& members : by_class) {
    for (std::size_t i = 0; i + 1 < members.size(); ++i) {
      std::swap(members[i], members[i + rng.below(members.size() - i)]);
    }
  }
  // Round-robin over classes keeps counts within one of each other whenever
  // class sizes allow.
  std::vector<std::size_t> taken(labels.num_classes, 0);
  SelectionFile out;
  while (out.indices.size() < budget) {
    for (std::size_t c = 0; c < labels.num_classes && out.indices.size() < budget;
         ++c) {
      if (taken[c] < by_class[c].size()) {
        out.indices.push_back(by_class[c][taken[c]++]);
      }
    }
  }
  return out;
}

std::vector<ComparisonRow> compare(const std::vector<NamedSelection>& selections,
                                   const LabelVector& labels,
                                   const EmbeddingMatrix& matrix,
                                   const UtilityScores& utility) {
  if (selections.empty()) {
    throw InvalidArgument("comparison needs at least one selection");
  }
  std::vector<ComparisonRow> rows;
  rows.reserve(selections.size());
  for (const auto& entry : selections) {
    rows.push_back({entry.name, entry.oracle,
                    report(entry.selection, labels, matrix, utility)});
  }
  return rows;
}

nlohmann::json to_json(const std::vector<ComparisonRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json entry = to_json(row.report);
    entry["name"] = row.name;
    entry["oracle_baseline"] = row.oracle;
    const auto& counts = row.report.per_class_counts;
    if (!counts.empty()) {
      entry["min_class_count"] = *std::min_element(counts.begin(), counts.end());
      entry["max_class_count"] = *std::max_element(counts.begin(), counts.end());
    }
    out.push_back(std::move(entry));
  }
  return out;
}

std::string format_table(const std::vector<ComparisonRow>& rows) {
  std::size_t name_width = 8;
  for (const auto& row : rows) {
    name_width = std::max(name_width, row.name.size() + (row.oracle ? 1 : 0));
  }
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s %6s %8s %9s %9s %8s %8s\n",
                static_cast<int>(name_width), "strategy", "budget", "coverage",
                "count_std", "min/max", "util_pct", "min_dist");
  out += line;
  for (const auto& row : rows) {
    const auto& r = row.report;
    const auto [lo, hi] = std::minmax_element(r.per_class_counts.begin(),
                                              r.per_class_counts.end());
    const std::string minmax =
        std::to_string(*lo) + "/" + std::to_string(*hi);
    const std::string name = row.name + (row.oracle ? "*" : "");
    std::snprintf(line, sizeof(line), "%-*s %6zu %8zu %9.4f %9s %8.2f %8.4f\n",
                  static_cast<int>(name_width), name.c_str(), r.budget,
                  r.coverage, r.count_std, minmax.c_str(),
                  r.mean_utility_rank_percentile, r.min_pairwise_distance);
    out += line;
  }
  if (std::any_of(rows.begin(), rows.end(),
                  [](const ComparisonRow& r) { return r.oracle; })) {
    out += "* oracle baseline (uses ground-truth labels; not a fair comparison)\n";
  }
  return out;
}

}  // namespace usl
