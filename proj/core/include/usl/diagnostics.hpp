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

#ifndef USL_DIAGNOSTICS_HPP_
#define USL_DIAGNOSTICS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "usl/embedding_io.hpp"
#include "usl/neighbor_density.hpp"

namespace usl {

inline constexpr std::string_view kReportSchema = "usl.report/1";

// Post-hoc quality of a selection. Labels are consulted here only.
struct SelectionReport {
  std::size_t budget = 0;
  std::size_t coverage = 0;
  std::vector<std::size_t> per_class_counts;
  // Population standard deviation of per_class_counts.
  double count_std = 0.0;
  // Mean percentile rank (0..100, higher = more representative) of the
  // selected instances' utilities within the whole dataset.
  double mean_utility_rank_percentile = 0.0;
  double min_pairwise_distance = 0.0;  // 0 for a single selection
};

SelectionReport report(const SelectionFile& selection, const LabelVector& labels,
                       const EmbeddingMatrix& matrix,
                       const UtilityScores& utility);

nlohmann::json to_json(const SelectionReport& report);

enum class Layout { kRing, kRandomCenters };

std::string_view to_string(Layout layout);
Layout parse_layout(std::string_view name);

struct SyntheticSpec {
  std::size_t modes = 10;
  std::size_t per_mode = 100;
  std::size_t dim = 2;
  double sigma = 0.3;
  Layout layout = Layout::kRing;
  // Ring radius, or half-width of the cube that random centers are drawn in.
  double radius = 5.0;
  std::uint64_t seed = 0;
  bool normalize = false;

  void validate() const;
};

struct SyntheticData {
  EmbeddingMatrix embeddings;
  LabelVector labels;
  std::vector<double> centers;  // modes * dim
};

// Seeded isotropic Gaussian mixture, instances grouped by mode. Ring centers
// sit evenly on a circle in the first two coordinates.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Seeded baselines. The stratified selector reads labels and is therefore an
// oracle baseline, not an unsupervised method.
SelectionFile random_selection(std::size_t n, std::size_t budget,
                               std::uint64_t seed);
SelectionFile stratified_selection(const LabelVector& labels, std::size_t budget,
                                   std::uint64_t seed);

struct NamedSelection {
  std::string name;
  SelectionFile selection;
  bool oracle = false;
};

struct ComparisonRow {
  std::string name;
  bool oracle = false;
  SelectionReport report;
};

std::vector<ComparisonRow> compare(const std::vector<NamedSelection>& selections,
                                   const LabelVector& labels,
                                   const EmbeddingMatrix& matrix,
                                   const UtilityScores& utility);

nlohmann::json to_json(const std::vector<ComparisonRow>& rows);
std::string format_table(const std::vector<ComparisonRow>& rows);

}  // namespace usl

#endif  // USL_DIAGNOSTICS_HPP_
