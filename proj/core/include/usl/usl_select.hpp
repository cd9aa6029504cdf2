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

#ifndef USL_USL_SELECT_HPP_
#define USL_USL_SELECT_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usl/embedding_io.hpp"
#include "usl/kmeans.hpp"
#include "usl/neighbor_density.hpp"

namespace usl {

enum class ScaleProfile { kSmall, kLarge };

std::string_view to_string(ScaleProfile profile);
ScaleProfile parse_profile(std::string_view name);

struct UslParams {
  std::size_t k = 400;
  double reg_lambda = 0.5;
  double reg_alpha = 0.5;
  double momentum = 0.9;
  std::size_t iterations = 10;
  std::optional<std::size_t> horizon;
  std::uint64_t seed = 0;
  // Clustering settings; `kmeans.seed` is replaced by `seed`.
  KMeansOptions kmeans{.restarts = 5};

  // Small-scale column: k = 400, m_reg = 0.9, l = 10, and
  // (alpha, lambda) = (0.5, 0.5) up to 100 samples, (1.0, 1.0) above.
  static UslParams small_scale(std::size_t budget);
  // Large-scale column: k = 20, horizon 64, (alpha, lambda) = (0.5, 1.5), a
  // single iteration without momentum.
  static UslParams large_scale();
  static UslParams for_profile(ScaleProfile profile, std::size_t budget);

  void validate() const;
};

struct IterationSnapshot {
  std::vector<std::size_t> selected;   // one per cluster, cluster order
  std::vector<double> scores;          // regularized utility of each pick
};

// Selected instances in cluster order, plus the per-iteration trajectory.
struct SelectionResult {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> cluster_of;
  std::vector<IterationSnapshot> history;
  std::vector<std::string> warnings;

  SelectionFile to_selection_file() const { return SelectionFile{indices}; }
};

struct UslRun {
  SelectionResult selection;
  UslParams params;
  Clustering clustering;
  UtilityScores utility;
};

// Exponential moving average of the inter-cluster penalty, one value per
// instance; starts at zero.
struct RegularizationState {
  std::vector<double> smoothed;
  explicit RegularizationState(std::size_t n) : smoothed(n, 0.0) {}
};

struct RegularizedUtilities {
  std::vector<double> scores;
  // Candidates coincident with another cluster's pick; their score is -inf.
  std::vector<std::size_t> excluded;
};

// One regularization round: penalize every candidate by the inverse
// alpha-power distance to picks from other clusters (restricted to its
// `horizon` nearest picks when set), smooth with momentum, and subtract
// lambda times the smoothed penalty from the base utility.
RegularizedUtilities regularize_utilities(
    const EmbeddingMatrix& matrix, std::span<const double> utility,
    std::span<const std::size_t> assignment,
    std::span<const std::size_t> selected, RegularizationState& state,
    const UslParams& params);

// Per-cluster argmax of `scores`; ties go to the lower index.
std::vector<std::size_t> repick_per_cluster(
    std::span<const double> scores, std::span<const std::size_t> assignment,
    std::size_t clusters);

// Runs density estimation, clustering with clusters == budget, and the
// iterative regularization. Requires L2-normalized embeddings.
UslRun select_usl(const EmbeddingMatrix& matrix, std::size_t budget,
                  const UslParams& params);

// Same as select_usl but with a precomputed clustering and utilities.
SelectionResult select_with_regularization(const EmbeddingMatrix& matrix,
                                           const UtilityScores& utility,
                                           const Clustering& clustering,
                                           const UslParams& params);

}  // namespace usl

#endif  // USL_USL_SELECT_HPP_
