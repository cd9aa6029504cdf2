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

#ifndef USL_NEIGHBOR_DENSITY_HPP_
#define USL_NEIGHBOR_DENSITY_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "usl/embedding_io.hpp"

namespace usl {

// Exact k-nearest-neighbor graph. Row i lists the k closest other instances
// in ascending Euclidean distance, ties broken by lower index.
struct NeighborGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // n * k
  std::vector<double> distances;       // n * k

  std::span<const std::size_t> neighbors_of(std::size_t i) const {
    return {neighbors.data() + i * k, k};
  }
  std::span<const double> distances_of(std::size_t i) const {
    return {distances.data() + i * k, k};
  }
};

struct UtilityScores {
  std::vector<double> mean_knn_distance;
  std::vector<double> utility;  // 1 / mean_knn_distance
};

enum class DensityMode { kKth, kMean };

// sqrt of the sequentially accumulated sum of squared differences. Every
// distance reported by the library goes through this function.
double euclidean_distance(std::span<const double> a, std::span<const double> b);

// Requires 1 <= k <= n - 1. Parallel over query blocks; output is identical
// for every thread count.
NeighborGraph build_knn_graph(const EmbeddingMatrix& matrix, std::size_t k);

std::vector<double> mean_knn_distance(const NeighborGraph& graph);

// log of the volume of the unit d-ball, via lgamma.
double log_unit_ball_volume(std::size_t dim);

// Log kNN density: log(k/n) - log A_d - d log D, where D is either the k-th
// neighbor distance or the mean neighbor distance. Throws DataError on a zero
// distance, naming the instance.
std::vector<double> knn_log_density(const NeighborGraph& graph, std::size_t dim,
                                    DensityMode mode);

// Representativeness used by the selector. Throws DataError when an instance
// has zero mean neighbor distance (coincident duplicates).
UtilityScores utility_scores(const NeighborGraph& graph);

}  // namespace usl

#endif  // USL_NEIGHBOR_DENSITY_HPP_
