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

#ifndef USL_KMEANS_HPP_
#define USL_KMEANS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "usl/embedding_io.hpp"

namespace usl {

enum class KMeansInit { kKMeansPlusPlus, kRandomPoints };

std::string_view to_string(KMeansInit init);

struct KMeansOptions {
  KMeansInit init = KMeansInit::kKMeansPlusPlus;
  std::size_t max_iters = 300;
  // Stop once the relative objective decrease falls below this.
  double tol = 1e-6;
  std::uint64_t seed = 0;
  // Independent restarts; the lowest objective wins (earliest on ties).
  std::size_t restarts = 1;
};

// m-way partition with centroids. Every cluster in a returned Clustering has
// at least one member, and objective equals the within-cluster sum of
// squares of `assignment` against `centroids`.
struct Clustering {
  std::size_t clusters = 0;
  std::size_t dim = 0;
  std::vector<std::size_t> assignment;
  std::vector<double> centroids;  // clusters * dim
  double objective = 0.0;
  std::size_t iterations_run = 0;
  // Objective after every full assign + update round of the winning restart.
  std::vector<double> objective_trace;
  std::uint64_t seed = 0;
  std::size_t restart = 0;

  std::span<const double> centroid(std::size_t c) const {
    return {centroids.data() + c * dim, dim};
  }
  std::vector<std::vector<std::size_t>> members() const;
};

// Nearest centroid by squared distance; ties go to the lower cluster id.
std::vector<std::size_t> assign_step(const EmbeddingMatrix& matrix,
                                     std::span<const double> centroids,
                                     std::size_t clusters);

struct UpdateResult {
  std::vector<double> centroids;  // empty clusters are left at zero
  std::vector<std::size_t> empty_clusters;
};

UpdateResult update_step(const EmbeddingMatrix& matrix,
                         std::span<const std::size_t> assignment,
                         std::size_t clusters);

double within_cluster_sum_of_squares(const EmbeddingMatrix& matrix,
                                     std::span<const std::size_t> assignment,
                                     std::span<const double> centroids);

// Lloyd's algorithm. Empty clusters are re-seeded to the member of the
// largest cluster farthest from its centroid, followed by an extra assign
// step; if that cannot eliminate them (duplicate data) a DataError is thrown.
Clustering kmeans_fit(const EmbeddingMatrix& matrix, std::size_t clusters,
                      const KMeansOptions& options = {});

}  // namespace usl

#endif  // USL_KMEANS_HPP_
