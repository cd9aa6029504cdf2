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

#include "usl/kmeans.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "usl/errors.hpp"
#include "usl/parallel.hpp"
#include "usl/rng.hpp"

namespace usl {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

constexpr std::size_t kAssignChunk = 256;

double squared_distance(std::span<const double> a, const double* b) {
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    sq += diff * diff;
  }
  return sq;
}

std::vector<double> init_random_points(const EmbeddingMatrix& matrix,
                                       std::size_t clusters, Rng& rng) {
  const std::size_t n = matrix.rows();
  const std::size_t d = matrix.cols();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> centroids(clusters * d);
  for (std::size_t c = 0; c < clusters; ++c) {
    const std::size_t pick = c + rng.below(n - c);
    std::swap(order[c], order[pick]);
    std::copy_n(matrix.row(order[c]).begin(), d, centroids.begin() + c * d);
  }
  return centroids;
}

std::vector<double> init_kmeans_plus_plus(const EmbeddingMatrix& matrix,
                                          std::size_t clusters, Rng& rng) {
  const std::size_t n = matrix.rows();
  const std::size_t d = matrix.cols();
  std::vector<double> centroids(clusters * d);
  std::vector<bool> chosen(n, false);

  std::size_t first = rng.below(n);
  chosen[first] = true;
  std::copy_n(matrix.row(first).begin(), d, centroids.begin());

  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) {
    nearest[i] = squared_distance(matrix.row(i), centroids.data());
  }
  for (std::size_t c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += nearest[i];

    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double running = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        running += nearest[i];
        if (nearest[i] > 0.0 && running > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        // Rounding left target beyond the last increment.
        for (std::size_t i = n; i-- > 0;) {
          if (nearest[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // All remaining points coincide with chosen centroids.
      const std::size_t remaining = n - c;
      std::size_t skip = rng.below(remaining);
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        if (skip-- == 0) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = true;
    double* centroid = centroids.data() + c * d;
    std::copy_n(matrix.row(pick).begin(), d, centroid);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(matrix.row(i), centroid));
    }
  }
  return centroids;
}

// Moves each empty cluster's centroid onto the member of the currently
// largest cluster that lies farthest from its centroid. A cluster whose
// members all sit on its centroid cannot donate, so the next largest is tried.
// Returns false when no donor point exists.
bool reseed_empty_clusters(const EmbeddingMatrix& matrix,
                           std::vector<std::size_t>& assignment,
                           std::vector<double>& centroids,
                           std::span<const std::size_t> empty,
                           std::size_t clusters) {
  const std::size_t d = matrix.cols();
  std::vector<std::size_t> counts(clusters, 0);
  for (std::size_t c : assignment) ++counts[c];
  for (std::size_t target : empty) {
    std::vector<std::size_t> order(clusters);
    for (std::size_t c = 0; c < clusters; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return counts[a] > counts[b];
    });
    std::size_t far_point = matrix.rows();
    std::size_t donor = clusters;
    for (std::size_t candidate : order) {
      if (counts[candidate] < 2) break;
      double far_dist = 0.0;
      const double* center = centroids.data() + candidate * d;
      for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] != candidate) continue;
        const double dist = squared_distance(matrix.row(i), center);
        if (dist > far_dist) {
          far_dist = dist;
          far_point = i;
        }
      }
      if (far_point != matrix.rows()) {
        donor = candidate;
        break;
      }
    }
    if (donor == clusters) return false;
    std::copy_n(matrix.row(far_point).begin(), d,
                centroids.begin() + static_cast<std::ptrdiff_t>(target * d));
    assignment[far_point] = target;
    --counts[donor];
    ++counts[target];
  }
  return true;
}

struct Run {
  std::vector<std::size_t> assignment;
  std::vector<double> centroids;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::vector<double> trace;
};

Run lloyd(const EmbeddingMatrix& matrix, std::size_t clusters,
          const KMeansOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  Run run;
  run.centroids = options.init == KMeansInit::kKMeansPlusPlus
                      ? init_kmeans_plus_plus(matrix, clusters, rng)
                      : init_random_points(matrix, clusters, rng);

  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    run.assignment = assign_step(matrix, run.centroids, clusters);
    UpdateResult update = update_step(matrix, run.assignment, clusters);

    for (int attempt = 0; !update.empty_clusters.empty(); ++attempt) {
      // The re-seed donor is chosen relative to the fresh means.
      for (std::size_t c = 0; c < clusters; ++c) {
        if (std::find(update.empty_clusters.begin(), update.empty_clusters.end(),
                      c) == update.empty_clusters.end()) {
          std::copy_n(update.centroids.begin() +
                          static_cast<std::ptrdiff_t>(c * matrix.cols()),
                      matrix.cols(),
                      run.centroids.begin() +
                          static_cast<std::ptrdiff_t>(c * matrix.cols()));
        }
      }
      if (attempt >= 3 ||
          !reseed_empty_clusters(matrix, run.assignment, run.centroids,
                                 update.empty_clusters, clusters)) {
        throw DataError("k-means could not repair " +
                        std::to_string(update.empty_clusters.size()) +
                        " empty cluster(s); the data has fewer than " +
                        std::to_string(clusters) + " distinct points");
      }
      run.assignment = assign_step(matrix, run.centroids, clusters);
      update = update_step(matrix, run.assignment, clusters);
    }

    run.centroids = std::move(update.centroids);
    run.objective =
        within_cluster_sum_of_squares(matrix, run.assignment, run.centroids);
    if (!std::isfinite(run.objective)) {
      throw NumericalError("k-means objective became non-finite");
    }
    run.trace.push_back(run.objective);
    run.iterations = iter + 1;
    if (run.objective == 0.0 ||
        (std::isfinite(previous) &&
         previous - run.objective <= options.tol * previous)) {
      break;
    }
    previous = run.objective;
  }
  return run;
}

}  // namespace

std::string_view to_string(KMeansInit init) {
  return init == KMeansInit::kKMeansPlusPlus ? "kmeanspp" : "random_points";
}

std::vector<std::vector<std::size_t>> Clustering::members() const {
  std::vector<std::vector<std::size_t>> out(clusters);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out[assignment[i]].push_back(i);
  }
  return out;
}

std::vector<std::size_t> assign_step(const EmbeddingMatrix& matrix,
                                     std::span<const double> centroids,
                                     std::size_t clusters) {
  const std::size_t n = matrix.rows();
  const std::size_t d = matrix.cols();
  if (clusters == 0 || centroids.size() != clusters * d) {
    throw InvalidArgument("centroid array does not match clusters x dim");
  }
  const ConstRowMap data(matrix.data().data(), static_cast<Eigen::Index>(n),
                         static_cast<Eigen::Index>(d));
  const ConstRowMap centers(centroids.data(), static_cast<Eigen::Index>(clusters),
                            static_cast<Eigen::Index>(d));
  const Eigen::VectorXd center_sq = centers.rowwise().squaredNorm();
  const double max_center_sq = center_sq.maxCoeff();
  // Same screening argument as the kNN search: |c|^2 - 2 x.c is within
  // slack(x) of the exact squared distance minus |x|^2, so every centroid
  // that could be the exact nearest lies within 2 * slack of the screened
  // minimum and is rechecked exactly.
  const double slack_factor =
      4.0 * static_cast<double>(d + 4) * std::numeric_limits<double>::epsilon();

  std::vector<std::size_t> assignment(n);
  const std::size_t blocks = (n + kAssignChunk - 1) / kAssignChunk;
  parallel_for(blocks, [&](std::size_t block_begin, std::size_t block_end) {
    RowMatrix screened;
    for (std::size_t block = block_begin; block < block_end; ++block) {
      const std::size_t r0 = block * kAssignChunk;
      const std::size_t rn = std::min(kAssignChunk, n - r0);
      const auto rows = data.middleRows(static_cast<Eigen::Index>(r0),
                                        static_cast<Eigen::Index>(rn));
      screened.noalias() = -2.0 * rows * centers.transpose();
      screened.rowwise() += center_sq.transpose();
      for (std::size_t local = 0; local < rn; ++local) {
        const std::size_t i = r0 + local;
        const double* row = screened.data() + local * clusters;
        const double lowest = *std::min_element(row, row + clusters);
        const double threshold =
            lowest + 2.0 * slack_factor *
                         (rows.row(static_cast<Eigen::Index>(local)).squaredNorm() +
                          max_center_sq);
        const auto x = matrix.row(i);
        std::size_t best = clusters;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < clusters; ++c) {
          if (row[c] > threshold) continue;
          const double dist = squared_distance(x, centroids.data() + c * d);
          if (best == clusters || dist < best_dist) {
            best_dist = dist;
            best = c;
          }
        }
        assignment[i] = best;
      }
    }
  });
  return assignment;
}

UpdateResult update_step(const EmbeddingMatrix& matrix,
                         std::span<const std::size_t> assignment,
                         std::size_t clusters) {
  const std::size_t d = matrix.cols();
  if (assignment.size() != matrix.rows()) {
    throw InvalidArgument("assignment length does not match instance count");
  }
  UpdateResult result;
  result.centroids.assign(clusters * d, 0.0);
  std::vector<std::size_t> counts(clusters, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const std::size_t c = assignment[i];
    if (c >= clusters) throw InvalidArgument("cluster id out of range");
    ++counts[c];
    double* centroid = result.centroids.data() + c * d;
    const auto x = matrix.row(i);
    for (std::size_t j = 0; j < d; ++j) centroid[j] += x[j];
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    if (counts[c] == 0) {
      result.empty_clusters.push_back(c);
      continue;
    }
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t j = 0; j < d; ++j) result.centroids[c * d + j] *= inv;
  }
  return result;
}

double within_cluster_sum_of_squares(const EmbeddingMatrix& matrix,
                                     std::span<const std::size_t> assignment,
                                     std::span<const double> centroids) {
  const std::size_t d = matrix.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    total += squared_distance(matrix.row(i), centroids.data() + assignment[i] * d);
  }
  return total;
}

Clustering kmeans_fit(const EmbeddingMatrix& matrix, std::size_t clusters,
                      const KMeansOptions& options) {
  if (clusters < 1 || clusters > matrix.rows()) {
    throw InvalidArgument("clusters = " + std::to_string(clusters) +
                          " must be in [1, " + std::to_string(matrix.rows()) +
                          "]");
  }
  if (options.max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
  if (!(options.tol >= 0.0)) throw InvalidArgument("tol must be >= 0");
  if (options.restarts < 1) throw InvalidArgument("restarts must be >= 1");

  Run best;
  std::size_t best_restart = 0;
  for (std::size_t r = 0; r < options.restarts; ++r) {
    Run run = lloyd(matrix, clusters, options, derive_seed(options.seed, r));
    if (r == 0 || run.objective < best.objective) {
      best = std::move(run);
      best_restart = r;
    }
  }

  Clustering result;
  result.clusters = clusters;
  result.dim = matrix.cols();
  result.assignment = std::move(best.assignment);
  result.centroids = std::move(best.centroids);
  result.objective = best.objective;
  result.iterations_run = best.iterations;
  result.objective_trace = std::move(best.trace);
  result.seed = options.seed;
  result.restart = best_restart;
  return result;
}

}  // namespace usl
