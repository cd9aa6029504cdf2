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

#include "usl/neighbor_density.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "usl/errors.hpp"
#include "usl/parallel.hpp"

namespace usl {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

constexpr std::size_t kQueryBlock = 256;
constexpr std::size_t kReferenceBlock = 1024;
// A row buffer is compacted once it holds this many multiples of k.
constexpr std::size_t kCompactFactor = 4;

struct Candidate {
  double distance;
  std::size_t index;
  bool operator<(const Candidate& other) const {
    return distance < other.distance ||
           (distance == other.distance && index < other.index);
  }
};

struct Screened {
  double value;
  std::size_t index;
};

// Drops entries more than `margin` above the kth smallest value and returns
// that kth value.
double compact(std::vector<Screened>& buffer, std::size_t k, double margin) {
  auto kth = buffer.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(buffer.begin(), kth, buffer.end(),
                   [](const Screened& a, const Screened& b) {
                     return a.value < b.value;
                   });
  const double bound = kth->value;
  const double keep = bound + margin;
  buffer.erase(std::remove_if(buffer.begin(), buffer.end(),
                              [keep](const Screened& e) { return e.value > keep; }),
               buffer.end());
  return bound;
}

// Exact distances from row i to each pooled row. Four independent chains are
// interleaved for throughput; each one sums in coordinate order, exactly as
// euclidean_distance does.
void exact_distances(const EmbeddingMatrix& matrix, std::size_t i,
                     std::span<const std::size_t> pool,
                     std::vector<Candidate>& out) {
  const std::size_t d = matrix.cols();
  const double* q = matrix.row(i).data();
  out.resize(pool.size());
  std::size_t p = 0;
  for (; p + 4 <= pool.size(); p += 4) {
    const double* b0 = matrix.row(pool[p]).data();
    const double* b1 = matrix.row(pool[p + 1]).data();
    const double* b2 = matrix.row(pool[p + 2]).data();
    const double* b3 = matrix.row(pool[p + 3]).data();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e0 = q[j] - b0[j];
      const double e1 = q[j] - b1[j];
      const double e2 = q[j] - b2[j];
      const double e3 = q[j] - b3[j];
      s0 += e0 * e0;
      s1 += e1 * e1;
      s2 += e2 * e2;
      s3 += e3 * e3;
    }
    out[p] = {std::sqrt(s0), pool[p]};
    out[p + 1] = {std::sqrt(s1), pool[p + 1]};
    out[p + 2] = {std::sqrt(s2), pool[p + 2]};
    out[p + 3] = {std::sqrt(s3), pool[p + 3]};
  }
  for (; p < pool.size(); ++p) {
    out[p] = {euclidean_distance(matrix.row(i), matrix.row(pool[p])), pool[p]};
  }
}

}  // namespace

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

NeighborGraph build_knn_graph(const EmbeddingMatrix& matrix, std::size_t k) {
  const std::size_t n = matrix.rows();
  const std::size_t d = matrix.cols();
  if (k < 1 || k + 1 > n) {
    throw InvalidArgument("k = " + std::to_string(k) +
                          " is out of range [1, " + std::to_string(n - 1) +
                          "]");
  }

  NeighborGraph graph;
  graph.n = n;
  graph.k = k;
  graph.neighbors.resize(n * k);
  graph.distances.resize(n * k);

  const ConstRowMap data(matrix.data().data(), static_cast<Eigen::Index>(n),
                         static_cast<Eigen::Index>(d));
  const Eigen::VectorXd sq_norms = data.rowwise().squaredNorm();
  const double max_sq_norm = sq_norms.maxCoeff();

  // Squared distances are screened through the Gram expansion
  // |b|^2 - 2 a.b (the constant |a|^2 is dropped), evaluated as one GEMM of
  // [a, 1] against [-2b, |b|^2]. Its absolute error is bounded by
  // slack(a) = c * (d + 4) * eps * (|a|^2 + max |b|^2). Every instance whose
  // exact distance could rank within the k nearest has a screened value at
  // most kth_screened + 2 * slack, so recomputing exact distances over that
  // candidate set gives the exact answer.
  const double eps = std::numeric_limits<double>::epsilon();
  const double slack_factor = 4.0 * static_cast<double>(d + 4) * eps;
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(d);
  RowMatrix lhs(rows, cols + 1);
  lhs.leftCols(cols) = data;
  lhs.col(cols).setOnes();
  RowMatrix rhs(rows, cols + 1);
  rhs.leftCols(cols) = -2.0 * data;
  rhs.col(cols) = sq_norms;

  const std::size_t blocks = (n + kQueryBlock - 1) / kQueryBlock;
  parallel_for(blocks, [&](std::size_t block_begin, std::size_t block_end) {
    RowMatrix tile;
    std::vector<std::vector<Screened>> buffers(kQueryBlock);
    std::vector<double> bounds(kQueryBlock);
    std::vector<double> margins(kQueryBlock);
    std::vector<std::size_t> pool;
    std::vector<Candidate> candidates;
    for (std::size_t block = block_begin; block < block_end; ++block) {
      const std::size_t q0 = block * kQueryBlock;
      const std::size_t qn = std::min(kQueryBlock, n - q0);
      const auto queries = lhs.middleRows(static_cast<Eigen::Index>(q0),
                                          static_cast<Eigen::Index>(qn));
      for (std::size_t local = 0; local < qn; ++local) {
        buffers[local].clear();
        bounds[local] = std::numeric_limits<double>::infinity();
        margins[local] =
            2.0 * slack_factor *
            (sq_norms[static_cast<Eigen::Index>(q0 + local)] + max_sq_norm);
      }

      // Each row keeps every screened value within 2 * slack of its running
      // kth-smallest bound. The bound only decreases, so the final candidate
      // set is a superset of the values within 2 * slack of the true kth.
      for (std::size_t r0 = 0; r0 < n; r0 += kReferenceBlock) {
        const std::size_t rn = std::min(kReferenceBlock, n - r0);
        tile.noalias() = queries * rhs.middleRows(static_cast<Eigen::Index>(r0),
                                                  static_cast<Eigen::Index>(rn))
                                       .transpose();
        for (std::size_t local = 0; local < qn; ++local) {
          const std::size_t i = q0 + local;
          const double* row = tile.data() + local * rn;
          auto& buffer = buffers[local];
          const double keep = bounds[local] + margins[local];
          for (std::size_t j = 0; j < rn; ++j) {
            if (row[j] <= keep && r0 + j != i) buffer.push_back({row[j], r0 + j});
          }
          if (buffer.size() >= kCompactFactor * k) {
            bounds[local] = compact(buffer, k, margins[local]);
          }
        }
      }

      for (std::size_t local = 0; local < qn; ++local) {
        const std::size_t i = q0 + local;
        auto& buffer = buffers[local];
        compact(buffer, k, margins[local]);
        pool.clear();
        for (const auto& entry : buffer) pool.push_back(entry.index);
        std::sort(pool.begin(), pool.end());
        exact_distances(matrix, i, pool, candidates);
        std::partial_sort(candidates.begin(),
                          candidates.begin() + static_cast<std::ptrdiff_t>(k),
                          candidates.end());
        for (std::size_t j = 0; j < k; ++j) {
          graph.neighbors[i * k + j] = candidates[j].index;
          graph.distances[i * k + j] = candidates[j].distance;
        }
      }
    }
  });
  return graph;
}

std::vector<double> mean_knn_distance(const NeighborGraph& graph) {
  std::vector<double> mean(graph.n);
  const double inv_k = 1.0 / static_cast<double>(graph.k);
  for (std::size_t i = 0; i < graph.n; ++i) {
    double sum = 0.0;
    for (double dist : graph.distances_of(i)) sum += dist;
    mean[i] = sum * inv_k;
  }
  return mean;
}

double log_unit_ball_volume(std::size_t dim) {
  const double half = 0.5 * static_cast<double>(dim);
  return half * std::log(std::numbers::pi) - std::lgamma(half + 1.0);
}

std::vector<double> knn_log_density(const NeighborGraph& graph, std::size_t dim,
                                    DensityMode mode) {
  if (dim < 1) throw InvalidArgument("dimension must be >= 1");
  std::vector<double> radius;
  if (mode == DensityMode::kMean) {
    radius = mean_knn_distance(graph);
  } else {
    radius.resize(graph.n);
    for (std::size_t i = 0; i < graph.n; ++i) {
      radius[i] = graph.distances[i * graph.k + graph.k - 1];
    }
  }
  const double offset =
      std::log(static_cast<double>(graph.k) / static_cast<double>(graph.n)) -
      log_unit_ball_volume(dim);
  const double d = static_cast<double>(dim);
  std::vector<double> log_density(graph.n);
  for (std::size_t i = 0; i < graph.n; ++i) {
    if (radius[i] <= 0.0) {
      throw DataError("instance " + std::to_string(i) +
                      " has zero neighbor distance (duplicate points)");
    }
    log_density[i] = offset - d * std::log(radius[i]);
  }
  return log_density;
}

UtilityScores utility_scores(const NeighborGraph& graph) {
  UtilityScores scores;
  scores.mean_knn_distance = mean_knn_distance(graph);
  scores.utility.resize(graph.n);
  for (std::size_t i = 0; i < graph.n; ++i) {
    const double mean = scores.mean_knn_distance[i];
    if (mean <= 0.0) {
      throw DataError("instance " + std::to_string(i) +
                      " has zero mean neighbor distance (coincident "
                      "duplicates); deduplicate or enable jitter");
    }
    scores.utility[i] = 1.0 / mean;
  }
  return scores;
}

}  // namespace usl
