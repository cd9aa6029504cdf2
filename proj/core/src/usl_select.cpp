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

#include "usl/usl_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "usl/errors.hpp"
#include "usl/parallel.hpp"

namespace usl {
namespace {

constexpr std::size_t kCandidateChunk = 256;

double inverse_power(double distance, double alpha) {
  if (alpha == 1.0) return 1.0 / distance;
  if (alpha == 0.5) return 1.0 / std::sqrt(distance);
  return 1.0 / std::pow(distance, alpha);
}

}  // namespace

std::string_view to_string(ScaleProfile profile) {
  return profile == ScaleProfile::kSmall ? "small" : "large";
}

ScaleProfile parse_profile(std::string_view name) {
  if (name == "small") return ScaleProfile::kSmall;
  if (name == "large") return ScaleProfile::kLarge;
  throw InvalidArgument("unknown profile '" + std::string(name) +
                        "' (expected small or large)");
}

UslParams UslParams::small_scale(std::size_t budget) {
  UslParams p;
  p.k = 400;
  p.momentum = 0.9;
  p.iterations = 10;
  if (budget <= 100) {
    p.reg_alpha = 0.5;
    p.reg_lambda = 0.5;
  } else {
    p.reg_alpha = 1.0;
    p.reg_lambda = 1.0;
  }
  return p;
}

UslParams UslParams::large_scale() {
  UslParams p;
  p.k = 20;
  p.horizon = 64;
  p.reg_alpha = 0.5;
  p.reg_lambda = 1.5;
  p.momentum = 0.0;
  p.iterations = 1;
  return p;
}

UslParams UslParams::for_profile(ScaleProfile profile, std::size_t budget) {
  return profile == ScaleProfile::kSmall ? small_scale(budget) : large_scale();
}

void UslParams::validate() const {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (!(reg_lambda >= 0.0) || !std::isfinite(reg_lambda)) {
    throw InvalidArgument("lambda must be a finite value >= 0");
  }
  if (!(reg_alpha > 0.0) || !std::isfinite(reg_alpha)) {
    throw InvalidArgument("alpha must be a finite value > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidArgument("momentum must be in [0, 1)");
  }
  if (horizon && *horizon < 1) throw InvalidArgument("horizon must be >= 1");
}

RegularizedUtilities regularize_utilities(
    const EmbeddingMatrix& matrix, std::span<const double> utility,
    std::span<const std::size_t> assignment,
    std::span<const std::size_t> selected, RegularizationState& state,
    const UslParams& params) {
  const std::size_t n = matrix.rows();
  const std::size_t m = selected.size();
  if (utility.size() != n || assignment.size() != n ||
      state.smoothed.size() != n) {
    throw InvalidArgument("regularization inputs disagree on instance count");
  }
  const std::size_t horizon =
      params.horizon ? std::min(*params.horizon, m) : m;
  const bool restricted = horizon < m;

  RegularizedUtilities out;
  out.scores.resize(n);
  std::vector<char> excluded(n, 0);

  parallel_for(
      n,
      [&](std::size_t begin, std::size_t end) {
        // (distance, selected instance index, owning cluster)
        std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>>
            nearby(m);
        for (std::size_t i = begin; i < end; ++i) {
          const auto candidate = matrix.row(i);
          for (std::size_t c = 0; c < m; ++c) {
            nearby[c] = {euclidean_distance(candidate, matrix.row(selected[c])),
                         {selected[c], c}};
          }
          if (restricted) {
            std::partial_sort(
                nearby.begin(),
                nearby.begin() + static_cast<std::ptrdiff_t>(horizon),
                nearby.end());
          }
          double penalty = 0.0;
          for (std::size_t h = 0; h < horizon; ++h) {
            const auto& [dist, who] = nearby[h];
            if (who.second == assignment[i]) continue;
            if (dist == 0.0) {
              penalty = std::numeric_limits<double>::infinity();
              excluded[i] = 1;
              break;
            }
            penalty += inverse_power(dist, params.reg_alpha);
          }
          double& smoothed = state.smoothed[i];
          smoothed = params.momentum == 0.0
                         ? penalty
                         : params.momentum * smoothed +
                               (1.0 - params.momentum) * penalty;
          if (std::isinf(smoothed)) excluded[i] = 1;
          out.scores[i] =
              params.reg_lambda == 0.0 ? utility[i]
              : std::isinf(smoothed)
                  ? -std::numeric_limits<double>::infinity()
                  : utility[i] - params.reg_lambda * smoothed;
        }
      },
      kCandidateChunk);

  for (std::size_t i = 0; i < n; ++i) {
    if (excluded[i] && params.reg_lambda != 0.0) out.excluded.push_back(i);
  }
  return out;
}

std::vector<std::size_t> repick_per_cluster(
    std::span<const double> scores, std::span<const std::size_t> assignment,
    std::size_t clusters) {
  if (scores.size() != assignment.size()) {
    throw InvalidArgument("scores and assignment lengths differ");
  }
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> picks(clusters, kNone);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t c = assignment[i];
    if (c >= clusters) throw InvalidArgument("cluster id out of range");
    if (picks[c] == kNone || scores[i] > scores[picks[c]]) picks[c] = i;
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    if (picks[c] == kNone) {
      throw DataError("cluster " + std::to_string(c) + " has no members");
    }
  }
  return picks;
}

SelectionResult select_with_regularization(const EmbeddingMatrix& matrix,
                                           const UtilityScores& utility,
                                           const Clustering& clustering,
                                           const UslParams& params) {
  params.validate();
  const std::size_t m = clustering.clusters;
  const auto& base = utility.utility;

  SelectionResult result;
  std::vector<std::size_t> selected =
      repick_per_cluster(base, clustering.assignment, m);
  auto snapshot = [&](std::span<const double> scores) {
    IterationSnapshot snap;
    snap.selected = selected;
    snap.scores.reserve(m);
    for (std::size_t idx : selected) snap.scores.push_back(scores[idx]);
    result.history.push_back(std::move(snap));
  };
  snapshot(base);

  RegularizationState state(matrix.rows());
  for (std::size_t t = 1; t <= params.iterations; ++t) {
    RegularizedUtilities reg = regularize_utilities(
        matrix, base, clustering.assignment, selected, state, params);
    if (!reg.excluded.empty()) {
      result.warnings.push_back(
          "iteration " + std::to_string(t) + ": " +
          std::to_string(reg.excluded.size()) +
          " candidate(s) coincide with another cluster's pick and were "
          "excluded");
    }
    selected = repick_per_cluster(reg.scores, clustering.assignment, m);
    snapshot(reg.scores);
  }

  result.indices = selected;
  result.cluster_of.resize(m);
  for (std::size_t c = 0; c < m; ++c) result.cluster_of[c] = c;
  return result;
}

UslRun select_usl(const EmbeddingMatrix& matrix, std::size_t budget,
                  const UslParams& params) {
  params.validate();
  const std::size_t n = matrix.rows();
  if (budget < 1 || budget > n) {
    throw InvalidArgument("budget = " + std::to_string(budget) +
                          " must be in [1, " + std::to_string(n) + "]");
  }
  if (!matrix.normalized()) {
    throw InvalidArgument("selection requires L2-normalized embeddings");
  }
  if (n < 2) throw InvalidArgument("selection needs at least two instances");
  if (params.k > n - 1) {
    throw InvalidArgument("k = " + std::to_string(params.k) +
                          " exceeds n - 1 = " + std::to_string(n - 1));
  }

  UslRun run;
  run.params = params;
  const NeighborGraph graph = build_knn_graph(matrix, params.k);
  run.utility = utility_scores(graph);

  KMeansOptions kmeans = params.kmeans;
  kmeans.seed = params.seed;
  run.clustering = kmeans_fit(matrix, budget, kmeans);
  run.selection =
      select_with_regularization(matrix, run.utility, run.clustering, params);
  return run;
}

}  // namespace usl
