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

#include "usl/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "usl/embedding_io.hpp"
#include "usl/rng.hpp"
#include "usl/uslt_kernels.hpp"

namespace usl::verification {
namespace {

using uslt::Batch;
using uslt::Similarity;
using uslt::UsltParams;
using uslt::UsltState;

constexpr double kFiniteDifferenceStep = 1e-5;

EmbeddingMatrix random_unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<double> data(n * d);
  for (double& v : data) v = rng.normal();
  return l2_normalize(EmbeddingMatrix(n, d, std::move(data)));
}

std::vector<double> random_simplex(std::size_t size, Rng& rng) {
  std::vector<double> p(size);
  double sum = 0.0;
  for (double& v : p) {
    v = 0.05 + rng.uniform();
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

UsltState random_state(std::size_t clusters, std::size_t d, double scale,
                       Rng& rng) {
  std::vector<double> centroids(clusters * d);
  for (double& v : centroids) v = scale * rng.normal();
  return UsltState::from_centroids(clusters, d, std::move(centroids));
}

double norm(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

void finish(CheckResult& result) {
  result.passed = result.lower_bound ? result.worst > result.threshold
                                     : result.worst < result.threshold;
}

}  // namespace

CheckResult loss_decomposition_identity(std::size_t cases, std::uint64_t seed) {
  CheckResult result{"loss decomposition identity |loss - (main + reg)|", cases, 0.0,
                     1e-9};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t clusters = 2 + rng.below(7);
    const std::size_t d = 1 + rng.below(16);
    const EmbeddingMatrix x = random_unit_rows(1, d, rng);
    const UsltState state = random_state(clusters, d, 0.7, rng);
    const auto pair =
        uslt::assign(x.row(0), state, Similarity::kNegSquaredEuclidean);
    const auto loss = uslt::global_loss(std::span(&pair, 1), 0.0);
    const auto parts = uslt::kmeans_equivalence_decomposition(
        x.row(0), state, Similarity::kNegSquaredEuclidean);
    result.worst = std::max(
        result.worst, std::abs(loss.value - (parts.main_term + parts.reg_term)));
  }
  finish(result);
  return result;
}

std::vector<CheckResult> gradient_checks(std::size_t cases, std::uint64_t seed) {
  CheckResult global{"global-loss gradient relative error", cases, 0.0, 1e-4};
  CheckResult local{"local-loss gradient relative error", cases, 0.0, 1e-4};
  CheckResult total{"total-loss gradient relative error", cases, 0.0, 1e-4};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t clusters = 2 + rng.below(7);
    const std::size_t d = 2 + rng.below(15);
    const std::size_t batch_size = 1 + rng.below(8);
    const EmbeddingMatrix features = random_unit_rows(2 * batch_size, d, rng);
    UsltParams params;
    params.metric = rng.below(2) == 0 ? Similarity::kDot
                                      : Similarity::kNegSquaredEuclidean;
    params.adjust_alpha = rng.uniform(0.0, 5.0);
    params.temperature = rng.uniform(0.25, 1.0);
    params.loss_weight = rng.uniform(0.1, 5.0);
    UsltState state = random_state(clusters, d, 1.0, rng);
    state.running_mean = random_simplex(clusters, rng);
    Batch batch;
    for (std::size_t i = 0; i < batch_size; ++i) {
      batch.anchors.push_back(i);
      batch.neighbors.push_back(batch_size + i);
    }
    const auto frozen = uslt::freeze_targets(features, batch, state, params);

    struct Term {
      CheckResult* result;
      double global_weight;
      double local_weight;
    };
    for (const Term term : {Term{&global, 1.0, 0.0}, Term{&local, 0.0, 1.0},
                            Term{&total, 1.0, params.loss_weight}}) {
      UsltParams p = params;
      auto evaluate = [&](const UsltState& s) {
        const auto l = uslt::total_loss(features, batch, s, p, frozen);
        return term.global_weight * l.global + term.local_weight * l.local;
      };
      p.loss_weight = 1.0;
      const auto base = uslt::total_loss(features, batch, state, p, frozen);
      // Recombine the term-specific analytic gradient from the pieces.
      std::vector<double> analytic;
      {
        UsltParams only_global = p;
        only_global.loss_weight = 0.0;
        const auto g = uslt::total_loss(features, batch, state, only_global,
                                        frozen).gradient;
        analytic.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double local_part = base.gradient[i] - g[i];
          analytic[i] = term.global_weight * g[i] + term.local_weight * local_part;
        }
      }
      std::vector<double> numeric(analytic.size());
      UsltState probe = state;
      for (std::size_t i = 0; i < probe.centroids.size(); ++i) {
        const double saved = probe.centroids[i];
        probe.centroids[i] = saved + kFiniteDifferenceStep;
        const double up = evaluate(probe);
        probe.centroids[i] = saved - kFiniteDifferenceStep;
        const double down = evaluate(probe);
        probe.centroids[i] = saved;
        numeric[i] = (up - down) / (2.0 * kFiniteDifferenceStep);
      }
      std::vector<double> diff(analytic.size());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
      const double scale = std::max({norm(analytic), norm(numeric), 1e-8});
      term.result->worst = std::max(term.result->worst, norm(diff) / scale);
    }
  }
  finish(global);
  finish(local);
  finish(total);
  return {global, local, total};
}

std::vector<CheckResult> anti_collapse_checks(std::size_t seeds,
                                              std::uint64_t seed) {
  CheckResult uniform{"one-cluster collapse: |target - uniform|_inf", seeds, 0.0,
                      1e-3};
  CheckResult gradient{"one-cluster collapse: local gradient norm", seeds,
                       std::numeric_limits<double>::infinity(), 1e-3, true};
  CheckResult sharper{"even collapse: max target - max soft", seeds,
                      std::numeric_limits<double>::infinity(), 0.0, true};
  CheckResult peak{"even collapse: target argmax mismatches", seeds, 0.0, 0.5};

  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(derive_seed(seed, s));
    const std::size_t clusters = 3 + rng.below(6);
    const std::size_t d = 4 + rng.below(13);

    // One-cluster collapse: nearly identical features, one dominant centroid.
    {
      const EmbeddingMatrix base = random_unit_rows(1, d, rng);
      const std::size_t batch_size = 16;
      std::vector<double> rows(batch_size * d);
      for (std::size_t i = 0; i < batch_size; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          rows[i * d + j] = base(0, j) + 1e-6 * rng.normal();
        }
      }
      const EmbeddingMatrix features =
          l2_normalize(EmbeddingMatrix(batch_size, d, std::move(rows)));
      UsltState state = random_state(clusters, d, 0.1, rng);
      for (std::size_t j = 0; j < d; ++j) state.centroids[j] = 20.0 * base(0, j);

      UsltParams params;
      params.metric = Similarity::kDot;
      params.adjust_alpha = 1.0;
      params.temperature = 0.25;
      params.momentum = 0.5;
      Batch batch;
      for (std::size_t i = 0; i < batch_size; ++i) {
        batch.anchors.push_back(i);
        batch.neighbors.push_back((i + 1) % batch_size);
      }
      std::vector<double> batch_mean(clusters, 0.0);
      for (std::size_t i : batch.neighbors) {
        const auto soft =
            uslt::softmax(uslt::similarities(features.row(i), state, params.metric));
        for (std::size_t c = 0; c < clusters; ++c) {
          batch_mean[c] += soft[c] / static_cast<double>(batch_size);
        }
      }
      // Let the running mean converge onto the collapsed batch mean.
      for (int it = 0; it < 200; ++it) {
        uslt::ema_update(state, batch_mean, params.momentum);
      }
      const auto frozen = uslt::freeze_targets(features, batch, state, params);
      double worst_dev = 0.0;
      for (double p : frozen.local) {
        worst_dev = std::max(worst_dev,
                             std::abs(p - 1.0 / static_cast<double>(clusters)));
      }
      uniform.worst = std::max(uniform.worst, worst_dev);

      Batch single{{0}, {1}};
      UsltParams local_only = params;
      local_only.loss_weight = 1.0;
      UsltParams global_only = local_only;
      global_only.loss_weight = 0.0;
      const auto single_frozen =
          uslt::freeze_targets(features, single, state, params);
      const auto with_local =
          uslt::total_loss(features, single, state, local_only, single_frozen);
      const auto without_local =
          uslt::total_loss(features, single, state, global_only, single_frozen);
      std::vector<double> local_grad(with_local.gradient.size());
      for (std::size_t i = 0; i < local_grad.size(); ++i) {
        local_grad[i] = with_local.gradient[i] - without_local.gradient[i];
      }
      gradient.worst = std::min(gradient.worst, norm(local_grad));
    }

    // Even-distribution collapse: epsilon-perturbed uniform logits.
    {
      const EmbeddingMatrix x = random_unit_rows(1, d, rng);
      UsltState state = random_state(clusters, d, 1e-3, rng);
      UsltParams params;
      params.metric = Similarity::kDot;
      params.temperature = 0.25;
      const auto logits = uslt::similarities(x.row(0), state, params.metric);
      const auto target = uslt::local_target(logits, state.running_mean, params);
      const auto soft = uslt::softmax(logits);
      const auto max_target = *std::max_element(target.begin(), target.end());
      const auto max_soft = *std::max_element(soft.begin(), soft.end());
      sharper.worst = std::min(sharper.worst, max_target - max_soft);
      const auto arg_target =
          std::max_element(target.begin(), target.end()) - target.begin();
      const auto arg_logit =
          std::max_element(logits.begin(), logits.end()) - logits.begin();
      peak.worst += arg_target == arg_logit ? 0.0 : 1.0;
    }
  }
  finish(uniform);
  finish(gradient);
  finish(sharper);
  finish(peak);
  return {uniform, gradient, sharper, peak};
}

CheckResult kmeans_fixed_point(std::size_t cases, std::uint64_t seed) {
  CheckResult result{"k-means main term gradient at member means", cases, 0.0,
                     1e-6};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t clusters = 2 + rng.below(4);
    const std::size_t d = 2 + rng.below(7);
    const std::size_t per = 5 + rng.below(10);
    std::vector<double> points;
    std::vector<std::size_t> owner;
    std::vector<double> means(clusters * d, 0.0);
    for (std::size_t k = 0; k < clusters; ++k) {
      std::vector<double> center(d);
      for (double& v : center) v = 20.0 * rng.normal();
      for (std::size_t p = 0; p < per; ++p) {
        for (std::size_t j = 0; j < d; ++j) {
          const double v = center[j] + rng.normal();
          points.push_back(v);
          means[k * d + j] += v / static_cast<double>(per);
        }
        owner.push_back(k);
      }
    }
    auto main_term = [&](const std::vector<double>& centroids) {
      double total = 0.0;
      for (std::size_t i = 0; i < owner.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = points[i * d + j] - centroids[owner[i] * d + j];
          total += diff * diff;
        }
      }
      return total;
    };
    std::vector<double> probe = means;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double saved = probe[i];
      probe[i] = saved + kFiniteDifferenceStep;
      const double up = main_term(probe);
      probe[i] = saved - kFiniteDifferenceStep;
      const double down = main_term(probe);
      probe[i] = saved;
      const double fd = (up - down) / (2.0 * kFiniteDifferenceStep);
      // Normalize by the cluster size so the check is scale-free in `per`.
      result.worst =
          std::max(result.worst, std::abs(fd) / static_cast<double>(per));
    }
  }
  finish(result);
  return result;
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  std::vector<CheckResult> all;
  all.push_back(loss_decomposition_identity(1000, seed));
  for (auto& r : gradient_checks(200, derive_seed(seed, 1))) all.push_back(r);
  for (auto& r : anti_collapse_checks(50, derive_seed(seed, 2))) all.push_back(r);
  all.push_back(kmeans_fixed_point(50, derive_seed(seed, 3)));
  return all;
}

}  // namespace usl::verification
