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

#include "usl/uslt_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "usl/errors.hpp"
#include "usl/neighbor_density.hpp"
#include "usl/parallel.hpp"
#include "usl/rng.hpp"

namespace usl::uslt {
namespace {

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sum += a[j] * b[j];
  return sum;
}

void require_probability_vector(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InvalidArgument(std::string(what) + " has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw InvalidArgument(std::string(what) + " does not sum to 1");
  }
}

}  // namespace

std::string_view to_string(Similarity metric) {
  return metric == Similarity::kDot ? "dot" : "neg_sq_euclidean";
}

Similarity parse_similarity(std::string_view name) {
  if (name == "dot") return Similarity::kDot;
  if (name == "neg_sq_euclidean") return Similarity::kNegSquaredEuclidean;
  throw InvalidArgument("unknown similarity '" + std::string(name) + "'");
}

UsltParams UsltParams::small_scale() {
  UsltParams p;
  p.adjust_alpha = 5.0;
  p.temperature = 0.25;
  p.loss_weight = 5.0;
  return p;
}

UsltParams UsltParams::large_scale() {
  UsltParams p;
  p.adjust_alpha = 2.5;
  p.temperature = 0.5;
  p.loss_weight = 0.5;
  return p;
}

UsltParams UsltParams::for_profile(ScaleProfile profile) {
  return profile == ScaleProfile::kSmall ? small_scale() : large_scale();
}

void UsltParams::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("tau must be in [0, 1]");
  if (!(adjust_alpha >= 0.0) || !std::isfinite(adjust_alpha)) {
    throw InvalidArgument("adjustment alpha must be a finite value >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("temperature must be > 0");
  }
  if (!(loss_weight >= 0.0) || !std::isfinite(loss_weight)) {
    throw InvalidArgument("loss weight must be a finite value >= 0");
  }
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw InvalidArgument("momentum must be in [0, 1]");
  }
  if (neighbor_k < 1) throw InvalidArgument("neighbor k must be >= 1");
}

UsltState UsltState::from_centroids(std::size_t clusters, std::size_t dim,
                                    std::vector<double> centroids) {
  if (clusters < 1 || dim < 1 || centroids.size() != clusters * dim) {
    throw InvalidArgument("centroid array does not match clusters x dim");
  }
  UsltState state;
  state.clusters = clusters;
  state.dim = dim;
  state.centroids = std::move(centroids);
  state.running_mean.assign(clusters, 1.0 / static_cast<double>(clusters));
  return state;
}

std::vector<double> AssignmentPair::hard_one_hot() const {
  std::vector<double> one_hot(soft.size(), 0.0);
  one_hot[hard] = 1.0;
  return one_hot;
}

std::vector<double> similarities(std::span<const double> x,
                                 const UsltState& state, Similarity metric) {
  if (x.size() != state.dim) {
    throw InvalidArgument("feature dimension " + std::to_string(x.size()) +
                          " does not match centroid dimension " +
                          std::to_string(state.dim));
  }
  std::vector<double> logits(state.clusters);
  for (std::size_t c = 0; c < state.clusters; ++c) {
    const auto centroid = state.centroid(c);
    if (metric == Similarity::kDot) {
      logits[c] = dot(x, centroid);
    } else {
      double sq = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double diff = x[j] - centroid[j];
        sq += diff * diff;
      }
      logits[c] = -sq;
    }
  }
  return logits;
}

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("empty logit vector");
  const double peak = *std::max_element(logits.begin(), logits.end());
  if (std::isinf(peak)) return peak;
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - peak);
  return peak + std::log(sum);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("empty logit vector");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

AssignmentPair assign_from_logits(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("empty logit vector");
  AssignmentPair pair;
  const double lse = log_sum_exp(logits);
  pair.log_soft.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    pair.log_soft[i] = logits[i] - lse;
  }
  pair.soft = softmax(logits);
  pair.hard = argmax(logits);
  pair.confidence = pair.soft[pair.hard];
  return pair;
}

AssignmentPair assign(std::span<const double> x, const UsltState& state,
                      Similarity metric) {
  return assign_from_logits(similarities(x, state, metric));
}

LogitLoss global_loss(std::span<const AssignmentPair> batch, double tau) {
  if (batch.empty()) throw InvalidArgument("global loss needs a non-empty batch");
  const std::size_t clusters = batch.front().soft.size();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LogitLoss out;
  out.logit_grad.assign(batch.size() * clusters, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const AssignmentPair& pair = batch[i];
    if (pair.confidence < tau) continue;
    ++out.used;
    out.value -= pair.log_soft[pair.hard];
    double* grad = out.logit_grad.data() + i * clusters;
    for (std::size_t c = 0; c < clusters; ++c) grad[c] = pair.soft[c] * inv_n;
    grad[pair.hard] -= inv_n;
  }
  out.value *= inv_n;
  out.no_confident_samples = out.used == 0;
  return out;
}

Decomposition kmeans_equivalence_decomposition(std::span<const double> x,
                                               const UsltState& state,
                                               Similarity metric) {
  if (metric != Similarity::kNegSquaredEuclidean) {
    throw InvalidArgument(
        "the k-means decomposition requires the negative squared Euclidean "
        "similarity");
  }
  const std::vector<double> logits = similarities(x, state, metric);
  const std::size_t nearest = argmax(logits);
  return {-logits[nearest], log_sum_exp(logits)};
}

std::vector<double> logit_adjust(std::span<const double> logits,
                                 std::span<const double> running_mean,
                                 double adjust_alpha) {
  if (logits.size() != running_mean.size()) {
    throw InvalidArgument("logits and running mean lengths differ");
  }
  std::vector<double> adjusted(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!(running_mean[i] > 0.0)) {
      throw InvalidArgument("running mean entry " + std::to_string(i) +
                            " is not strictly positive");
    }
    adjusted[i] = logits[i] - adjust_alpha * std::log(running_mean[i]);
  }
  return adjusted;
}

void ema_update(UsltState& state, std::span<const double> batch_mean,
                double momentum) {
  if (batch_mean.size() != state.clusters) {
    throw InvalidArgument("batch mean length does not match cluster count");
  }
  require_probability_vector(batch_mean, "batch mean");
  if (momentum == 0.0) return;
  double sum = 0.0;
  for (std::size_t c = 0; c < state.clusters; ++c) {
    double& mean = state.running_mean[c];
    mean = momentum == 1.0 ? batch_mean[c]
                           : momentum * batch_mean[c] + (1.0 - momentum) * mean;
    sum += mean;
  }
  // Keep the simplex constraint exact in the face of rounding drift.
  if (momentum != 1.0) {
    for (double& mean : state.running_mean) mean /= sum;
  }
}

std::vector<double> sharpen(std::span<const double> adjusted,
                            double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  std::vector<double> scaled(adjusted.size());
  for (std::size_t i = 0; i < adjusted.size(); ++i) {
    scaled[i] = adjusted[i] / temperature;
  }
  return softmax(scaled);
}

std::vector<double> local_target(std::span<const double> neighbor_logits,
                                 std::span<const double> running_mean,
                                 const UsltParams& params) {
  return sharpen(logit_adjust(neighbor_logits, running_mean, params.adjust_alpha),
                 params.temperature);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) sum += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return sum;
}

LogitLoss local_loss(std::span<const AssignmentPair> anchors,
                     std::span<const double> targets) {
  if (anchors.empty()) throw InvalidArgument("local loss needs a non-empty batch");
  const std::size_t clusters = anchors.front().soft.size();
  if (targets.size() != anchors.size() * clusters) {
    throw InvalidArgument("target matrix does not match batch x clusters");
  }
  const double inv_n = 1.0 / static_cast<double>(anchors.size());
  LogitLoss out;
  out.used = anchors.size();
  out.logit_grad.resize(anchors.size() * clusters);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const AssignmentPair& pair = anchors[i];
    const double* target = targets.data() + i * clusters;
    double sample = 0.0;
    double* grad = out.logit_grad.data() + i * clusters;
    for (std::size_t c = 0; c < clusters; ++c) {
      if (target[c] > 0.0) {
        sample += target[c] * (std::log(target[c]) - pair.log_soft[c]);
      }
      grad[c] = (pair.soft[c] - target[c]) * inv_n;
    }
    out.value += sample;
  }
  out.value *= inv_n;
  return out;
}

FrozenTargets freeze_targets(const EmbeddingMatrix& features, const Batch& batch,
                             const UsltState& state, const UsltParams& params) {
  if (batch.anchors.size() != batch.neighbors.size()) {
    throw InvalidArgument("anchors and neighbors lengths differ");
  }
  FrozenTargets frozen;
  frozen.hard.resize(batch.anchors.size());
  frozen.local.resize(batch.anchors.size() * state.clusters);
  for (std::size_t i = 0; i < batch.anchors.size(); ++i) {
    const auto anchor_logits =
        similarities(features.row(batch.anchors[i]), state, params.metric);
    frozen.hard[i] = argmax(anchor_logits);
    const auto neighbor_logits =
        similarities(features.row(batch.neighbors[i]), state, params.metric);
    const auto target = local_target(neighbor_logits, state.running_mean, params);
    std::copy(target.begin(), target.end(),
              frozen.local.begin() +
                  static_cast<std::ptrdiff_t>(i * state.clusters));
  }
  return frozen;
}

std::vector<double> centroid_gradient(const EmbeddingMatrix& features,
                                      std::span<const std::size_t> anchors,
                                      std::span<const double> logit_grad,
                                      const UsltState& state,
                                      Similarity metric) {
  const std::size_t clusters = state.clusters;
  const std::size_t d = state.dim;
  if (logit_grad.size() != anchors.size() * clusters) {
    throw InvalidArgument("logit gradient does not match batch x clusters");
  }
  std::vector<double> grad(clusters * d, 0.0);
  // Fixed reduction order: anchors ascending within each centroid.
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto x = features.row(anchors[i]);
    for (std::size_t c = 0; c < clusters; ++c) {
      const double g = logit_grad[i * clusters + c];
      if (g == 0.0) continue;
      double* out = grad.data() + c * d;
      if (metric == Similarity::kDot) {
        for (std::size_t j = 0; j < d; ++j) out[j] += g * x[j];
      } else {
        const auto centroid = state.centroid(c);
        for (std::size_t j = 0; j < d; ++j) {
          out[j] += g * 2.0 * (x[j] - centroid[j]);
        }
      }
    }
  }
  return grad;
}

TotalLoss total_loss(const EmbeddingMatrix& features, const Batch& batch,
                     const UsltState& state, const UsltParams& params,
                     const FrozenTargets& frozen) {
  params.validate();
  if (batch.anchors.empty()) throw InvalidArgument("empty batch");
  if (frozen.hard.size() != batch.anchors.size()) {
    throw InvalidArgument("frozen targets do not match the batch");
  }
  std::vector<AssignmentPair> pairs;
  pairs.reserve(batch.anchors.size());
  for (std::size_t i = 0; i < batch.anchors.size(); ++i) {
    AssignmentPair pair =
        assign(features.row(batch.anchors[i]), state, params.metric);
    pair.hard = frozen.hard[i];
    pairs.push_back(std::move(pair));
  }

  const LogitLoss global = global_loss(pairs, params.tau);
  TotalLoss out;
  out.global = global.value;
  out.no_confident_samples = global.no_confident_samples;
  std::vector<double> logit_grad = global.logit_grad;
  if (params.loss_weight > 0.0) {
    const LogitLoss local = local_loss(pairs, frozen.local);
    out.local = local.value;
    for (std::size_t i = 0; i < logit_grad.size(); ++i) {
      logit_grad[i] += params.loss_weight * local.logit_grad[i];
    }
  }
  out.value = out.global + params.loss_weight * out.local;
  out.gradient = centroid_gradient(features, batch.anchors, logit_grad, state,
                                   params.metric);
  return out;
}

TotalLoss total_loss(const EmbeddingMatrix& features, const Batch& batch,
                     const UsltState& state, const UsltParams& params) {
  return total_loss(features, batch, state, params,
                    freeze_targets(features, batch, state, params));
}

void OptimizerOptions::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidArgument("optimizer momentum must be in [0, 1)");
  }
  if (!(tail_fraction >= 0.0 && tail_fraction < 1.0)) {
    throw InvalidArgument("tail fraction must be in [0, 1)");
  }
  if (!(reseed_noise >= 0.0)) throw InvalidArgument("reseed noise must be >= 0");
  if (!(reseed_until >= 0.0 && reseed_until <= 1.0)) {
    throw InvalidArgument("reseed_until must be in [0, 1]");
  }
}

namespace {

std::vector<std::size_t> hard_assignments(const EmbeddingMatrix& features,
                                          const UsltState& state,
                                          Similarity metric) {
  std::vector<std::size_t> hard(features.rows());
  parallel_for(
      features.rows(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          hard[i] = argmax(similarities(features.row(i), state, metric));
        }
      },
      512);
  return hard;
}

}  // namespace

FitResult fit_centroids(const EmbeddingMatrix& features, std::size_t clusters,
                        const UsltParams& params,
                        const OptimizerOptions& optimizer) {
  params.validate();
  optimizer.validate();
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (!features.normalized()) {
    throw InvalidArgument("USL-T requires L2-normalized features");
  }
  if (clusters < 1 || clusters > n) {
    throw InvalidArgument("clusters = " + std::to_string(clusters) +
                          " must be in [1, " + std::to_string(n) + "]");
  }
  if (n < 2 || params.neighbor_k > n - 1) {
    throw InvalidArgument("neighbor k = " + std::to_string(params.neighbor_k) +
                          " exceeds n - 1");
  }

  Rng rng(derive_seed(optimizer.seed, 0));

  // Centroids start at distinct random feature rows.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> centroids(clusters * d);
  for (std::size_t c = 0; c < clusters; ++c) {
    std::swap(order[c], order[c + rng.below(n - c)]);
    const auto row = features.row(order[c]);
    std::copy(row.begin(), row.end(),
              centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
  }
  FitResult result;
  result.state = UsltState::from_centroids(clusters, d, std::move(centroids));
  UsltState& state = result.state;
  TrainingTrace& trace = result.trace;
  if (optimizer.steps == 0) return result;

  const NeighborGraph graph = build_knn_graph(features, params.neighbor_k);
  const std::size_t batch_size = std::min(optimizer.batch_size, n);
  const std::size_t interval =
      optimizer.reseed_interval > 0
          ? optimizer.reseed_interval
          : std::max<std::size_t>(1, (n + batch_size - 1) / batch_size);
  const auto reseed_stop = static_cast<std::size_t>(
      optimizer.reseed_until * static_cast<double>(optimizer.steps));
  const double tail_count =
      optimizer.tail_fraction * static_cast<double>(n) /
      static_cast<double>(clusters);

  std::vector<double> velocity(clusters * d, 0.0);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Batch batch;
  batch.anchors.resize(batch_size);
  batch.neighbors.resize(batch_size);

  for (std::size_t step = 0; step < optimizer.steps; ++step) {
    if (batch_size == n) {
      std::iota(batch.anchors.begin(), batch.anchors.end(), std::size_t{0});
    } else {
      for (std::size_t i = 0; i < batch_size; ++i) {
        std::swap(order[i], order[i + rng.below(n - i)]);
        batch.anchors[i] = order[i];
      }
    }
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto nbrs = graph.neighbors_of(batch.anchors[i]);
      batch.neighbors[i] = nbrs[rng.below(nbrs.size())];
    }

    // Running mean tracks the batch mean of the neighbors' soft assignments.
    std::vector<double> batch_mean(clusters, 0.0);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto soft = softmax(
          similarities(features.row(batch.neighbors[i]), state, params.metric));
      for (std::size_t c = 0; c < clusters; ++c) batch_mean[c] += soft[c];
    }
    for (double& v : batch_mean) v /= static_cast<double>(batch_size);
    ema_update(state, batch_mean, params.momentum);

    const TotalLoss loss = total_loss(features, batch, state, params);
    if (!std::isfinite(loss.value)) {
      throw NumericalError("USL-T loss became non-finite at step " +
                           std::to_string(step) + " (global " +
                           std::to_string(loss.global) + ", local " +
                           std::to_string(loss.local) + ")");
    }
    trace.loss.push_back(loss.value);
    trace.global.push_back(loss.global);
    trace.local.push_back(loss.local);

    for (std::size_t i = 0; i < velocity.size(); ++i) {
      velocity[i] = optimizer.momentum * velocity[i] + loss.gradient[i];
      state.centroids[i] -= optimizer.learning_rate * velocity[i];
    }
    ++state.step;

    const bool check = (step + 1) % interval == 0 || step + 1 == optimizer.steps;
    if (!check) continue;
    const auto hard = hard_assignments(features, state, params.metric);
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t c : hard) ++counts[c];
    trace.occupancy.push_back(counts);
    trace.occupancy_step.push_back(step + 1);
    if (step + 1 > reseed_stop) continue;

    const std::size_t head = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    const auto head_centroid = state.centroid(head);
    double head_norm = 0.0;
    for (double v : head_centroid) head_norm += v * v;
    head_norm = std::sqrt(head_norm);
    const std::vector<double> head_copy(head_centroid.begin(),
                                        head_centroid.end());
    for (std::size_t c = 0; c < clusters; ++c) {
      const bool tail =
          counts[c] == 0 || static_cast<double>(counts[c]) < tail_count;
      if (c == head || !tail) continue;
      const double scale =
          optimizer.reseed_noise * head_norm / std::sqrt(static_cast<double>(d));
      for (std::size_t j = 0; j < d; ++j) {
        state.centroids[c * d + j] = head_copy[j] + scale * rng.normal();
        velocity[c * d + j] = 0.0;
      }
      ++trace.reseeds;
    }
  }
  return result;
}

UsltRun select_uslt(const EmbeddingMatrix& features, std::size_t budget,
                    const UsltParams& params,
                    const OptimizerOptions& optimizer) {
  if (budget < 1 || budget > features.rows()) {
    throw InvalidArgument("budget = " + std::to_string(budget) +
                          " must be in [1, " +
                          std::to_string(features.rows()) + "]");
  }
  UsltRun run;
  run.params = params;
  run.optimizer = optimizer;
  run.fit = fit_centroids(features, budget, params, optimizer);

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(budget, kNone);
  std::vector<double> best_conf(budget, -1.0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const AssignmentPair pair = assign(features.row(i), run.fit.state, params.metric);
    if (best[pair.hard] == kNone || pair.confidence > best_conf[pair.hard]) {
      best[pair.hard] = i;
      best_conf[pair.hard] = pair.confidence;
    }
  }
  std::size_t empty = 0;
  for (std::size_t c = 0; c < budget; ++c) empty += best[c] == kNone;
  if (empty > 0) {
    throw DataError("USL-T left " + std::to_string(empty) +
                    " cluster(s) empty; cannot fill the budget of " +
                    std::to_string(budget) + " with one pick per cluster");
  }

  SelectionResult& sel = run.selection;
  sel.indices = best;
  sel.cluster_of.resize(budget);
  std::iota(sel.cluster_of.begin(), sel.cluster_of.end(), std::size_t{0});
  sel.history.push_back({best, best_conf});
  run.confidence = std::move(best_conf);
  return run;
}

}  // namespace usl::uslt
