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

#ifndef USL_USLT_KERNELS_HPP_
#define USL_USLT_KERNELS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "usl/embedding_io.hpp"
#include "usl/usl_select.hpp"

namespace usl::uslt {

// Similarity between a feature and a centroid, used as the logit.
enum class Similarity { kDot, kNegSquaredEuclidean };

std::string_view to_string(Similarity metric);
Similarity parse_similarity(std::string_view name);

struct UsltParams {
  double tau = 0.0;           // confidence threshold of the global loss
  double adjust_alpha = 5.0;  // logit-adjustment intensity
  double temperature = 0.25;  // sharpening temperature
  double loss_weight = 5.0;   // weight of the local loss
  double momentum = 0.5;      // EMA momentum of the running mean
  std::size_t neighbor_k = 20;
  Similarity metric = Similarity::kDot;

  static UsltParams small_scale();
  static UsltParams large_scale();
  static UsltParams for_profile(ScaleProfile profile);

  void validate() const;
};

// Learnable centroids plus the running mean of soft assignments.
struct UsltState {
  std::size_t clusters = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;     // clusters * dim
  std::vector<double> running_mean;  // clusters, sums to 1
  std::size_t step = 0;

  // running_mean starts uniform.
  static UsltState from_centroids(std::size_t clusters, std::size_t dim,
                                  std::vector<double> centroids);

  std::span<const double> centroid(std::size_t c) const {
    return {centroids.data() + c * dim, dim};
  }
};

struct AssignmentPair {
  std::vector<double> soft;      // softmax of the logits
  std::vector<double> log_soft;  // log-softmax, exact in the tails
  std::size_t hard = 0;      // argmax logit, ties to the lower id
  double confidence = 0.0;   // soft[hard] == max soft

  std::vector<double> hard_one_hot() const;
};

std::vector<double> similarities(std::span<const double> x,
                                 const UsltState& state, Similarity metric);

// Numerically stable softmax (max-shifted).
std::vector<double> softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> logits);

AssignmentPair assign_from_logits(std::span<const double> logits);
AssignmentPair assign(std::span<const double> x, const UsltState& state,
                      Similarity metric);

// Loss value together with dL/dz for every sample (batch x clusters,
// row-major). Chain through `centroid_gradient` to reach the centroids.
struct LogitLoss {
  double value = 0.0;
  std::vector<double> logit_grad;
  std::size_t used = 0;  // samples contributing to the loss
  bool no_confident_samples = false;
};

// (1/n) * sum over samples with confidence >= tau of KL(hard || soft), which
// is -log soft[hard]. The divisor is the full batch size.
LogitLoss global_loss(std::span<const AssignmentPair> batch, double tau);

struct Decomposition {
  double main_term = 0.0;  // |x - c_M|^2
  double reg_term = 0.0;   // log sum_k exp(-|x - c_k|^2)
};

// Splits the per-sample global loss (tau = 0, negative squared Euclidean
// similarity) into a k-means term and an inter-cluster regularizer.
Decomposition kmeans_equivalence_decomposition(std::span<const double> x,
                                               const UsltState& state,
                                               Similarity metric);

// z - alpha * log(running_mean). Throws on a non-positive mean entry.
std::vector<double> logit_adjust(std::span<const double> logits,
                                 std::span<const double> running_mean,
                                 double adjust_alpha);

// running_mean <- mu * batch_mean + (1 - mu) * running_mean.
void ema_update(UsltState& state, std::span<const double> batch_mean,
                double momentum);

// Temperature softmax exp(z_i / t) / sum_j exp(z_j / t).
std::vector<double> sharpen(std::span<const double> adjusted, double temperature);

// Reference distribution for the local loss: sharpen(logit_adjust(z)).
std::vector<double> local_target(std::span<const double> neighbor_logits,
                                 std::span<const double> running_mean,
                                 const UsltParams& params);

double kl_divergence(std::span<const double> p, std::span<const double> q);

// (1/n) * sum KL(target_i || soft_i). Targets are constants: the gradient is
// taken only through the anchor's soft assignment.
LogitLoss local_loss(std::span<const AssignmentPair> anchors,
                     std::span<const double> targets);

// A minibatch of anchors and their (precomputed, frozen) neighbors.
struct Batch {
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> neighbors;
};

// Quantities that are held constant while differentiating w.r.t. the
// centroids: hard assignments of the anchors and the local-loss targets.
struct FrozenTargets {
  std::vector<std::size_t> hard;
  std::vector<double> local;  // batch x clusters
};

FrozenTargets freeze_targets(const EmbeddingMatrix& features, const Batch& batch,
                             const UsltState& state, const UsltParams& params);

struct TotalLoss {
  double value = 0.0;
  double global = 0.0;
  double local = 0.0;
  bool no_confident_samples = false;
  std::vector<double> gradient;  // clusters * dim
};

// dL/dc_k = sum_i dL/dz_ik * dz_ik/dc_k over the anchors.
std::vector<double> centroid_gradient(const EmbeddingMatrix& features,
                                      std::span<const std::size_t> anchors,
                                      std::span<const double> logit_grad,
                                      const UsltState& state,
                                      Similarity metric);

// L = L_global + loss_weight * L_local with analytic centroid gradients.
TotalLoss total_loss(const EmbeddingMatrix& features, const Batch& batch,
                     const UsltState& state, const UsltParams& params,
                     const FrozenTargets& frozen);
TotalLoss total_loss(const EmbeddingMatrix& features, const Batch& batch,
                     const UsltState& state, const UsltParams& params);

struct OptimizerOptions {
  double learning_rate = 0.1;
  std::size_t steps = 300;
  std::size_t batch_size = 256;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  // Clusters holding fewer than tail_fraction * n / C instances are re-seeded
  // to a perturbed copy of the most populated centroid.
  double tail_fraction = 0.1;
  double reseed_noise = 0.05;
  // Steps between occupancy checks; 0 means once per pass over the data.
  std::size_t reseed_interval = 0;
  // No re-seeding after this fraction of the steps.
  double reseed_until = 0.75;

  void validate() const;
};

struct TrainingTrace {
  std::vector<double> loss;
  std::vector<double> global;
  std::vector<double> local;
  // Hard-assignment histogram at each occupancy check.
  std::vector<std::vector<std::size_t>> occupancy;
  std::vector<std::size_t> occupancy_step;
  std::size_t reseeds = 0;
};

struct FitResult {
  UsltState state;
  TrainingTrace trace;
};

// Gradient descent (with optional heavy-ball momentum) on the total loss over
// minibatches of L2-normalized features. Centroids start at randomly chosen
// feature rows. Throws NumericalError if the loss turns non-finite.
FitResult fit_centroids(const EmbeddingMatrix& features, std::size_t clusters,
                        const UsltParams& params,
                        const OptimizerOptions& optimizer);

struct UsltRun {
  SelectionResult selection;
  std::vector<double> confidence;  // of each pick
  FitResult fit;
  UsltParams params;
  OptimizerOptions optimizer;
};

// Fits budget centroids, then picks the most confident member of each
// cluster. Throws DataError when a cluster ends up with no members.
UsltRun select_uslt(const EmbeddingMatrix& features, std::size_t budget,
                    const UsltParams& params,
                    const OptimizerOptions& optimizer);

}  // namespace usl::uslt

#endif  // USL_USLT_KERNELS_HPP_
