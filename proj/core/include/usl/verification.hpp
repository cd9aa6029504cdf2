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

#ifndef USL_VERIFICATION_HPP_
#define USL_VERIFICATION_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace usl::verification {

// Outcome of one numerical self-check: the worst residual over all cases
// compared against a fixed threshold. For "lower bound" checks the worst
// value must exceed the threshold instead.
struct CheckResult {
  std::string name;
  std::size_t cases = 0;
  double worst = 0.0;
  double threshold = 0.0;
  bool lower_bound = false;
  bool passed = false;
};

// Per-sample global loss versus its k-means main term plus log-sum-exp
// regularizer, on random instances with C <= 8 and d <= 16.
CheckResult loss_decomposition_identity(std::size_t cases, std::uint64_t seed);

// Analytic centroid gradients of the global, local, and total losses against
// central finite differences (step 1e-5), reported as worst relative error.
std::vector<CheckResult> gradient_checks(std::size_t cases, std::uint64_t seed);

// One-cluster collapse: sharpened target uniform within 1e-3 and local-loss
// gradient norm above 1e-3. Even-distribution collapse: target sharper than
// the soft assignment, peaking where the perturbation peaks.
std::vector<CheckResult> anti_collapse_checks(std::size_t seeds,
                                              std::uint64_t seed);

// With centroids at their members' means, finite differences of the k-means
// main term vanish (< 1e-6).
CheckResult kmeans_fixed_point(std::size_t cases, std::uint64_t seed);

std::vector<CheckResult> run_all(std::uint64_t seed = 0);

}  // namespace usl::verification

#endif  // USL_VERIFICATION_HPP_
