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

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "usl/kmeans.hpp"
#include "usl/neighbor_density.hpp"
#include "usl/rng.hpp"
#include "usl/usl_select.hpp"
#include "usl/uslt_kernels.hpp"

namespace {

usl::EmbeddingMatrix unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  usl::Rng rng(seed);
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      v[i * d + j] = rng.normal();
      s += v[i * d + j] * v[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] /= std::sqrt(s);
  }
  return usl::EmbeddingMatrix(n, d, std::move(v), true);
}

void BM_KnnGraph(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto m = unit_rows(n, 128, 1);
  for (auto _ : state) benchmark::DoNotOptimize(usl::build_knn_graph(m, k));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_KnnGraph)->Args({2000, 20})->Args({5000, 400})->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto clusters = static_cast<std::size_t>(state.range(1));
  const auto m = unit_rows(n, 128, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(usl::kmeans_fit(m, clusters, {.seed = 3}));
  }
}
BENCHMARK(BM_KMeans)->Args({5000, 40})->Args({5000, 250})->Unit(benchmark::kMillisecond);

void BM_SelectUsl(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto budget = static_cast<std::size_t>(state.range(1));
  const auto m = unit_rows(n, 128, 3);
  auto p = usl::UslParams::small_scale(budget);
  p.k = std::min<std::size_t>(p.k, n - 1);
  for (auto _ : state) benchmark::DoNotOptimize(usl::select_usl(m, budget, p));
}
BENCHMARK(BM_SelectUsl)->Args({5000, 40})->Args({10000, 100})->Unit(benchmark::kMillisecond);

void BM_UsltTotalLoss(benchmark::State& state) {
  const auto m = unit_rows(2000, 128, 4);
  usl::Rng rng(5);
  std::vector<double> c(40 * 128);
  for (double& v : c) v = rng.normal();
  const auto st = usl::uslt::UsltState::from_centroids(40, 128, c);
  usl::uslt::Batch batch;
  for (std::size_t i = 0; i < 256; ++i) {
    batch.anchors.push_back(rng.below(2000));
    batch.neighbors.push_back(rng.below(2000));
  }
  const auto params = usl::uslt::UsltParams::small_scale();
  for (auto _ : state) {
    benchmark::DoNotOptimize(usl::uslt::total_loss(m, batch, st, params));
  }
}
BENCHMARK(BM_UsltTotalLoss)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
