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

#ifndef USL_PARALLEL_HPP_
#define USL_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace usl {

// Worker count used by parallel kernels. Defaults to the USL_THREADS
// environment variable when set, else hardware concurrency.
std::size_t num_threads();

// Overrides the worker count; 0 restores the default.
void set_num_threads(std::size_t threads);

// Splits [0, count) into contiguous chunks and runs body(begin, end) on each.
// Every index is processed by exactly one call, so kernels that write only to
// per-index outputs produce identical results for any worker count.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1);

}  // namespace usl

#endif  // USL_PARALLEL_HPP_
