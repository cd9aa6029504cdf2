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

#ifndef USL_TOOLS_CLI_HPP_
#define USL_TOOLS_CLI_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace usl::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericalFailure = 3,
};

// Everything needed to reproduce a `select` run. Serialized verbatim as the
// "config" block of the run report.
struct SelectConfig {
  std::string method = "usl";  // usl | uslt | random | stratified
  std::string embeddings;
  std::string format;          // fvecs | csv; empty = from extension
  std::size_t budget = 0;
  std::string profile = "small";
  std::uint64_t seed = 0;
  double jitter = 0.0;
  std::string labels;          // stratified only
  std::string out;
  std::string report;

  // Explicit overrides of profile defaults; unset means "profile value".
  std::optional<std::size_t> k;
  std::optional<double> lambda;
  std::optional<double> alpha;
  std::optional<double> momentum;
  std::optional<std::size_t> iters;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> restarts;

  std::optional<double> tau;
  std::optional<double> adjust_alpha;
  std::optional<double> temperature;
  std::optional<double> loss_weight;
  std::optional<double> ema_momentum;
  std::optional<std::size_t> neighbor_k;
  std::optional<std::string> similarity;
  std::optional<double> learning_rate;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> batch_size;
};

nlohmann::json to_json(const SelectConfig& config);
SelectConfig select_config_from_json(const nlohmann::json& json);

// Executes a selection run, writing the selection file and JSON report.
// Throws usl::Error subclasses on failure.
void run_select(const SelectConfig& config, std::ostream& log);

// Entry point shared by the executable and the tests. Returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace usl::cli

#endif  // USL_TOOLS_CLI_HPP_
