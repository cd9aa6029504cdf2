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

#include "cli.hpp"

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "usl/diagnostics.hpp"
#include "usl/embedding_io.hpp"
#include "usl/errors.hpp"
#include "usl/neighbor_density.hpp"
#include "usl/parallel.hpp"
#include "usl/rng.hpp"
#include "usl/usl_select.hpp"
#include "usl/uslt_kernels.hpp"
#include "usl/verification.hpp"

namespace usl::cli {
namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";
constexpr std::string_view kSelectSchema = "usl.select/1";
constexpr std::size_t kReportDefaultK = 400;

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& value) {
  if (j.contains(key) && !j.at(key).is_null()) value = j.at(key).get<T>();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failure on " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw InvalidArgument(std::string(what) + " path is required");
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError(std::string(what) + " file not found: " + path);
  }
}

void require_writable_parent(const std::string& path, const char* what) {
  if (path.empty()) throw InvalidArgument(std::string(what) + " path is required");
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError(std::string(what) + " directory does not exist: " +
                  parent.string());
  }
}

EmbeddingMatrix load_matrix(const std::string& path, const std::string& format) {
  const EmbeddingFormat fmt =
      format.empty() ? format_from_path(path)
      : format == "fvecs"
          ? EmbeddingFormat::kFvecs
          : format == "csv" ? EmbeddingFormat::kCsv
                            : throw InvalidArgument("unknown format '" + format +
                                                    "'");
  return load_embeddings(path, fmt);
}

UtilityScores utility_for_report(const EmbeddingMatrix& normalized,
                                 std::size_t k) {
  return utility_scores(
      build_knn_graph(normalized, std::min(k, normalized.rows() - 1)));
}

json summary(std::span<const double> values) {
  if (values.empty()) return json::object();
  double lo = values[0], hi = values[0], sum = 0.0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  return {{"min", lo}, {"max", hi}, {"mean", sum / static_cast<double>(values.size())}};
}

UslParams resolve_usl(const SelectConfig& c, std::vector<std::string>& overrides) {
  UslParams p = UslParams::for_profile(parse_profile(c.profile), c.budget);
  p.seed = c.seed;
  auto apply = [&](const auto& opt, auto& field, const char* name) {
    if (opt) {
      field = *opt;
      overrides.emplace_back(name);
    }
  };
  apply(c.k, p.k, "k");
  apply(c.lambda, p.reg_lambda, "lambda");
  apply(c.alpha, p.reg_alpha, "alpha");
  apply(c.momentum, p.momentum, "momentum");
  apply(c.iters, p.iterations, "iters");
  apply(c.restarts, p.kmeans.restarts, "restarts");
  if (c.horizon) {
    p.horizon = *c.horizon == 0 ? std::nullopt : std::optional(*c.horizon);
    overrides.emplace_back("horizon");
  }
  p.validate();
  return p;
}

uslt::UsltParams resolve_uslt(const SelectConfig& c,
                              std::vector<std::string>& overrides) {
  uslt::UsltParams p = uslt::UsltParams::for_profile(parse_profile(c.profile));
  auto apply = [&](const auto& opt, auto& field, const char* name) {
    if (opt) {
      field = *opt;
      overrides.emplace_back(name);
    }
  };
  apply(c.tau, p.tau, "tau");
  apply(c.adjust_alpha, p.adjust_alpha, "adjust_alpha");
  apply(c.temperature, p.temperature, "temperature");
  apply(c.loss_weight, p.loss_weight, "loss_weight");
  apply(c.ema_momentum, p.momentum, "ema_momentum");
  apply(c.neighbor_k, p.neighbor_k, "neighbor_k");
  if (c.similarity) {
    p.metric = uslt::parse_similarity(*c.similarity);
    overrides.emplace_back("similarity");
  }
  p.validate();
  return p;
}

uslt::OptimizerOptions resolve_optimizer(const SelectConfig& c,
                                         std::vector<std::string>& overrides) {
  uslt::OptimizerOptions o;
  o.seed = c.seed;
  auto apply = [&](const auto& opt, auto& field, const char* name) {
    if (opt) {
      field = *opt;
      overrides.emplace_back(name);
    }
  };
  apply(c.learning_rate, o.learning_rate, "learning_rate");
  apply(c.steps, o.steps, "steps");
  apply(c.batch_size, o.batch_size, "batch_size");
  o.validate();
  return o;
}

json to_json(const UslParams& p) {
  json j = {{"k", p.k},
            {"lambda", p.reg_lambda},
            {"alpha", p.reg_alpha},
            {"momentum", p.momentum},
            {"iterations", p.iterations},
            {"horizon", p.horizon ? json(*p.horizon) : json(nullptr)},
            {"seed", p.seed},
            {"kmeans",
             {{"init", to_string(p.kmeans.init)},
              {"max_iters", p.kmeans.max_iters},
              {"tol", p.kmeans.tol},
              {"restarts", p.kmeans.restarts}}}};
  return j;
}

json to_json(const uslt::UsltParams& p, const uslt::OptimizerOptions& o) {
  return {{"tau", p.tau},
          {"adjust_alpha", p.adjust_alpha},
          {"temperature", p.temperature},
          {"loss_weight", p.loss_weight},
          {"ema_momentum", p.momentum},
          {"neighbor_k", p.neighbor_k},
          {"similarity", uslt::to_string(p.metric)},
          {"optimizer",
           {{"learning_rate", o.learning_rate},
            {"steps", o.steps},
            {"batch_size", o.batch_size},
            {"momentum", o.momentum},
            {"seed", o.seed},
            {"tail_fraction", o.tail_fraction},
            {"reseed_noise", o.reseed_noise},
            {"reseed_until", o.reseed_until}}}};
}

}  // namespace

json to_json(const SelectConfig& c) {
  json j = {{"method", c.method},     {"embeddings", c.embeddings},
            {"format", c.format},     {"budget", c.budget},
            {"profile", c.profile},   {"seed", c.seed},
            {"jitter", c.jitter},     {"labels", c.labels},
            {"out", c.out},           {"report", c.report}};
  json o = json::object();
  put_optional(o, "k", c.k);
  put_optional(o, "lambda", c.lambda);
  put_optional(o, "alpha", c.alpha);
  put_optional(o, "momentum", c.momentum);
  put_optional(o, "iters", c.iters);
  put_optional(o, "horizon", c.horizon);
  put_optional(o, "restarts", c.restarts);
  put_optional(o, "tau", c.tau);
  put_optional(o, "adjust_alpha", c.adjust_alpha);
  put_optional(o, "temperature", c.temperature);
  put_optional(o, "loss_weight", c.loss_weight);
  put_optional(o, "ema_momentum", c.ema_momentum);
  put_optional(o, "neighbor_k", c.neighbor_k);
  put_optional(o, "similarity", c.similarity);
  put_optional(o, "learning_rate", c.learning_rate);
  put_optional(o, "steps", c.steps);
  put_optional(o, "batch_size", c.batch_size);
  j["overrides"] = std::move(o);
  return j;
}

SelectConfig select_config_from_json(const json& j) {
  try {
    SelectConfig c;
    c.method = j.at("method").get<std::string>();
    c.embeddings = j.at("embeddings").get<std::string>();
    c.format = j.value("format", std::string());
    c.budget = j.at("budget").get<std::size_t>();
    c.profile = j.value("profile", std::string("small"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.jitter = j.value("jitter", 0.0);
    c.labels = j.value("labels", std::string());
    c.out = j.value("out", std::string());
    c.report = j.value("report", std::string());
    const json o = j.value("overrides", json::object());
    get_optional(o, "k", c.k);
    get_optional(o, "lambda", c.lambda);
    get_optional(o, "alpha", c.alpha);
    get_optional(o, "momentum", c.momentum);
    get_optional(o, "iters", c.iters);
    get_optional(o, "horizon", c.horizon);
    get_optional(o, "restarts", c.restarts);
    get_optional(o, "tau", c.tau);
    get_optional(o, "adjust_alpha", c.adjust_alpha);
    get_optional(o, "temperature", c.temperature);
    get_optional(o, "loss_weight", c.loss_weight);
    get_optional(o, "ema_momentum", c.ema_momentum);
    get_optional(o, "neighbor_k", c.neighbor_k);
    get_optional(o, "similarity", c.similarity);
    get_optional(o, "learning_rate", c.learning_rate);
    get_optional(o, "steps", c.steps);
    get_optional(o, "batch_size", c.batch_size);
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run config: ") + e.what());
  }
}

void run_select(const SelectConfig& c, std::ostream& log) {
  static const std::vector<std::string> kMethods = {"usl", "uslt", "random",
                                                    "stratified"};
  if (std::find(kMethods.begin(), kMethods.end(), c.method) == kMethods.end()) {
    throw InvalidArgument("unknown method '" + c.method + "'");
  }
  if (c.budget < 1) throw InvalidArgument("budget must be at least 1");
  parse_profile(c.profile);
  if (!(c.jitter >= 0.0)) throw InvalidArgument("jitter must be >= 0");
  if (c.method == "stratified" && c.labels.empty()) {
    throw InvalidArgument("--labels is required for the stratified baseline");
  }
  if (c.method != "stratified" && !c.labels.empty()) {
    throw InvalidArgument("--labels is only accepted by the stratified baseline");
  }
  require_file(c.embeddings, "embeddings");
  if (!c.labels.empty()) require_file(c.labels, "labels");
  require_writable_parent(c.out, "selection output");
  if (!c.report.empty()) require_writable_parent(c.report, "report");

  log << "select: loading " << c.embeddings << "\n";
  EmbeddingMatrix raw = load_matrix(c.embeddings, c.format);
  if (c.jitter > 0.0) raw = add_jitter(raw, c.jitter, derive_seed(c.seed, 99));
  const EmbeddingMatrix features = l2_normalize(raw);
  const std::size_t n = features.rows();
  if (c.budget > n) {
    throw InvalidArgument("budget " + std::to_string(c.budget) +
                          " exceeds the instance count " + std::to_string(n));
  }

  std::vector<std::string> overrides;
  json report = {{"schema", kSelectSchema},
                 {"tool_version", kVersion},
                 {"config", to_json(c)},
                 {"metadata",
                  {{"prng", Rng::kName},
                   {"distance", "euclidean on L2-normalized features"},
                   {"n", n},
                   {"dim", features.cols()}}}};
  SelectionFile selection;
  json result = json::object();
  std::vector<std::string> warnings;

  if (c.method == "usl") {
    const UslParams params = resolve_usl(c, overrides);
    log << "select: usl on " << n << " x " << features.cols()
        << " (k=" << params.k << ", budget=" << c.budget << ")\n";
    const UslRun run = select_usl(features, c.budget, params);
    selection = run.selection.to_selection_file();
    warnings = run.selection.warnings;
    report["params"] = to_json(params);
    json iterations = json::array();
    for (std::size_t t = 0; t < run.selection.history.size(); ++t) {
      const auto& snap = run.selection.history[t];
      iterations.push_back({{"iteration", t},
                            {"selected", snap.selected},
                            {"scores", snap.scores}});
    }
    result["iterations"] = std::move(iterations);
    result["cluster_of"] = run.selection.cluster_of;
    result["kmeans"] = {{"objective", run.clustering.objective},
                        {"iterations", run.clustering.iterations_run},
                        {"restart", run.clustering.restart}};
    result["utility"] = summary(run.utility.utility);
  } else if (c.method == "uslt") {
    const uslt::UsltParams params = resolve_uslt(c, overrides);
    const uslt::OptimizerOptions optimizer = resolve_optimizer(c, overrides);
    log << "select: uslt on " << n << " x " << features.cols() << " ("
        << optimizer.steps << " steps, budget=" << c.budget << ")\n";
    const uslt::UsltRun run =
        uslt::select_uslt(features, c.budget, params, optimizer);
    selection = run.selection.to_selection_file();
    report["params"] = to_json(params, optimizer);
    report["metadata"]["hard_assignment"] =
        "argmax similarity (closest centroid); the min in the one-hot "
        "assignment formula is read as a sign typo";
    result["confidence"] = run.confidence;
    result["cluster_of"] = run.selection.cluster_of;
    result["trace"] = {{"loss", run.fit.trace.loss},
                       {"global", run.fit.trace.global},
                       {"local", run.fit.trace.local},
                       {"occupancy", run.fit.trace.occupancy},
                       {"occupancy_step", run.fit.trace.occupancy_step},
                       {"reseeds", run.fit.trace.reseeds}};
  } else if (c.method == "random") {
    selection = random_selection(n, c.budget, c.seed);
    report["params"] = {{"seed", c.seed}};
  } else {
    const LabelVector labels = load_labels(c.labels);
    if (labels.size() != n) {
      throw DataError("label count " + std::to_string(labels.size()) +
                      " does not match instance count " + std::to_string(n));
    }
    selection = stratified_selection(labels, c.budget, c.seed);
    report["params"] = {{"seed", c.seed}};
    report["metadata"]["oracle_baseline"] = true;
  }
  report["overrides"] = overrides;
  report["selection"] = selection.indices;
  report["result"] = std::move(result);
  report["warnings"] = warnings;

  save_selection(selection, c.out);
  if (!c.report.empty()) write_text(c.report, report.dump(2) + "\n");
  for (const auto& w : warnings) log << "warning: " << w << "\n";
  log << "select: wrote " << selection.indices.size() << " indices to " << c.out
      << "\n";
}

namespace {

int synth(const SyntheticSpec& spec, const std::string& out,
          const std::string& labels_out, std::ostream& log) {
  require_writable_parent(out, "embeddings output");
  require_writable_parent(labels_out, "labels output");
  const SyntheticData data = generate_synthetic(spec);
  save_embeddings(data.embeddings, out, format_from_path(out));
  save_labels(data.labels, labels_out);
  log << "synth: wrote " << data.embeddings.rows() << " x "
      << data.embeddings.cols() << " to " << out << "\n";
  return kOk;
}

int report_cmd(const std::string& selection_path, const std::string& labels_path,
               const std::string& embeddings, const std::string& format,
               std::size_t k, const std::string& out_path, std::ostream& out) {
  require_file(selection_path, "selection");
  require_file(labels_path, "labels");
  require_file(embeddings, "embeddings");
  if (!out_path.empty()) require_writable_parent(out_path, "report");
  const EmbeddingMatrix features = l2_normalize(load_matrix(embeddings, format));
  const LabelVector labels = load_labels(labels_path);
  if (labels.size() != features.rows()) {
    throw DataError("label count " + std::to_string(labels.size()) +
                    " does not match instance count " +
                    std::to_string(features.rows()));
  }
  const SelectionFile selection = load_selection(selection_path, features.rows());
  const SelectionReport r =
      report(selection, labels, features, utility_for_report(features, k));
  json j = {{"schema", kReportSchema},
            {"config",
             {{"selection", selection_path},
              {"labels", labels_path},
              {"embeddings", embeddings},
              {"k", std::min(k, features.rows() - 1)}}},
            {"report", to_json(r)}};
  if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
  std::vector<ComparisonRow> rows = {{selection_path, false, r}};
  out << format_table(rows);
  return kOk;
}

int compare_cmd(const std::vector<std::string>& specs,
                const std::vector<std::string>& oracle_names,
                const std::string& labels_path, const std::string& embeddings,
                const std::string& format, std::size_t k,
                const std::string& out_path, std::ostream& out) {
  if (specs.empty()) throw InvalidArgument("at least one --selection is required");
  require_file(labels_path, "labels");
  require_file(embeddings, "embeddings");
  if (!out_path.empty()) require_writable_parent(out_path, "report");
  const EmbeddingMatrix features = l2_normalize(load_matrix(embeddings, format));
  const LabelVector labels = load_labels(labels_path);
  if (labels.size() != features.rows()) {
    throw DataError("label count does not match instance count");
  }
  std::vector<NamedSelection> selections;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? spec : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    require_file(path, "selection");
    const bool oracle = std::find(oracle_names.begin(), oracle_names.end(),
                                  name) != oracle_names.end();
    selections.push_back({name, load_selection(path, features.rows()), oracle});
  }
  const auto rows =
      compare(selections, labels, features, utility_for_report(features, k));
  if (!out_path.empty()) {
    json j = {{"schema", kReportSchema},
              {"config", {{"labels", labels_path}, {"embeddings", embeddings},
                          {"k", std::min(k, features.rows() - 1)}}},
              {"rows", to_json(rows)}};
    write_text(out_path, j.dump(2) + "\n");
  }
  out << format_table(rows);
  return kOk;
}

int verify_cmd(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& check : verification::run_all(seed)) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-4s %-52s worst=%.3e %s %.1e (%zu cases)\n",
                  check.passed ? "ok" : "FAIL", check.name.c_str(), check.worst,
                  check.lower_bound ? ">" : "<", check.threshold, check.cases);
    out << line;
    ok = ok && check.passed;
  }
  return ok ? kOk : kNumericalFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Unsupervised selective labeling: pick the instances worth "
               "annotating from unlabeled embeddings"};
  app.name("usl");
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t threads = 0;
  bool quiet = false;
  app.add_option("--threads", threads, "Worker threads (default: hardware)");
  app.add_flag("--quiet", quiet, "Suppress progress lines");

  // select
  SelectConfig sc;
  auto* select = app.add_subcommand("select", "Select instances to label");
  select->add_option("--method", sc.method, "usl | uslt | random | stratified")
      ->check(CLI::IsMember({"usl", "uslt", "random", "stratified"}));
  select->add_option("--embeddings", sc.embeddings, "Embeddings (.fvecs or .csv)")
      ->required();
  select->add_option("--format", sc.format, "Override format: fvecs | csv")
      ->check(CLI::IsMember({"fvecs", "csv"}));
  select->add_option("--budget", sc.budget, "Number of instances to select")
      ->required()
      ->check(CLI::PositiveNumber);
  select->add_option("--profile", sc.profile, "Hyperparameter profile")
      ->check(CLI::IsMember({"small", "large"}));
  select->add_option("--seed", sc.seed, "Random seed");
  select->add_option("--jitter", sc.jitter,
                     "Uniform noise scale added before normalization (e.g. 1e-12)");
  select->add_option("--labels", sc.labels, "Labels (stratified baseline only)");
  select->add_option("--out", sc.out, "Selection output file")->required();
  select->add_option("--report", sc.report, "JSON run report");
  select->add_option("--k", sc.k, "kNN neighbors for utility");
  select->add_option("--lambda", sc.lambda, "Regularization weight");
  select->add_option("--alpha", sc.alpha, "Regularization distance exponent");
  select->add_option("--momentum", sc.momentum, "Regularizer EMA momentum");
  select->add_option("--iters", sc.iters, "Regularization iterations");
  select->add_option("--horizon", sc.horizon,
                     "Only the h nearest previous picks regularize (0 = all)");
  select->add_option("--restarts", sc.restarts, "k-means restarts");
  select->add_option("--tau", sc.tau, "USL-T confidence threshold");
  select->add_option("--adjust-alpha", sc.adjust_alpha, "USL-T logit adjustment");
  select->add_option("--temperature", sc.temperature, "USL-T sharpening temperature");
  select->add_option("--loss-weight", sc.loss_weight, "USL-T local loss weight");
  select->add_option("--mu", sc.ema_momentum, "USL-T running-mean momentum");
  select->add_option("--neighbor-k", sc.neighbor_k, "USL-T neighborhood size");
  select->add_option("--similarity", sc.similarity, "dot | neg_sq_euclidean")
      ->check(CLI::IsMember({"dot", "neg_sq_euclidean"}));
  select->add_option("--lr", sc.learning_rate, "USL-T learning rate");
  select->add_option("--steps", sc.steps, "USL-T optimization steps");
  select->add_option("--batch-size", sc.batch_size, "USL-T minibatch size");

  // synth
  SyntheticSpec spec;
  std::string synth_out, synth_labels, layout = "ring";
  auto* synth_cmd = app.add_subcommand("synth", "Generate a Gaussian-mixture dataset");
  synth_cmd->add_option("--modes", spec.modes)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--per-mode", spec.per_mode)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", spec.dim)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--sigma", spec.sigma)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--layout", layout)
      ->check(CLI::IsMember({"ring", "random_centers"}));
  synth_cmd->add_option("--radius", spec.radius)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", spec.seed);
  synth_cmd->add_flag("--normalize", spec.normalize, "L2-normalize rows");
  synth_cmd->add_option("--out", synth_out, "Embeddings output (.fvecs/.csv)")
      ->required();
  synth_cmd->add_option("--labels-out", synth_labels, "Label file output")
      ->required();

  // report
  std::string rep_sel, rep_labels, rep_emb, rep_format, rep_out;
  std::size_t rep_k = kReportDefaultK;
  auto* report_sub = app.add_subcommand("report", "Diagnose one selection");
  report_sub->add_option("--selection", rep_sel)->required();
  report_sub->add_option("--labels", rep_labels)->required();
  report_sub->add_option("--embeddings", rep_emb)->required();
  report_sub->add_option("--format", rep_format)->check(CLI::IsMember({"fvecs", "csv"}));
  report_sub->add_option("--k", rep_k, "kNN neighbors for utility percentiles")
      ->check(CLI::PositiveNumber);
  report_sub->add_option("--out", rep_out, "JSON report output");

  // compare
  std::vector<std::string> cmp_specs, cmp_oracles;
  std::string cmp_labels, cmp_emb, cmp_format, cmp_out;
  std::size_t cmp_k = kReportDefaultK;
  auto* compare_sub = app.add_subcommand("compare", "Compare several selections");
  compare_sub->add_option("--selection", cmp_specs, "name=path, repeatable")
      ->required();
  compare_sub->add_option("--oracle", cmp_oracles,
                          "Names of label-aware baselines, repeatable");
  compare_sub->add_option("--labels", cmp_labels)->required();
  compare_sub->add_option("--embeddings", cmp_emb)->required();
  compare_sub->add_option("--format", cmp_format)->check(CLI::IsMember({"fvecs", "csv"}));
  compare_sub->add_option("--k", cmp_k)->check(CLI::PositiveNumber);
  compare_sub->add_option("--out", cmp_out, "JSON output");

  // verify
  std::uint64_t verify_seed = 0;
  auto* verify_sub =
      app.add_subcommand("verify", "Run the loss identity and gradient self-checks");
  verify_sub->add_option("--seed", verify_seed);

  // rerun
  std::string rerun_report, rerun_out, rerun_report_out;
  auto* rerun_sub =
      app.add_subcommand("rerun", "Re-execute a select run from its JSON report");
  rerun_sub->add_option("--report", rerun_report, "Report of the original run")
      ->required();
  rerun_sub->add_option("--out", rerun_out, "Override the selection output path");
  rerun_sub->add_option("--report-out", rerun_report_out,
                        "Override the report output path");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usl: " << e.what() << "\n";
    return kUsage;
  }

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : err;
  set_num_threads(threads);
  try {
    if (select->parsed()) {
      run_select(sc, log);
      return kOk;
    }
    if (synth_cmd->parsed()) {
      spec.layout = parse_layout(layout);
      return synth(spec, synth_out, synth_labels, log);
    }
    if (report_sub->parsed()) {
      return report_cmd(rep_sel, rep_labels, rep_emb, rep_format, rep_k, rep_out,
                        out);
    }
    if (compare_sub->parsed()) {
      return compare_cmd(cmp_specs, cmp_oracles, cmp_labels, cmp_emb, cmp_format,
                         cmp_k, cmp_out, out);
    }
    if (verify_sub->parsed()) return verify_cmd(verify_seed, out);
    if (rerun_sub->parsed()) {
      const json original = read_json(rerun_report);
      if (original.value("schema", std::string()) != kSelectSchema) {
        throw DataError(rerun_report + " is not a select run report");
      }
      SelectConfig config = select_config_from_json(original.at("config"));
      if (!rerun_out.empty()) config.out = rerun_out;
      config.report = rerun_report_out;
      run_select(config, log);
      return kOk;
    }
  } catch (const InvalidArgument& e) {
    err << "usl: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "usl: numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "usl: " << e.what() << "\n";
    return kDataError;
  } catch (const std::bad_alloc&) {
    err << "usl: out of memory\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace usl::cli
