// Copyright 2026 The meshpose Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// meshpose command-line tool. Log verbosity comes from MESHPOSE_LOG
// (trace, debug, info, warn, error, off; default info).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "meshpose/cli.hpp"
#include "meshpose/io.hpp"

namespace {

using namespace meshpose;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("meshpose");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("MESHPOSE_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only "off" itself should silence.
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("ignoring unknown MESHPOSE_LOG value '{}'", env);
    }
  }
}

int cmd_benchmark(const std::string& config_path, std::optional<uint64_t> seed, std::optional<int> workers) {
  RunConfig config = load_config(config_path);
  if (seed) config.seed = *seed;
  if (workers) config.workers = *workers;
  config.validate();
  spdlog::info("building prototypes (seed {})", config.prototype_seed);
  const PrototypeSet prototypes = make_prototypes(config.sim, config.prototype_seed);
  spdlog::info("running {} scenes on {} worker(s)", config.scenes, config.workers);
  const auto results = run_benchmark_sweep(config, prototypes);
  bool ok = true;
  for (const auto& r : results) {
    spdlog::info("outlier_rate {:.2f}: recall {:.4f} ({}/{}), false positives {}, 10deg/0.5d {:.4f}",
                 r.outlier_rate, r.detection.recall(), r.detection.matched, r.detection.gt,
                 r.detection.false_positives, r.report.mean[kDeg10T05]);
    for (const auto& v : r.monotonicity_violations) {
      spdlog::error("monotonicity violation: {}", v);
      ok = false;
    }
  }
  for (const auto& path : write_benchmark_outputs(config, results)) spdlog::info("wrote {}", path);
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_selftest(double perturbation) {
  SelftestOptions options;
  options.gradient_perturbation = perturbation;
  const auto checks = run_selftest(options);
  std::vector<std::string> failed;
  for (const auto& c : checks) {
    std::printf("%s %s (%.2f s): %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.seconds, c.detail.c_str());
    if (!c.passed) failed.push_back(c.name);
  }
  if (failed.empty()) return kExitOk;
  std::string names;
  for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
  std::printf("failing checks: %s\n", names.c_str());
  return kExitCheckFailed;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, std::optional<uint64_t> seed) {
  RunConfig config = load_config(config_path);
  if (seed) config.seed = *seed;
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir + ": " + ec.message());
  const PrototypeSet prototypes = make_prototypes(config.sim, config.prototype_seed);
  write_prototypes((fs::path(out_dir) / "prototypes.mpproto").string(), prototypes);
  std::map<int, std::vector<Pose9D>> gt;
  for (int i = 0; i < config.scenes; ++i) {
    SeedStream rng = SeedStream(config.seed).fork(static_cast<uint64_t>(i));
    const SceneGroundTruth scene = generate_scene(config.sim, prototypes, rng);
    const SimulatedObservation obs = synthesize_feature_maps(scene, prototypes, config.sim, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "scene-%05d.mpobs", i);
    write_observation((fs::path(out_dir) / name).string(), obs);
    gt[i] = scene.objects;
  }
  write_pose_lines((fs::path(out_dir) / "gt.jsonl").string(), gt);
  spdlog::info("wrote {} scenes to {}", config.scenes, out_dir);
  return kExitOk;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gt_path, const std::string& config_path,
                 const std::string& csv_path) {
  MetricThresholds thresholds;
  if (!config_path.empty()) thresholds = load_config(config_path).thresholds;
  const auto preds = read_pose_lines(pred_path);
  const auto gts = read_pose_lines(gt_path);
  std::set<int> scenes;
  for (const auto& [k, _] : preds) scenes.insert(k);
  for (const auto& [k, _] : gts) scenes.insert(k);
  const SymmetrySpec symmetry = SymmetrySpec::standard();
  std::vector<SceneEvaluation> evals;
  for (int s : scenes) {
    SceneGroundTruth gt;
    if (auto it = gts.find(s); it != gts.end()) gt.objects = it->second;
    std::vector<Pose9D> p;
    if (auto it = preds.find(s); it != preds.end()) p = it->second;
    evals.push_back(evaluate_scene(p, gt, symmetry, thresholds));
  }
  const MetricsReport report = aggregate_map(evals, thresholds);
  std::fputs(report.to_json().c_str(), stdout);
  std::fputs("\n", stdout);
  if (!csv_path.empty()) write_text_file(csv_path, report.to_csv());
  const auto violations = check_monotonicity(report);
  for (const auto& v : violations) spdlog::error("monotonicity violation: {}", v);
  return violations.empty() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"meshpose: detection and category-level 9D pose on synthetic feature maps"};
  app.require_subcommand(1);

  std::string config_path, out_dir, pred_path, gt_path, csv_path;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  double perturbation = 0.0;

  auto* bench = app.add_subcommand("benchmark", "Simulate scenes, run the pipeline and write metric reports");
  bench->add_option("--config", config_path, "YAML run configuration")->required();
  bench->add_option("--seed", seed, "Override the scene seed");
  bench->add_option("--workers", workers, "Override the worker count");

  auto* self = app.add_subcommand("selftest", "Run the numerical oracle suite");
  self->add_option("--perturb-gradient", perturbation, "Scale the analytic gradient by 1 + x (negative control)");

  auto* sim = app.add_subcommand("simulate", "Write simulated observation containers");
  sim->add_option("--config", config_path, "YAML run configuration")->required();
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--seed", seed, "Override the scene seed");

  auto* eval = app.add_subcommand("evaluate", "Score JSONL pose predictions against JSONL ground truth");
  eval->add_option("--pred", pred_path, "Predicted poses, one JSON object per line")->required();
  eval->add_option("--gt", gt_path, "Ground-truth poses, one JSON object per line")->required();
  eval->add_option("--config", config_path, "Optional YAML configuration for metric thresholds");
  eval->add_option("--csv", csv_path, "Also write the report as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*bench) return cmd_benchmark(config_path, seed, workers);
    if (*self) return cmd_selftest(perturbation);
    if (*sim) return cmd_simulate(config_path, out_dir, seed);
    if (*eval) return cmd_evaluate(pred_path, gt_path, config_path, csv_path);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    switch (e.code()) {
      case ErrorCode::kConfig:
      case ErrorCode::kInvalidArgument:
        return kExitConfig;
      case ErrorCode::kIo:
        return kExitIo;
      default:
        return kExitCheckFailed;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitCheckFailed;
  }
  return kExitOk;
}
