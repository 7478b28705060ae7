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

// Configuration, benchmark and self-test drivers behind the command-line
// tool.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshpose/metrics.hpp"
#include "meshpose/scene_sim.hpp"

namespace meshpose {

inline constexpr const char* kBenchmarkSchema = "meshpose.benchmark/1";

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitIo = 3 };

struct RunConfig {
  SimConfig sim;
  PipelineParams pipeline;
  MetricThresholds thresholds;
  int scenes = 50;
  uint64_t seed = 0;
  uint64_t prototype_seed = 1;
  int workers = 1;
  std::string output_dir = "meshpose-out";
  std::vector<double> outlier_rates;  // empty: no sweep

  void validate() const;
};

// Thrown for unparsable or invalid configuration; what() names the file,
// line and field.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::kConfig, what) {}
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& yaml_text, const std::string& origin = "<config>");
// Flat YAML echo of every field; parse_config(to_yaml(c)) == c.
std::string to_yaml(const RunConfig& config);

struct SceneRecord {
  int index = 0;
  int instances = 0;
  double milliseconds = 0.0;  // pipeline only
  SceneEvaluation evaluation;
  std::vector<Pose9D> refined;
  std::vector<Pose9D> rigid;
  SceneGroundTruth gt;
};

struct DetectionSummary {
  int gt = 0;
  int matched = 0;
  int false_positives = 0;
  double recall() const { return gt > 0 ? static_cast<double>(matched) / gt : 0.0; }
};

struct BenchmarkResult {
  std::string schema = kBenchmarkSchema;
  double outlier_rate = 0.0;
  MetricsReport report;        // refined 9D poses
  MetricsReport rigid_report;  // 6D poses at the mean size
  DetectionSummary detection;
  std::vector<SceneRecord> scenes;
  std::vector<std::string> monotonicity_violations;

  // Deterministic: no timings.
  std::string report_json(const RunConfig& config) const;
  std::string timing_json() const;
};

// Runs config.scenes scenes over config.workers threads. Scene i uses
// SeedStream(config.seed).fork(i); results are in scene order.
BenchmarkResult run_benchmark(const RunConfig& config, const PrototypeSet& prototypes);

// One result per configured outlier rate, or a single result when no
// sweep is configured.
std::vector<BenchmarkResult> run_benchmark_sweep(const RunConfig& config, const PrototypeSet& prototypes);

// Writes report.json, report.csv and timing.json (suffixed per sweep
// point) plus sweep.json; returns the written paths.
std::vector<std::string> write_benchmark_outputs(const RunConfig& config,
                                                 const std::vector<BenchmarkResult>& results);

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  uint64_t seed = 2024;
  // Test hook: scales the analytic contrastive gradient, which must make
  // the gradient check fail.
  double gradient_perturbation = 0.0;
};

std::vector<SelftestCheck> run_selftest(const SelftestOptions& options = {});

// Fraction of a 200^3 grid of cell midpoints of `a` that fall inside `b`,
// turned into an IoU. Each grid row is intersected with `b` analytically,
// which counts exactly the same midpoints as testing them one by one.
double voxel_iou(const OrientedBox& a, const OrientedBox& b, int resolution = 200);

// Relative error |g_analytic - g_fd| / |g_fd| over the concatenated pixel
// and bank gradients of one random contrastive problem.
double contrastive_gradient_error(uint64_t seed, double perturbation = 0.0);

}  // namespace meshpose
