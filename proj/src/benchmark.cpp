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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "meshpose/cli.hpp"
#include "meshpose/io.hpp"

namespace meshpose {
namespace {

using ojson = nlohmann::ordered_json;

SceneRecord run_scene(int index, const SimConfig& sim, const RunConfig& config, const PrototypeSet& prototypes,
                      const SymmetrySpec& symmetry) {
  SeedStream rng = SeedStream(config.seed).fork(static_cast<uint64_t>(index));
  SceneRecord rec;
  rec.index = index;
  rec.gt = generate_scene(sim, prototypes, rng);
  rec.instances = static_cast<int>(rec.gt.objects.size());
  const SimulatedObservation obs = synthesize_feature_maps(rec.gt, prototypes, sim, rng);
  const auto start = std::chrono::steady_clock::now();
  PipelineOutput out = run_pipeline(obs, prototypes, config.pipeline, rng.fork("pipeline"));
  rec.milliseconds = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  rec.refined = std::move(out.refined);
  rec.rigid = std::move(out.rigid);
  rec.evaluation = evaluate_scene(rec.refined, rec.gt, symmetry, config.thresholds);
  return rec;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string rate_tag(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "outlier-%.2f", rate);
  return buf;
}

}  // namespace

BenchmarkResult run_benchmark(const RunConfig& config, const PrototypeSet& prototypes) {
  config.validate();
  const SymmetrySpec symmetry = SymmetrySpec::standard();
  BenchmarkResult result;
  result.outlier_rate = config.sim.outlier_rate;
  result.scenes.resize(static_cast<size_t>(config.scenes));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < config.scenes; i = next++) {
      try {
        result.scenes[static_cast<size_t>(i)] = run_scene(i, config.sim, config, prototypes, symmetry);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.scenes;
      }
    }
  };
  const int n_threads = std::min(config.workers, config.scenes);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SceneEvaluation> refined, rigid;
  for (const auto& rec : result.scenes) {
    refined.push_back(rec.evaluation);
    rigid.push_back(evaluate_scene(rec.rigid, rec.gt, symmetry, config.thresholds));
    result.detection.gt += rec.instances;
    result.detection.matched += static_cast<int>(rec.evaluation.matches.size());
    for (const auto& [_, tally] : rec.evaluation.tallies) result.detection.false_positives += tally.false_positives;
  }
  result.report = aggregate_map(refined, config.thresholds);
  result.rigid_report = aggregate_map(rigid, config.thresholds);
  result.monotonicity_violations = check_monotonicity(result.report);
  return result;
}

std::vector<BenchmarkResult> run_benchmark_sweep(const RunConfig& config, const PrototypeSet& prototypes) {
  if (config.outlier_rates.empty()) return {run_benchmark(config, prototypes)};
  std::vector<BenchmarkResult> out;
  for (double rate : config.outlier_rates) {
    RunConfig point = config;
    point.sim.outlier_rate = rate;
    out.push_back(run_benchmark(point, prototypes));
  }
  return out;
}

std::string BenchmarkResult::report_json(const RunConfig& config) const {
  ojson j;
  j["schema"] = schema;
  j["outlier_rate"] = outlier_rate;
  j["scenes"] = scenes.size();
  j["detection"] = {{"gt", detection.gt},
                    {"matched", detection.matched},
                    {"false_positives", detection.false_positives},
                    {"recall", detection.recall()}};
  j["metrics"] = ojson::parse(report.to_json());
  j["metrics_6d"] = ojson::parse(rigid_report.to_json());
  j["monotonicity_violations"] = monotonicity_violations;
  j["config"] = to_yaml(config);
  return j.dump(2) + "\n";
}

std::string BenchmarkResult::timing_json() const {
  ojson j;
  j["schema"] = schema;
  std::vector<double> all;
  std::map<int, std::vector<double>> by_count;
  ojson per_scene = ojson::array();
  for (const auto& s : scenes) {
    all.push_back(s.milliseconds);
    by_count[s.instances].push_back(s.milliseconds);
    per_scene.push_back({{"scene", s.index}, {"instances", s.instances}, {"ms", s.milliseconds}});
  }
  j["median_ms"] = median(all);
  j["mean_ms"] = mean(all);
  ojson groups = ojson::array();
  for (const auto& [count, v] : by_count) {
    groups.push_back({{"instances", count}, {"scenes", v.size()}, {"median_ms", median(v)}, {"mean_ms", mean(v)}});
  }
  j["by_instance_count"] = std::move(groups);
  j["per_scene"] = std::move(per_scene);
  return j.dump(2) + "\n";
}

std::vector<std::string> write_benchmark_outputs(const RunConfig& config,
                                                 const std::vector<BenchmarkResult>& results) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + config.output_dir + ": " + ec.message());
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    const std::string path = (fs::path(config.output_dir) / name).string();
    write_text_file(path, text);
    written.push_back(path);
  };
  const bool sweep = !config.outlier_rates.empty();
  for (const auto& r : results) {
    RunConfig echo = config;
    echo.sim.outlier_rate = r.outlier_rate;
    const std::string suffix = sweep ? "-" + rate_tag(r.outlier_rate) : "";
    emit("report" + suffix + ".json", r.report_json(echo));
    emit("report" + suffix + ".csv", r.report.to_csv());
    emit("timing" + suffix + ".json", r.timing_json());
  }
  if (sweep) {
    ojson j;
    j["schema"] = kBenchmarkSchema;
    ojson points = ojson::array();
    bool non_increasing = true;
    for (size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      if (i > 0 && r.detection.recall() > results[i - 1].detection.recall()) non_increasing = false;
      points.push_back({{"outlier_rate", r.outlier_rate},
                        {"recall", r.detection.recall()},
                        {"loose_joint", r.report.mean[kDeg10T05]},
                        {"loose_joint_6d", r.rigid_report.mean[kDeg10T05]}});
    }
    j["points"] = std::move(points);
    j["recall_non_increasing"] = non_increasing;
    emit("sweep.json", j.dump(2) + "\n");
  }
  return written;
}

}  // namespace meshpose
