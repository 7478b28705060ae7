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
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "meshpose/cli.hpp"

namespace meshpose {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Parser {
 public:
  explicit Parser(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& msg) const {
    std::string where = origin_;
    if (node.IsDefined() && node.Mark().line >= 0) where += ":" + std::to_string(node.Mark().line + 1);
    throw ConfigError(where + ": field '" + field + "': " + msg);
  }

  using Handler = std::function<void(const YAML::Node&, const std::string&)>;

  void section(const YAML::Node& node, const std::string& prefix, const std::map<std::string, Handler>& fields) const {
    if (!node.IsMap()) fail(node, prefix.empty() ? "<root>" : prefix, "expected a mapping");
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      const std::string field = prefix.empty() ? key : prefix + "." + key;
      auto it = fields.find(key);
      if (it == fields.end()) fail(kv.first, field, "unknown key");
      it->second(kv.second, field);
    }
  }

  template <typename T>
  T scalar(const YAML::Node& node, const std::string& field) const {
    if (!node.IsScalar()) fail(node, field, "expected a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, field, std::is_same_v<T, bool> ? "expected true or false" : "expected a number");
    }
  }

  Handler real(double& target, double lo, double hi, bool lo_open = false, bool hi_open = false) const {
    return [=, this, &target](const YAML::Node& n, const std::string& f) {
      const double v = scalar<double>(n, f);
      const bool ok = std::isfinite(v) && (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
      if (!ok) {
        std::ostringstream msg;
        msg << "value " << v << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << (hi_open ? ")" : "]");
        fail(n, f, msg.str());
      }
      target = v;
    };
  }

  template <typename I>
  Handler integer(I& target, long long lo, long long hi) const {
    return [=, this, &target](const YAML::Node& n, const std::string& f) {
      const auto v = scalar<long long>(n, f);
      if (v < lo || v > hi) fail(n, f, "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                                           std::to_string(hi) + "]");
      target = static_cast<I>(v);
    };
  }

  Handler boolean(bool& target) const {
    return [this, &target](const YAML::Node& n, const std::string& f) { target = scalar<bool>(n, f); };
  }

  template <size_t N>
  Handler ascending(std::array<double, N>& target) const {
    return [this, &target](const YAML::Node& n, const std::string& f) {
      if (!n.IsSequence() || n.size() != N) fail(n, f, "expected a list of " + std::to_string(N) + " numbers");
      for (size_t i = 0; i < N; ++i) target[i] = scalar<double>(n[i], f);
      for (size_t i = 0; i < N; ++i) {
        if (!(target[i] > 0) || (i > 0 && target[i] < target[i - 1])) fail(n, f, "values must be positive and ascending");
      }
    };
  }

 private:
  std::string origin_;
};

RunConfig parse(const YAML::Node& root, const std::string& origin) {
  const Parser p(origin);
  RunConfig c;
  auto& s = c.sim;
  auto& K = s.intrinsics;
  auto& sv = c.pipeline.solver;
  auto& rf = c.pipeline.refinement;
  auto& th = c.thresholds;

  const std::map<std::string, Parser::Handler> sim = {
      {"categories",
       [&](const YAML::Node& n, const std::string& f) {
         if (!n.IsSequence() || n.size() == 0) p.fail(n, f, "expected a non-empty list of category names");
         const auto known = default_categories();
         std::vector<CategorySpec> chosen;
         for (const auto& item : n) {
           const auto name = p.scalar<std::string>(item, f);
           auto it = std::find_if(known.begin(), known.end(), [&](const CategorySpec& k) { return k.name == name; });
           if (it == known.end()) p.fail(item, f, "unknown category '" + name + "'");
           chosen.push_back(*it);
         }
         s.categories = std::move(chosen);
       }},
      {"min_instances", p.integer(s.min_instances, 0, 64)},
      {"max_instances", p.integer(s.max_instances, 0, 64)},
      {"single_category", p.boolean(s.single_category)},
      {"min_depth", p.real(s.min_depth, 0, kInf, true)},
      {"max_depth", p.real(s.max_depth, 0, kInf, true)},
      {"min_scale_factor", p.real(s.min_scale_factor, 0, kInf, true)},
      {"max_scale_factor", p.real(s.max_scale_factor, 0, kInf, true)},
      {"min_deformation", p.real(s.min_deformation, 0, kInf, true)},
      {"max_deformation", p.real(s.max_deformation, 0, kInf, true)},
      {"kappa_sim", p.real(s.kappa_sim, 0, kInf)},
      {"kappa_mode",
       [&](const YAML::Node& n, const std::string& f) {
         const auto v = p.scalar<std::string>(n, f);
         if (v == "raw") {
           s.kappa_mode = KappaMode::kRaw;
         } else if (v == "per_dimension") {
           s.kappa_mode = KappaMode::kPerDimension;
         } else {
           p.fail(n, f, "expected 'raw' or 'per_dimension'");
         }
       }},
      {"outlier_rate", p.real(s.outlier_rate, 0, 1, false, true)},
      {"distractor_rate", p.real(s.distractor_rate, 0, 1)},
      {"heatmap_sigma", p.real(s.heatmap_sigma, 0, kInf)},
      {"pixel_jitter", p.real(s.pixel_jitter, 0, kInf)},
      {"occlusion", p.boolean(s.occlusion)},
      {"max_overlap", p.real(s.max_overlap, 0, 1)},
      {"stride", p.integer(s.stride, 1, 64)},
      {"feature_dim", p.integer(s.feature_dim, 2, 4096)},
      {"target_vertices", p.integer(s.target_vertices, 8, 1000000)},
  };
  const std::map<std::string, Parser::Handler> camera = {
      {"fx", p.real(K.fx, 0, kInf, true)},      {"fy", p.real(K.fy, 0, kInf, true)},
      {"cx", p.real(K.cx, -kInf, kInf)},        {"cy", p.real(K.cy, -kInf, kInf)},
      {"width", p.integer(K.width, 1, 65536)}, {"height", p.integer(K.height, 1, 65536)},
  };
  const std::map<std::string, Parser::Handler> solver = {
      {"pixel_threshold", p.real(sv.pixel_threshold, 0, kInf, true)},
      {"max_iterations", p.integer(sv.max_iterations, 1, 100000000)},
      {"min_inliers", p.integer(sv.min_inliers, 6, 100000000)},
      {"max_instances", p.integer(sv.max_instances, 1, 1024)},
      {"confidence", p.real(sv.confidence, 0, 1, true, true)},
      {"duplicate_overlap", p.real(sv.duplicate_overlap, 0, 1, true)},
      {"duplicate_distance", p.real(sv.duplicate_distance, 0, kInf)},
      {"duplicate_rotation", p.real(sv.duplicate_rotation, 0, kInf)},
  };
  const std::map<std::string, Parser::Handler> refinement = {
      {"enabled", p.boolean(c.pipeline.refine)},
      {"pixel_threshold", p.real(rf.pixel_threshold, 0, kInf, true)},
      {"max_iterations", p.integer(rf.max_iterations, 1, 100000000)},
      {"huber", p.boolean(rf.huber)},
  };
  const std::map<std::string, Parser::Handler> pipeline = {
      {"t1", p.real(c.pipeline.t1, 0, 1)},
      {"t2", p.real(c.pipeline.t2, -1, 1)},
  };
  const std::map<std::string, Parser::Handler> metrics = {
      {"niou", p.ascending(th.niou)},
      {"degrees", p.ascending(th.degrees)},
      {"normalized_translation", p.ascending(th.normalized_translation)},
      {"absolute_iou", p.ascending(th.absolute_iou)},
      {"meters", p.ascending(th.meters)},
  };
  const std::map<std::string, Parser::Handler> sweep = {
      {"outlier_rates",
       [&](const YAML::Node& n, const std::string& f) {
         if (!n.IsSequence() || n.size() == 0) p.fail(n, f, "expected a non-empty list");
         c.outlier_rates.clear();
         for (const auto& item : n) {
           double v = 0;
           p.real(v, 0, 1, false, true)(item, f);
           c.outlier_rates.push_back(v);
         }
       }},
  };
  auto sub = [&](const std::map<std::string, Parser::Handler>& fields) {
    return [&p, &fields](const YAML::Node& n, const std::string& f) { p.section(n, f, fields); };
  };
  const std::map<std::string, Parser::Handler> top = {
      {"seed", p.integer(c.seed, 0, std::numeric_limits<long long>::max())},
      {"prototype_seed", p.integer(c.prototype_seed, 0, std::numeric_limits<long long>::max())},
      {"scenes", p.integer(c.scenes, 1, 10000000)},
      {"workers", p.integer(c.workers, 1, 1024)},
      {"output_dir",
       [&](const YAML::Node& n, const std::string& f) {
         c.output_dir = p.scalar<std::string>(n, f);
         if (c.output_dir.empty()) p.fail(n, f, "must not be empty");
       }},
      {"sim", sub(sim)},
      {"camera", sub(camera)},
      {"solver", sub(solver)},
      {"refinement", sub(refinement)},
      {"pipeline", sub(pipeline)},
      {"metrics", sub(metrics)},
      {"sweep", sub(sweep)},
  };
  if (root.IsNull()) return c;
  p.section(root, "", top);
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

}  // namespace

void RunConfig::validate() const {
  auto wrap = [](const char* section, const auto& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw ConfigError(std::string("field '") + section + "': " + e.what());
    }
  };
  wrap("sim", [&] { sim.validate(); });
  wrap("pipeline", [&] { pipeline.validate(); });
  wrap("metrics", [&] { thresholds.validate(); });
  if (scenes < 1) throw ConfigError("field 'scenes': must be positive");
  if (workers < 1) throw ConfigError("field 'workers': must be positive");
  if (output_dir.empty()) throw ConfigError("field 'output_dir': must not be empty");
  for (double r : outlier_rates) {
    if (!(r >= 0 && r < 1)) throw ConfigError("field 'sweep.outlier_rates': values must lie in [0, 1)");
  }
}

RunConfig parse_config(const std::string& yaml_text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  return parse(root, origin);
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

namespace {

// Shortest decimal form that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "prototype_seed" << YAML::Value << c.prototype_seed;
  out << YAML::Key << "scenes" << YAML::Value << c.scenes;
  out << YAML::Key << "workers" << YAML::Value << c.workers;
  out << YAML::Key << "output_dir" << YAML::Value << c.output_dir;

  const auto& s = c.sim;
  out << YAML::Key << "sim" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "categories" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& cat : s.categories) out << cat.name;
  out << YAML::EndSeq;
  out << YAML::Key << "min_instances" << YAML::Value << s.min_instances;
  out << YAML::Key << "max_instances" << YAML::Value << s.max_instances;
  out << YAML::Key << "single_category" << YAML::Value << s.single_category;
  out << YAML::Key << "min_depth" << YAML::Value << shortest(s.min_depth);
  out << YAML::Key << "max_depth" << YAML::Value << shortest(s.max_depth);
  out << YAML::Key << "min_scale_factor" << YAML::Value << shortest(s.min_scale_factor);
  out << YAML::Key << "max_scale_factor" << YAML::Value << shortest(s.max_scale_factor);
  out << YAML::Key << "min_deformation" << YAML::Value << shortest(s.min_deformation);
  out << YAML::Key << "max_deformation" << YAML::Value << shortest(s.max_deformation);
  out << YAML::Key << "kappa_sim" << YAML::Value << shortest(s.kappa_sim);
  out << YAML::Key << "kappa_mode" << YAML::Value << (s.kappa_mode == KappaMode::kRaw ? "raw" : "per_dimension");
  out << YAML::Key << "outlier_rate" << YAML::Value << shortest(s.outlier_rate);
  out << YAML::Key << "distractor_rate" << YAML::Value << shortest(s.distractor_rate);
  out << YAML::Key << "heatmap_sigma" << YAML::Value << shortest(s.heatmap_sigma);
  out << YAML::Key << "pixel_jitter" << YAML::Value << shortest(s.pixel_jitter);
  out << YAML::Key << "occlusion" << YAML::Value << s.occlusion;
  out << YAML::Key << "max_overlap" << YAML::Value << shortest(s.max_overlap);
  out << YAML::Key << "stride" << YAML::Value << s.stride;
  out << YAML::Key << "feature_dim" << YAML::Value << s.feature_dim;
  out << YAML::Key << "target_vertices" << YAML::Value << s.target_vertices;
  out << YAML::EndMap;

  const auto& K = s.intrinsics;
  out << YAML::Key << "camera" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "fx" << YAML::Value << shortest(K.fx) << YAML::Key << "fy" << YAML::Value << shortest(K.fy);
  out << YAML::Key << "cx" << YAML::Value << shortest(K.cx) << YAML::Key << "cy" << YAML::Value << shortest(K.cy);
  out << YAML::Key << "width" << YAML::Value << K.width << YAML::Key << "height" << YAML::Value << K.height;
  out << YAML::EndMap;

  const auto& sv = c.pipeline.solver;
  out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "pixel_threshold" << YAML::Value << shortest(sv.pixel_threshold);
  out << YAML::Key << "max_iterations" << YAML::Value << sv.max_iterations;
  out << YAML::Key << "min_inliers" << YAML::Value << sv.min_inliers;
  out << YAML::Key << "max_instances" << YAML::Value << sv.max_instances;
  out << YAML::Key << "confidence" << YAML::Value << shortest(sv.confidence);
  out << YAML::Key << "duplicate_overlap" << YAML::Value << shortest(sv.duplicate_overlap);
  out << YAML::Key << "duplicate_distance" << YAML::Value << shortest(sv.duplicate_distance);
  out << YAML::Key << "duplicate_rotation" << YAML::Value << shortest(sv.duplicate_rotation);
  out << YAML::EndMap;

  const auto& rf = c.pipeline.refinement;
  out << YAML::Key << "refinement" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << c.pipeline.refine;
  out << YAML::Key << "pixel_threshold" << YAML::Value << shortest(rf.pixel_threshold);
  out << YAML::Key << "max_iterations" << YAML::Value << rf.max_iterations;
  out << YAML::Key << "huber" << YAML::Value << rf.huber;
  out << YAML::EndMap;

  out << YAML::Key << "pipeline" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t1" << YAML::Value << shortest(c.pipeline.t1) << YAML::Key << "t2" << YAML::Value << shortest(c.pipeline.t2);
  out << YAML::EndMap;

  auto list = [&](const char* key, const auto& values) {
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double v : values) out << shortest(v);
    out << YAML::EndSeq;
  };
  const auto& th = c.thresholds;
  out << YAML::Key << "metrics" << YAML::Value << YAML::BeginMap;
  list("niou", th.niou);
  list("degrees", th.degrees);
  list("normalized_translation", th.normalized_translation);
  list("absolute_iou", th.absolute_iou);
  list("meters", th.meters);
  out << YAML::EndMap;

  if (!c.outlier_rates.empty()) {
    out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
    list("outlier_rates", c.outlier_rates);
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace meshpose
