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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "meshpose/cli.hpp"
#include "meshpose/io.hpp"

namespace py = pybind11;
using namespace meshpose;

namespace {

AnnotationSet make_annotations(const std::vector<int>& bank_indices, const MatX& pixel_features,
                               const std::vector<bool>& visible) {
  if (static_cast<Eigen::Index>(bank_indices.size()) != pixel_features.rows() ||
      bank_indices.size() != visible.size()) {
    throw Error(ErrorCode::kShapeMismatch, "bank_indices, pixel_features and visible must have equal length");
  }
  AnnotationSet set;
  for (size_t k = 0; k < bank_indices.size(); ++k) {
    set.entries.push_back({bank_indices[k], pixel_features.row(static_cast<Eigen::Index>(k)).transpose(), visible[k]});
  }
  return set;
}

}  // namespace

PYBIND11_MODULE(_meshpose, m) {
  m.doc() = "Detection and category-level 9D pose estimation on synthetic feature maps";

  static py::exception<Error> error(m, "MeshposeError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object code = py::str(std::string(to_string(e.code())));
      py::set_error(error, py::make_tuple(py::str(e.what()), code));
    }
  });

  m.attr("DEFAULT_KAPPA") = kDefaultKappa;

  py::class_<SeedStream>(m, "SeedStream")
      .def(py::init<uint64_t>(), py::arg("seed") = 0)
      .def("fork", py::overload_cast<uint64_t>(&SeedStream::fork, py::const_), py::arg("key"))
      .def("fork", py::overload_cast<std::string_view>(&SeedStream::fork, py::const_), py::arg("key"))
      .def_property_readonly("seed", &SeedStream::seed);

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init<>())
      .def_readwrite("fx", &CameraIntrinsics::fx)
      .def_readwrite("fy", &CameraIntrinsics::fy)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def_readwrite("width", &CameraIntrinsics::width)
      .def_readwrite("height", &CameraIntrinsics::height)
      .def("validate", &CameraIntrinsics::validate)
      .def("matrix", &CameraIntrinsics::matrix)
      .def("downscaled", &CameraIntrinsics::downscaled, py::arg("stride"));

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def_readwrite("R", &Pose::R)
      .def_readwrite("t", &Pose::t);

  py::class_<Pose9D>(m, "Pose9D")
      .def(py::init<>())
      .def_static("make", &Pose9D::make, py::arg("category"), py::arg("R"), py::arg("t"), py::arg("deformation"),
                  py::arg("size"))
      .def_readwrite("category", &Pose9D::category)
      .def_readwrite("R", &Pose9D::R)
      .def_readwrite("t", &Pose9D::t)
      .def_readwrite("deformation", &Pose9D::deformation)
      .def_readwrite("size", &Pose9D::size)
      .def_readwrite("scale", &Pose9D::scale)
      .def("to_json", [](const Pose9D& p) { return pose_to_json(p); })
      .def_static("from_json", [](const std::string& s) { return pose_from_json(s); });

  py::class_<CategoryPrototype>(m, "CategoryPrototype")
      .def_readonly("category", &CategoryPrototype::category)
      .def_readonly("vertices", &CategoryPrototype::vertices)
      .def_readonly("triangles", &CategoryPrototype::triangles)
      .def_readonly("features", &CategoryPrototype::features)
      .def_readonly("mean_size", &CategoryPrototype::mean_size)
      .def_readonly("mean_scale", &CategoryPrototype::mean_scale)
      .def("mean_scale_vertices", &CategoryPrototype::mean_scale_vertices);

  py::class_<PrototypeSet>(m, "PrototypeSet")
      .def("__len__", &PrototypeSet::size)
      .def("__getitem__", [](const PrototypeSet& s, const std::string& c) { return s.at(c); })
      .def("categories", [](const PrototypeSet& s) {
        std::vector<std::string> out;
        for (const auto& p : s) out.push_back(p.category);
        return out;
      });

  py::class_<SceneGroundTruth>(m, "SceneGroundTruth")
      .def(py::init<>())
      .def_readwrite("objects", &SceneGroundTruth::objects)
      .def_readwrite("intrinsics", &SceneGroundTruth::intrinsics);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("min_instances", &SimConfig::min_instances)
      .def_readwrite("max_instances", &SimConfig::max_instances)
      .def_readwrite("single_category", &SimConfig::single_category)
      .def_readwrite("kappa_sim", &SimConfig::kappa_sim)
      .def_readwrite("outlier_rate", &SimConfig::outlier_rate)
      .def_readwrite("heatmap_sigma", &SimConfig::heatmap_sigma)
      .def_readwrite("pixel_jitter", &SimConfig::pixel_jitter)
      .def_readwrite("max_overlap", &SimConfig::max_overlap)
      .def_readwrite("stride", &SimConfig::stride)
      .def_readwrite("feature_dim", &SimConfig::feature_dim)
      .def_readwrite("target_vertices", &SimConfig::target_vertices)
      .def_readwrite("intrinsics", &SimConfig::intrinsics)
      .def("validate", &SimConfig::validate);

  py::class_<SimulatedObservation>(m, "SimulatedObservation")
      .def_readonly("intrinsics", &SimulatedObservation::intrinsics)
      .def_readonly("gt", &SimulatedObservation::gt)
      .def_property_readonly("mean_features",
                             [](const SimulatedObservation& o) { return o.mean_scale_map.features; })
      .def_property_readonly("instance_features",
                             [](const SimulatedObservation& o) { return o.instance_scale_map.features; })
      .def_property_readonly("grid_shape", [](const SimulatedObservation& o) {
        return py::make_tuple(o.mean_scale_map.height, o.mean_scale_map.width);
      });

  py::class_<PipelineParams>(m, "PipelineParams")
      .def(py::init<>())
      .def_readwrite("t1", &PipelineParams::t1)
      .def_readwrite("t2", &PipelineParams::t2)
      .def_readwrite("refine", &PipelineParams::refine)
      .def("validate", &PipelineParams::validate);

  py::class_<PoseHypothesis>(m, "PoseHypothesis")
      .def_readonly("category", &PoseHypothesis::category)
      .def_readonly("R", &PoseHypothesis::R)
      .def_readonly("t", &PoseHypothesis::t)
      .def_readonly("inliers", &PoseHypothesis::inliers)
      .def_readonly("score", &PoseHypothesis::score);

  py::class_<PipelineOutput>(m, "PipelineOutput")
      .def_readonly("hypotheses", &PipelineOutput::hypotheses)
      .def_readonly("rigid", &PipelineOutput::rigid)
      .def_readonly("refined", &PipelineOutput::refined);

  m.def("make_prototypes", &make_prototypes, py::arg("config"), py::arg("seed"));
  m.def(
      "simulate_scene",
      [](const SimConfig& config, const PrototypeSet& prototypes, uint64_t seed) {
        SeedStream rng(seed);
        const SceneGroundTruth scene = generate_scene(config, prototypes, rng);
        return synthesize_feature_maps(scene, prototypes, config, rng);
      },
      py::arg("config"), py::arg("prototypes"), py::arg("seed"));
  m.def(
      "run_pipeline",
      [](const SimulatedObservation& obs, const PrototypeSet& prototypes, const PipelineParams& params,
         uint64_t seed) {
        py::gil_scoped_release release;
        return run_pipeline(obs, prototypes, params, SeedStream(seed));
      },
      py::arg("observation"), py::arg("prototypes"), py::arg("params") = PipelineParams{}, py::arg("seed") = 0);

  py::class_<OrientedBox>(m, "OrientedBox")
      .def(py::init([](const Vec3& center, const Mat3& rotation, const Vec3& size) {
             return OrientedBox{center, rotation, size};
           }),
           py::arg("center"), py::arg("rotation"), py::arg("size"))
      .def_static("from_pose", &OrientedBox::from)
      .def_readwrite("center", &OrientedBox::center)
      .def_readwrite("rotation", &OrientedBox::rotation)
      .def_readwrite("size", &OrientedBox::size)
      .def("volume", &OrientedBox::volume);
  m.def("iou3d", &iou3d, py::arg("a"), py::arg("b"));
  m.def("voxel_iou", &voxel_iou, py::arg("a"), py::arg("b"), py::arg("resolution") = 200);
  m.def("normalized_iou", &normalized_iou, py::arg("pred"), py::arg("gt"));
  m.def(
      "rotation_error",
      [](const Mat3& R_pred, const Mat3& R_gt, const std::string& category) {
        return rotation_error(R_pred, R_gt, SymmetrySpec::standard().entry(category));
      },
      py::arg("R_pred"), py::arg("R_gt"), py::arg("category") = "");
  m.def(
      "evaluate",
      [](const std::vector<std::vector<Pose9D>>& predictions, const std::vector<std::vector<Pose9D>>& gt) {
        if (predictions.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "one prediction list per scene");
        const MetricThresholds th;
        std::vector<SceneEvaluation> evals;
        for (size_t i = 0; i < gt.size(); ++i) {
          SceneGroundTruth scene;
          scene.objects = gt[i];
          evals.push_back(evaluate_scene(predictions[i], scene, SymmetrySpec::standard(), th));
        }
        return aggregate_map(evals, th).to_json();
      },
      py::arg("predictions"), py::arg("gt"), "Aggregate metrics as a JSON string.");

  m.def("solve_epnp", [](const std::vector<Vec2>& px, const std::vector<Vec3>& X,
                         const CameraIntrinsics& K) { return solve_epnp(px, X, K); });
  m.def("project_point", &project_point, py::arg("K"), py::arg("R"), py::arg("t"), py::arg("x"));

  m.def(
      "sample_vmf",
      [](const VecX& mean, double kappa, uint64_t seed) {
        SeedStream rng(seed);
        return sample_vmf(mean, kappa, rng);
      },
      py::arg("mean"), py::arg("kappa"), py::arg("seed") = 0);
  m.def(
      "contrastive_loss",
      [](const std::vector<int>& idx, const MatX& f, const std::vector<bool>& vis, const MatX& bank, double kappa) {
        return contrastive_loss(make_annotations(idx, f, vis), bank, kappa);
      },
      py::arg("bank_indices"), py::arg("pixel_features"), py::arg("visible"), py::arg("bank"),
      py::arg("kappa") = kDefaultKappa);
  m.def(
      "contrastive_loss_grad",
      [](const std::vector<int>& idx, const MatX& f, const std::vector<bool>& vis, const MatX& bank, double kappa) {
        const auto g = contrastive_loss_grad(make_annotations(idx, f, vis), bank, kappa);
        return py::make_tuple(g.loss, g.d_pixel, g.d_bank);
      },
      py::arg("bank_indices"), py::arg("pixel_features"), py::arg("visible"), py::arg("bank"),
      py::arg("kappa") = kDefaultKappa, "Returns (loss, d_pixel_features, d_bank).");

  m.def(
      "selftest",
      [](uint64_t seed) {
        py::list out;
        for (const auto& c : run_selftest({seed, 0.0})) out.append(py::make_tuple(c.name, c.passed, c.detail));
        return out;
      },
      py::arg("seed") = 2024);
  m.def("config_to_yaml", [](const std::string& yaml) { return to_yaml(parse_config(yaml)); }, py::arg("yaml"),
        "Parses a run configuration and returns its full normalized echo.");
}
