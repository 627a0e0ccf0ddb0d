// Copyright 2026 The voxfuse Authors
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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "voxfuse/dataset.hpp"
#include "voxfuse/error.hpp"
#include "voxfuse/eval.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/pipeline.hpp"
#include "voxfuse/sensorio.hpp"
#include "voxfuse/synth.hpp"

namespace py = pybind11;
using namespace voxfuse;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

py::dict cloud_to_dict(const PointCloud& c) {
  RowMatrix pts(static_cast<Eigen::Index>(c.size()), 3);
  for (std::size_t i = 0; i < c.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = c.points[i].transpose();
  RowMatrix feats = Eigen::Map<const RowMatrix>(c.features.data(), static_cast<Eigen::Index>(c.size()), c.channels);
  py::dict d;
  d["sensor"] = std::string(to_string(c.sensor));
  d["points"] = pts;
  d["features"] = feats;
  return d;
}

PointCloud cloud_from(const RowMatrix& points, const RowMatrix& features, const std::string& sensor) {
  if (points.cols() != 3) throw Error(ErrorCode::kShapeMismatch, "points must be N x 3");
  if (features.rows() != points.rows()) throw Error(ErrorCode::kShapeMismatch, "one feature row per point");
  PointCloud c(parse_sensor_kind(sensor), static_cast<int>(features.cols()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    c.push_back(points.row(i).transpose(), std::span<const double>(features.row(i).data(), features.cols()));
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "voxfuse native core";

  static py::handle error_type = py::exception<Error>(m, "VoxfuseError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(error_type)(e.what());
      err.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  py::class_<Box3D>(m, "Box3D")
      .def(py::init([](const Eigen::Vector3d& center, double l, double w, double h, double yaw,
                       const std::string& cls, std::optional<double> score) {
             Box3D b;
             b.center = center;
             b.l = l;
             b.w = w;
             b.h = h;
             b.yaw = yaw;
             b.cls = parse_object_class(cls);
             b.score = score;
             b.validate();
             return b;
           }),
           py::arg("center"), py::arg("l"), py::arg("w"), py::arg("h"), py::arg("yaw") = 0.0,
           py::arg("cls") = "vehicle", py::arg("score") = py::none())
      .def_readwrite("center", &Box3D::center)
      .def_readwrite("l", &Box3D::l)
      .def_readwrite("w", &Box3D::w)
      .def_readwrite("h", &Box3D::h)
      .def_readwrite("yaw", &Box3D::yaw)
      .def_readwrite("score", &Box3D::score)
      .def_property(
          "cls", [](const Box3D& b) { return std::string(to_string(b.cls)); },
          [](Box3D& b, const std::string& s) { b.cls = parse_object_class(s); })
      .def("volume", &Box3D::volume)
      .def("__eq__", [](const Box3D& a, const Box3D& b) { return a == b; })
      .def("__repr__", [](const Box3D& b) { return box3d_to_json(b).dump(); });

  m.def("iou3d", &iou3d, py::arg("a"), py::arg("b"), "Rotated 3D IoU of two boxes.");
  m.def("nms", &nms, py::arg("boxes"), py::arg("iou_thresh") = 0.7,
        "Greedy non-maximum suppression by descending score.");

  m.def(
      "project_points",
      [](const Eigen::Matrix3d& K, const Eigen::Matrix3d& R, const Eigen::Vector3d& t, const RowMatrix& pts) {
        CameraModel cam;
        cam.K = K;
        cam.R = R;
        cam.t = t;
        const ProjectionMatrix M = projection_matrix(cam);
        RowMatrix out(pts.rows(), 3);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
          const PixelProjection p = project_point(M, pts.row(i).transpose());
          out.row(i) << p.u, p.v, p.depth;
        }
        return out;
      },
      py::arg("K"), py::arg("R"), py::arg("t"), py::arg("points"),
      "Rows of (u, v, depth) for N x 3 reference-frame points.");

  m.def(
      "read_point_cloud", [](const std::filesystem::path& p) { return cloud_to_dict(read_point_cloud(p)); },
      py::arg("path"));
  m.def(
      "write_point_cloud",
      [](const std::filesystem::path& p, const RowMatrix& points, const RowMatrix& features,
         const std::string& sensor) { write_point_cloud(cloud_from(points, features, sensor), p); },
      py::arg("path"), py::arg("points"), py::arg("features"), py::arg("sensor") = "lidar_long");

  m.def("parse_modalities", [](const std::string& s) { return ModalitySet::parse(s).to_string(); },
        py::arg("text"));

  m.def(
      "_synthesize",
      [](const std::string& config_json, const std::filesystem::path& out) {
        const SynthConfig cfg = synth_config_from_json(nlohmann::json::parse(config_json));
        const Rig rig = default_rig();
        std::vector<SceneSample> samples;
        {
          py::gil_scoped_release release;
          for (const auto& s : synth_scene_specs(cfg)) samples.push_back(generate_scene(s, rig));
          write_dataset(samples, rig, out);
        }
        return samples.size();
      },
      py::arg("config_json"), py::arg("out"));

  m.def(
      "_run",
      [](const std::string& config_json, const std::filesystem::path& base) {
        const RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json), base);
        cfg.validate();
        py::gil_scoped_release release;
        const Rig rig = load_rig(cfg.rig_path ? *cfg.rig_path : cfg.data_dir / "rig.json");
        const auto samples = read_dataset(cfg.data_dir);
        const PipelineOutput out = run_pipeline(cfg, samples, rig, load_or_init_weights(cfg));
        return std::make_pair(out.report.to_csv(), detections_to_json(out.frames).dump());
      },
      py::arg("config_json"), py::arg("base") = std::filesystem::path());
}
