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

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "voxfuse/sensorio.hpp"
#include "voxfuse/types.hpp"

namespace voxfuse {

struct WeatherModel {
  double p_drop = 0.0;        // base per-point dropout probability
  double clutter_rate = 0.0;  // Poisson mean of clutter points per frame
  double attenuation = 0.0;   // alpha, per metre of range

  void validate() const;
  bool operator==(const WeatherModel&) const = default;
};

struct PlantedObject {
  Box3D box;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // m/s, reference frame
};

struct SceneSpec {
  std::vector<PlantedObject> objects;
  Eigen::Vector3d ego_velocity = Eigen::Vector3d::Zero();
  double ground_z = -1.9;
  int points_per_object = 300;
  int ground_points = 2000;
  int radar_divisor = 10;      // radar budget = points_per_object / radar_divisor
  double radar_jitter = 0.15;  // metres, per axis
  WeatherModel weather;
  ConditionTags conditions;
  std::uint64_t seed = 0;
  std::int64_t frame_id = 0;
  std::int64_t timestamp_us = 0;
  std::int64_t frame_interval_us = 100000;
  bool render_cameras = true;

  // Throws kOutOfRange for boxes whose centre lies outside `range`, and
  // kInvalidArgument for non-positive budgets or an invalid weather model.
  void validate(const AxisBox& range = {}) const;
};

nlohmann::json scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

struct RandomSceneOptions {
  int min_objects = 3;
  int max_objects = 8;
  double x_min = 6.0;
  double x_max = 66.0;
  double y_half = 25.0;
  double min_gap = 2.0;  // BEV clearance between circumscribed circles (m)
  int points_per_object = 300;
  int ground_points = 2000;
  WeatherModel weather;
  ConditionTags conditions;
  bool render_cameras = true;
};

/// Random non-overlapping scene; deterministic per seed.
SceneSpec random_scene_spec(std::uint64_t seed, const RandomSceneOptions& opts = {});

/// Input of the `synth` command: either explicit scenes or `num_scenes`
/// random ones drawn from `seed`.
struct SynthConfig {
  std::uint64_t seed = 0;
  int num_scenes = 10;
  std::int64_t first_frame_id = 0;
  std::int64_t frame_interval_us = 100000;
  RandomSceneOptions options;
  std::vector<SceneSpec> scenes;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Scene specs of a config with frame ids and timestamps assigned in order.
std::vector<SceneSpec> synth_scene_specs(const SynthConfig& cfg);

/// LiDAR at the reference origin; radar ahead of and below it; three
/// forward-looking cameras (rgb 640x480, thermal 160x120, event 320x240).
Rig default_rig();

/// Synthesizes one frame. Every cloud is expressed in its sensor frame; the
/// annotations are exactly the planted boxes (track ids = object index when
/// absent).
SceneSample generate_scene(const SceneSpec& spec, const Rig& rig = default_rig());

/// Dropout with probability min(1, p_drop * (1 + alpha * range)) per point,
/// then Poisson(clutter_rate) uniform clutter points inside `region` with low
/// first-channel feature and zero elsewhere. `labels` (optional, one per
/// point) are filtered alongside; clutter is labelled -1.
PointCloud apply_weather(const PointCloud& cloud, const WeatherModel& wm, std::uint64_t seed,
                         const AxisBox& region = {}, std::vector<int>* labels = nullptr);

/// One event per pixel whose log-intensity change reaches theta, stamped at
/// the midpoint of [t_a, t_b]. Single-channel rasters of equal shape.
EventStream synth_events(const Grid& frame_a, const Grid& frame_b, double theta = 0.2,
                         std::int64_t t_a_us = 0, std::int64_t t_b_us = 0);

/// Renders the grayscale intensity seen by `cam` with objects displaced by
/// their relative velocity times `dt_s`.
Grid render_intensity(const SceneSpec& spec, const CameraModel& cam, double dt_s);

/// Flip (y -> -y), then scale, then rotate about z, applied to every cloud
/// (through the rig for non-reference sensors), box and the ego pose. Images,
/// events and 2D boxes are left untouched.
SceneSample augment_sample(const SceneSample& sample, const Rig& rig, bool flip, double scale,
                           double rot);

/// The linear map augment_sample applies to reference-frame points.
Eigen::Matrix3d augmentation_matrix(bool flip, double scale, double rot);

}  // namespace voxfuse
