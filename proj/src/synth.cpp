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

#include "voxfuse/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "voxfuse/error.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/random.hpp"

namespace voxfuse {

using nlohmann::json;

void WeatherModel::validate() const {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "p_drop must lie in [0,1]");
  }
  if (!(clutter_rate >= 0.0) || !std::isfinite(clutter_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "clutter rate must be finite and >= 0");
  }
  if (!(attenuation >= 0.0) || !std::isfinite(attenuation)) {
    throw Error(ErrorCode::kInvalidArgument, "attenuation must be finite and >= 0");
  }
}

void SceneSpec::validate(const AxisBox& range) const {
  if (points_per_object <= 0 || ground_points < 0 || radar_divisor < 1) {
    throw Error(ErrorCode::kInvalidArgument, "point budgets must be positive");
  }
  if (!(radar_jitter >= 0.0) || frame_interval_us <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "radar jitter and frame interval must be positive");
  }
  weather.validate();
  for (std::size_t i = 0; i < objects.size(); ++i) {
    objects[i].box.validate();
    if (!range.contains(objects[i].box.center)) {
      throw Error(ErrorCode::kOutOfRange,
                  "object " + std::to_string(i) + " lies outside the detection range");
    }
  }
}

namespace {

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be a 3-vector");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

json scene_spec_to_json(const SceneSpec& spec) {
  json objects = json::array();
  for (const auto& o : spec.objects) {
    json b = box3d_to_json(o.box);
    b["velocity"] = vec3_json(o.velocity);
    objects.push_back(std::move(b));
  }
  return {{"objects", std::move(objects)},
          {"ego_velocity", vec3_json(spec.ego_velocity)},
          {"ground_z", spec.ground_z},
          {"points_per_object", spec.points_per_object},
          {"ground_points", spec.ground_points},
          {"radar_divisor", spec.radar_divisor},
          {"radar_jitter", spec.radar_jitter},
          {"weather",
           {{"p_drop", spec.weather.p_drop},
            {"clutter_rate", spec.weather.clutter_rate},
            {"attenuation", spec.weather.attenuation}}},
          {"conditions",
           {{"weather", to_string(spec.conditions.weather)},
            {"light", to_string(spec.conditions.light)}}},
          {"seed", spec.seed},
          {"frame_id", spec.frame_id},
          {"timestamp_us", spec.timestamp_us},
          {"frame_interval_us", spec.frame_interval_us},
          {"render_cameras", spec.render_cameras}};
}

SceneSpec scene_spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "scene spec must be an object");
  SceneSpec s;
  try {
    if (j.contains("objects")) {
      for (const auto& o : j.at("objects")) {
        PlantedObject p;
        p.box = box3d_from_json(o);
        if (o.contains("velocity")) p.velocity = vec3_from(o.at("velocity"), "velocity");
        s.objects.push_back(p);
      }
    }
    if (j.contains("ego_velocity")) s.ego_velocity = vec3_from(j.at("ego_velocity"), "ego_velocity");
    s.ground_z = field_or(j, "ground_z", s.ground_z);
    s.points_per_object = field_or(j, "points_per_object", s.points_per_object);
    s.ground_points = field_or(j, "ground_points", s.ground_points);
    s.radar_divisor = field_or(j, "radar_divisor", s.radar_divisor);
    s.radar_jitter = field_or(j, "radar_jitter", s.radar_jitter);
    if (j.contains("weather")) {
      const json& w = j.at("weather");
      s.weather.p_drop = field_or(w, "p_drop", 0.0);
      s.weather.clutter_rate = field_or(w, "clutter_rate", 0.0);
      s.weather.attenuation = field_or(w, "attenuation", 0.0);
    }
    if (j.contains("conditions")) {
      const json& c = j.at("conditions");
      s.conditions.weather = parse_weather(field_or<std::string>(c, "weather", "clear"));
      s.conditions.light = parse_light(field_or<std::string>(c, "light", "normal"));
    }
    s.seed = field_or<std::uint64_t>(j, "seed", 0);
    s.frame_id = field_or<std::int64_t>(j, "frame_id", 0);
    s.timestamp_us = field_or<std::int64_t>(j, "timestamp_us", 0);
    s.frame_interval_us = field_or<std::int64_t>(j, "frame_interval_us", s.frame_interval_us);
    s.render_cameras = field_or(j, "render_cameras", true);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

Eigen::Matrix3d rot_z(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

bool bev_inside(const Box3D& b, const Eigen::Vector2d& p) {
  const Eigen::Vector2d d = p - b.center.head<2>();
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  return std::abs(c * d.x() + s * d.y()) <= b.l / 2 && std::abs(-s * d.x() + c * d.y()) <= b.w / 2;
}

struct ClassTemplate {
  ObjectClass cls;
  double l_lo, l_hi, w_lo, w_hi, h_lo, h_hi, speed_max;
};

constexpr std::array<ClassTemplate, 3> kTemplates = {{
    {ObjectClass::kVehicle, 3.8, 4.8, 1.7, 2.0, 1.4, 1.7, 10.0},
    {ObjectClass::kPedestrian, 0.5, 0.8, 0.5, 0.7, 1.6, 1.85, 1.5},
    {ObjectClass::kBike, 1.6, 1.9, 0.5, 0.7, 1.2, 1.6, 5.0},
}};

}  // namespace

SceneSpec random_scene_spec(std::uint64_t seed, const RandomSceneOptions& opts) {
  std::mt19937_64 rng(derive_seed(seed, 0x5ce11e));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  SceneSpec spec;
  spec.seed = seed;
  spec.points_per_object = opts.points_per_object;
  spec.ground_points = opts.ground_points;
  spec.weather = opts.weather;
  spec.conditions = opts.conditions;
  spec.render_cameras = opts.render_cameras;
  spec.ego_velocity = Eigen::Vector3d(uni(0.0, 8.0), 0.0, 0.0);

  std::uniform_int_distribution<int> count(opts.min_objects, opts.max_objects);
  const int n = count(rng);
  std::discrete_distribution<int> pick_class({0.5, 0.25, 0.25});
  for (int attempt = 0; attempt < 200 * std::max(n, 1) && static_cast<int>(spec.objects.size()) < n;
       ++attempt) {
    const ClassTemplate& t = kTemplates[static_cast<std::size_t>(pick_class(rng))];
    PlantedObject o;
    o.box.cls = t.cls;
    o.box.l = uni(t.l_lo, t.l_hi);
    o.box.w = uni(t.w_lo, t.w_hi);
    o.box.h = uni(t.h_lo, t.h_hi);
    o.box.yaw = normalize_yaw(uni(-M_PI, M_PI));
    o.box.center = Eigen::Vector3d(uni(opts.x_min, opts.x_max), uni(-opts.y_half, opts.y_half),
                                   spec.ground_z + o.box.h / 2);
    const double speed = u01(rng) < 0.3 ? 0.0 : uni(0.0, t.speed_max);
    o.velocity = speed * Eigen::Vector3d(std::cos(o.box.yaw), std::sin(o.box.yaw), 0.0);
    const double radius = std::hypot(o.box.l, o.box.w) / 2;
    bool clear = true;
    for (const auto& other : spec.objects) {
      const double r2 = std::hypot(other.box.l, other.box.w) / 2;
      if ((other.box.center.head<2>() - o.box.center.head<2>()).norm() < radius + r2 + opts.min_gap) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    o.box.track_id = static_cast<std::int64_t>(spec.objects.size());
    spec.objects.push_back(o);
  }
  return spec;
}

void SynthConfig::validate() const {
  if (scenes.empty() && num_scenes < 0) {
    throw Error(ErrorCode::kInvalidArgument, "num_scenes must be >= 0");
  }
  if (frame_interval_us <= 0) throw Error(ErrorCode::kInvalidArgument, "frame interval must be > 0");
  if (options.min_objects < 0 || options.max_objects < options.min_objects) {
    throw Error(ErrorCode::kInvalidArgument, "object count range is empty");
  }
  if (!(options.x_min < options.x_max) || !(options.y_half > 0.0) || options.min_gap < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid placement region");
  }
  if (options.points_per_object <= 0 || options.ground_points < 0) {
    throw Error(ErrorCode::kInvalidArgument, "point budgets must be positive");
  }
  options.weather.validate();
  for (const auto& s : scenes) s.validate();
}

json synth_config_to_json(const SynthConfig& cfg) {
  const RandomSceneOptions& o = cfg.options;
  json scenes = json::array();
  for (const auto& s : cfg.scenes) scenes.push_back(scene_spec_to_json(s));
  return {{"seed", cfg.seed},
          {"num_scenes", cfg.num_scenes},
          {"first_frame_id", cfg.first_frame_id},
          {"frame_interval_us", cfg.frame_interval_us},
          {"options",
           {{"min_objects", o.min_objects},
            {"max_objects", o.max_objects},
            {"x_min", o.x_min},
            {"x_max", o.x_max},
            {"y_half", o.y_half},
            {"min_gap", o.min_gap},
            {"points_per_object", o.points_per_object},
            {"ground_points", o.ground_points},
            {"weather",
             {{"p_drop", o.weather.p_drop},
              {"clutter_rate", o.weather.clutter_rate},
              {"attenuation", o.weather.attenuation}}},
            {"conditions",
             {{"weather", to_string(o.conditions.weather)}, {"light", to_string(o.conditions.light)}}},
            {"render_cameras", o.render_cameras}}},
          {"scenes", std::move(scenes)}};
}

SynthConfig synth_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "synth config must be an object");
  SynthConfig cfg;
  try {
    cfg.seed = field_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.num_scenes = field_or<int>(j, "num_scenes", cfg.num_scenes);
    cfg.first_frame_id = field_or<std::int64_t>(j, "first_frame_id", cfg.first_frame_id);
    cfg.frame_interval_us = field_or<std::int64_t>(j, "frame_interval_us", cfg.frame_interval_us);
    if (j.contains("options")) {
      const json& o = j.at("options");
      RandomSceneOptions& r = cfg.options;
      r.min_objects = field_or<int>(o, "min_objects", r.min_objects);
      r.max_objects = field_or<int>(o, "max_objects", r.max_objects);
      r.x_min = field_or<double>(o, "x_min", r.x_min);
      r.x_max = field_or<double>(o, "x_max", r.x_max);
      r.y_half = field_or<double>(o, "y_half", r.y_half);
      r.min_gap = field_or<double>(o, "min_gap", r.min_gap);
      r.points_per_object = field_or<int>(o, "points_per_object", r.points_per_object);
      r.ground_points = field_or<int>(o, "ground_points", r.ground_points);
      r.render_cameras = field_or<bool>(o, "render_cameras", r.render_cameras);
      if (o.contains("weather")) {
        const json& w = o.at("weather");
        r.weather.p_drop = field_or<double>(w, "p_drop", 0.0);
        r.weather.clutter_rate = field_or<double>(w, "clutter_rate", 0.0);
        r.weather.attenuation = field_or<double>(w, "attenuation", 0.0);
      }
      if (o.contains("conditions")) {
        const json& c = o.at("conditions");
        r.conditions.weather = parse_weather(field_or<std::string>(c, "weather", "clear"));
        r.conditions.light = parse_light(field_or<std::string>(c, "light", "normal"));
      }
    }
    if (j.contains("scenes")) {
      for (const auto& s : j.at("scenes")) cfg.scenes.push_back(scene_spec_from_json(s));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<SceneSpec> synth_scene_specs(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SceneSpec> specs = cfg.scenes;
  if (specs.empty()) {
    for (int i = 0; i < cfg.num_scenes; ++i) {
      specs.push_back(random_scene_spec(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)),
                                        cfg.options));
    }
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].frame_id = cfg.first_frame_id + static_cast<std::int64_t>(i);
    specs[i].frame_interval_us = cfg.frame_interval_us;
    specs[i].timestamp_us = specs[i].frame_id * cfg.frame_interval_us;
  }
  return specs;
}

Rig default_rig() {
  Rig rig;
  rig.range_sensors[SensorKind::kLidarLong] = RigidTransform{};
  rig.range_sensors[SensorKind::kRadar4d] =
      RigidTransform{Eigen::Matrix3d::Identity(), Eigen::Vector3d(1.0, 0.0, -1.0)};
  // Camera axes: x right, y down, z forward.
  Eigen::Matrix3d R;
  R << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  struct CamDef {
    const char* name;
    ImageModality m;
    int w;
    int h;
    Eigen::Vector3d position;
  };
  const std::array<CamDef, 3> defs = {{
      {"rgb", ImageModality::kRgb, 640, 480, {0.2, 0.0, 0.1}},
      {"thermal", ImageModality::kThermal, 160, 120, {0.2, 0.1, 0.1}},
      {"event", ImageModality::kEventGrid, 320, 240, {0.2, -0.1, 0.1}},
  }};
  for (const auto& d : defs) {
    CameraModel cam;
    cam.name = d.name;
    cam.modality = d.m;
    cam.width = d.w;
    cam.height = d.h;
    const double f = d.w / 2.0;  // 90 degree horizontal field of view
    cam.K << f, 0, d.w / 2.0, 0, f, d.h / 2.0, 0, 0, 1;
    cam.R = R;
    cam.t = -R * d.position;
    rig.cameras.push_back(cam);
  }
  return rig;
}

namespace {

// Uniform samples on the faces of `box` that face `sensor` (the bottom face
// is never used).
void sample_visible_faces(const Box3D& box, const Eigen::Vector3d& sensor, int n,
                          std::mt19937_64& rng, std::vector<Eigen::Vector3d>& out) {
  const Eigen::Matrix3d R = rot_z(box.yaw);
  const Eigen::Vector3d half(box.l / 2, box.w / 2, box.h / 2);
  struct Face {
    int axis;
    double sign;
    double area;
  };
  std::vector<Face> faces;
  for (int a = 0; a < 3; ++a) {
    for (double sign : {-1.0, 1.0}) {
      if (a == 2 && sign < 0) continue;
      Eigen::Vector3d normal = Eigen::Vector3d::Zero();
      normal(a) = sign;
      Eigen::Vector3d fc = Eigen::Vector3d::Zero();
      fc(a) = sign * half(a);
      const Eigen::Vector3d nw = R * normal;
      if (nw.dot(box.center + R * fc - sensor) >= 0.0) continue;
      const int b = (a + 1) % 3;
      const int c = (a + 2) % 3;
      faces.push_back({a, sign, 4.0 * half(b) * half(c)});
    }
  }
  if (faces.empty()) faces.push_back({2, 1.0, 4.0 * half(0) * half(1)});
  std::vector<double> areas;
  for (const auto& f : faces) areas.push_back(f.area);
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const Face& f = faces[pick(rng)];
    Eigen::Vector3d local;
    for (int a = 0; a < 3; ++a) local(a) = a == f.axis ? f.sign * half(a) : u(rng) * half(a);
    out.push_back(box.center + R * local);
  }
}

PointCloud to_sensor_frame(const std::vector<Eigen::Vector3d>& ref_points,
                           const std::vector<double>& features, SensorKind sensor, int channels,
                           const RigidTransform& extrinsic) {
  PointCloud cloud(sensor, channels);
  const RigidTransform inv = extrinsic.inverse();
  cloud.points.reserve(ref_points.size());
  for (const auto& p : ref_points) cloud.points.push_back(inv.apply(p));
  cloud.features = features;
  return cloud;
}

Eigen::Vector3d object_offset(const PlantedObject& o, const Eigen::Vector3d& ego, double dt) {
  return (o.velocity - ego) * dt;
}

// Renders per-pixel values: background rows (sky above the horizon, ground
// below), then objects as filled projected rectangles with a depth test.
Grid render(const SceneSpec& spec, const CameraModel& cam, double dt,
            const std::vector<double>& sky, const std::vector<double>& ground,
            const std::function<std::vector<double>(const PlantedObject&, std::size_t, double)>&
                object_value) {
  const int C = static_cast<int>(sky.size());
  Grid img(cam.height, cam.width, C);
  const double horizon = cam.K(1, 2);
  for (int r = 0; r < cam.height; ++r) {
    const auto& v = r < horizon ? sky : ground;
    for (int c = 0; c < cam.width; ++c) {
      auto px = img.pixel(r, c);
      std::copy(v.begin(), v.end(), px.begin());
    }
  }
  std::vector<double> zbuf(static_cast<std::size_t>(cam.width) * cam.height,
                           std::numeric_limits<double>::infinity());
  const ProjectionMatrix M = projection_matrix(cam);
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const PlantedObject& o = spec.objects[i];
    Box3D b = o.box;
    b.center += object_offset(o, spec.ego_velocity, dt);
    const Eigen::Matrix3d R = rot_z(b.yaw);
    double u_lo = std::numeric_limits<double>::infinity();
    double u_hi = -u_lo;
    double v_lo = u_lo;
    double v_hi = -u_lo;
    bool ok = true;
    for (int k = 0; k < 8; ++k) {
      const Eigen::Vector3d local((k & 1 ? 0.5 : -0.5) * b.l, (k & 2 ? 0.5 : -0.5) * b.w,
                                  (k & 4 ? 0.5 : -0.5) * b.h);
      const auto p = try_project_point(M, b.center + R * local);
      if (!p || p->depth < 0.1) {
        ok = false;
        break;
      }
      u_lo = std::min(u_lo, p->u);
      u_hi = std::max(u_hi, p->u);
      v_lo = std::min(v_lo, p->v);
      v_hi = std::max(v_hi, p->v);
    }
    if (!ok) continue;
    const auto centre = try_project_point(M, b.center);
    if (!centre) continue;
    const double depth = centre->depth;
    const int c0 = std::max(0, static_cast<int>(std::floor(u_lo)));
    const int c1 = std::min(cam.width - 1, static_cast<int>(std::floor(u_hi)));
    const int r0 = std::max(0, static_cast<int>(std::floor(v_lo)));
    const int r1 = std::min(cam.height - 1, static_cast<int>(std::floor(v_hi)));
    if (c0 > c1 || r0 > r1) continue;
    const std::vector<double> value = object_value(o, i, depth);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        double& z = zbuf[static_cast<std::size_t>(r) * cam.width + c];
        if (depth >= z) continue;
        z = depth;
        auto px = img.pixel(r, c);
        std::copy(value.begin(), value.end(), px.begin());
      }
    }
  }
  return img;
}

std::vector<double> class_colour(ObjectClass c) {
  switch (c) {
    case ObjectClass::kVehicle: return {0.75, 0.15, 0.15};
    case ObjectClass::kPedestrian: return {0.2, 0.7, 0.25};
    case ObjectClass::kBike: return {0.2, 0.3, 0.8};
  }
  return {0.5, 0.5, 0.5};
}

double object_shade(std::size_t index, double depth) {
  return (0.8 + 0.02 * static_cast<double>((index * 37) % 10)) / (1.0 + 0.01 * depth);
}

void apply_light(Grid& img, Light light) {
  if (light == Light::kNormal) return;
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const bool bright = light == Light::kOverExpose || (light == Light::kHdr && c >= img.cols() / 2);
      for (double& v : img.pixel(r, c)) v = bright ? std::min(1.0, 3.0 * v + 0.2) : 0.15 * v;
    }
  }
}

Grid render_rgb(const SceneSpec& spec, const CameraModel& cam, double dt) {
  Grid img = render(spec, cam, dt, {0.55, 0.65, 0.8}, {0.35, 0.35, 0.35},
                    [](const PlantedObject& o, std::size_t i, double depth) {
                      auto v = class_colour(o.box.cls);
                      for (double& x : v) x *= object_shade(i, depth);
                      return v;
                    });
  apply_light(img, spec.conditions.light);
  return img;
}

Grid render_thermal(const SceneSpec& spec, const CameraModel& cam) {
  return render(spec, cam, 0.0, {0.1}, {0.25},
                [](const PlantedObject& o, std::size_t, double) -> std::vector<double> {
                  switch (o.box.cls) {
                    case ObjectClass::kVehicle: return {0.7};
                    case ObjectClass::kPedestrian: return {0.95};
                    case ObjectClass::kBike: return {0.8};
                  }
                  return {0.5};
                });
}

std::vector<Box2D> project_boxes(const SceneSpec& spec, const CameraModel& cam) {
  std::vector<Box2D> out;
  const ProjectionMatrix M = projection_matrix(cam);
  for (const auto& o : spec.objects) {
    const Eigen::Matrix3d R = rot_z(o.box.yaw);
    double u_lo = std::numeric_limits<double>::infinity();
    double u_hi = -u_lo;
    double v_lo = u_lo;
    double v_hi = -u_lo;
    bool ok = true;
    for (int k = 0; k < 8 && ok; ++k) {
      const Eigen::Vector3d local((k & 1 ? 0.5 : -0.5) * o.box.l, (k & 2 ? 0.5 : -0.5) * o.box.w,
                                  (k & 4 ? 0.5 : -0.5) * o.box.h);
      const auto p = try_project_point(M, o.box.center + R * local);
      if (!p || p->depth < 0.1) {
        ok = false;
        break;
      }
      u_lo = std::min(u_lo, p->u);
      u_hi = std::max(u_hi, p->u);
      v_lo = std::min(v_lo, p->v);
      v_hi = std::max(v_hi, p->v);
    }
    if (!ok) continue;
    u_lo = std::max(u_lo, 0.0);
    v_lo = std::max(v_lo, 0.0);
    u_hi = std::min(u_hi, static_cast<double>(cam.width));
    v_hi = std::min(v_hi, static_cast<double>(cam.height));
    if (u_hi - u_lo <= 0.0 || v_hi - v_lo <= 0.0) continue;
    out.push_back({u_lo, v_lo, u_hi - u_lo, v_hi - v_lo, o.box.cls});
  }
  return out;
}

}  // namespace

Grid render_intensity(const SceneSpec& spec, const CameraModel& cam, double dt_s) {
  const Grid rgb = render_rgb(spec, cam, dt_s);
  Grid gray(rgb.rows(), rgb.cols(), 1);
  for (int r = 0; r < rgb.rows(); ++r) {
    for (int c = 0; c < rgb.cols(); ++c) {
      const auto px = rgb.pixel(r, c);
      gray.at(r, c, 0) = (px[0] + px[1] + px[2]) / 3.0;
    }
  }
  return gray;
}

PointCloud apply_weather(const PointCloud& cloud, const WeatherModel& wm, std::uint64_t seed,
                         const AxisBox& region, std::vector<int>* labels) {
  wm.validate();
  if (labels != nullptr && labels->size() != cloud.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one label per point required");
  }
  std::mt19937_64 drop_rng(derive_seed(seed, 11));
  std::mt19937_64 clutter_rng(derive_seed(seed, 12));
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  PointCloud out(cloud.sensor, cloud.channels);
  std::vector<int> kept_labels;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double p = std::min(1.0, wm.p_drop * (1.0 + wm.attenuation * cloud.points[i].norm()));
    const double u = u01(drop_rng);
    if (u < p) continue;
    out.push_back(cloud.points[i], cloud.feature_row(i));
    if (labels != nullptr) kept_labels.push_back((*labels)[i]);
  }
  if (wm.clutter_rate > 0.0) {
    std::poisson_distribution<int> count(wm.clutter_rate);
    const int n = count(clutter_rng);
    std::vector<double> f(static_cast<std::size_t>(cloud.channels), 0.0);
    for (int k = 0; k < n; ++k) {
      Eigen::Vector3d p;
      for (int a = 0; a < 3; ++a) {
        p(a) = region.min(a) + (region.max(a) - region.min(a)) * u01(clutter_rng);
      }
      f[0] = 0.05 * u01(clutter_rng);
      out.push_back(p, f);
      if (labels != nullptr) kept_labels.push_back(-1);
    }
  }
  if (labels != nullptr) *labels = std::move(kept_labels);
  return out;
}

EventStream synth_events(const Grid& frame_a, const Grid& frame_b, double theta,
                         std::int64_t t_a_us, std::int64_t t_b_us) {
  if (!frame_a.same_shape(frame_b) || frame_a.channels() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "event frames must be single-channel and equal in shape");
  }
  if (!(theta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "event threshold must be > 0");
  EventStream s;
  s.width = frame_a.cols();
  s.height = frame_a.rows();
  const std::int64_t t = t_a_us + (t_b_us - t_a_us) / 2;
  for (int r = 0; r < frame_a.rows(); ++r) {
    for (int c = 0; c < frame_a.cols(); ++c) {
      const double d = std::log(frame_b.at(r, c, 0) + 1e-6) - std::log(frame_a.at(r, c, 0) + 1e-6);
      if (std::abs(d) < theta) continue;
      s.events.push_back({c, r, t, static_cast<std::int8_t>(d > 0 ? 1 : -1)});
    }
  }
  return s;
}

SceneSample generate_scene(const SceneSpec& spec, const Rig& rig) {
  const AxisBox range;
  spec.validate(range);
  SceneSample s;
  s.frame_id = spec.frame_id;
  s.timestamp_us = spec.timestamp_us;
  s.conditions = spec.conditions;
  s.pose.t = spec.ego_velocity * (static_cast<double>(spec.timestamp_us) * 1e-6);
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    Box3D b = spec.objects[i].box;
    if (!b.track_id) b.track_id = static_cast<std::int64_t>(i);
    b.score.reset();
    s.boxes3d.push_back(b);
  }
  auto object_seed = [&](std::size_t i, std::uint64_t stream) {
    return derive_seed(derive_seed(spec.seed, stream),
                       static_cast<std::uint64_t>(*s.boxes3d[i].track_id));
  };

  // LiDAR.
  {
    const RigidTransform ext = rig.range_extrinsic(SensorKind::kLidarLong);
    std::vector<Eigen::Vector3d> pts;
    std::vector<double> feats;
    std::vector<int> labels;
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      std::mt19937_64 rng(object_seed(i, 100));
      const std::size_t before = pts.size();
      sample_visible_faces(spec.objects[i].box, ext.t, spec.points_per_object, rng, pts);
      std::uniform_real_distribution<double> intensity(0.4, 0.9);
      for (std::size_t k = before; k < pts.size(); ++k) {
        feats.push_back(intensity(rng));
        labels.push_back(static_cast<int>(i));
      }
    }
    std::mt19937_64 grng(derive_seed(spec.seed, 101));
    std::uniform_real_distribution<double> ux(range.min.x(), range.max.x());
    std::uniform_real_distribution<double> uy(-40.0, 40.0);
    for (int k = 0; k < spec.ground_points; ++k) {
      const Eigen::Vector2d g(ux(grng), uy(grng));
      bool covered = false;
      for (const auto& o : spec.objects) covered = covered || bev_inside(o.box, g);
      if (covered) continue;
      pts.emplace_back(g.x(), g.y(), spec.ground_z);
      feats.push_back(0.1);
      labels.push_back(-1);
    }
    PointCloud cloud = to_sensor_frame(pts, feats, SensorKind::kLidarLong, 1, ext);
    cloud = apply_weather(cloud, spec.weather, derive_seed(spec.seed, 102), range, &labels);
    s.point_labels[SensorKind::kLidarLong] = std::move(labels);
    s.clouds[SensorKind::kLidarLong] = std::move(cloud);
  }

  // 4D radar: sparser, jittered, with power and Doppler.
  if (rig.range_sensors.count(SensorKind::kRadar4d) != 0) {
    const RigidTransform ext = rig.range_extrinsic(SensorKind::kRadar4d);
    const RigidTransform inv = ext.inverse();
    const int budget = std::max(1, spec.points_per_object / spec.radar_divisor);
    PointCloud cloud(SensorKind::kRadar4d, 2);
    std::vector<int> labels;
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      std::mt19937_64 rng(object_seed(i, 200));
      std::vector<Eigen::Vector3d> pts;
      sample_visible_faces(spec.objects[i].box, ext.t, budget, rng, pts);
      std::normal_distribution<double> jitter(0.0, spec.radar_jitter);
      std::uniform_real_distribution<double> gain(0.8, 1.2);
      const Eigen::Vector3d v_rel = inv.R * (spec.objects[i].velocity - spec.ego_velocity);
      for (const auto& p : pts) {
        Eigen::Vector3d q = p;
        for (int a = 0; a < 3; ++a) q(a) += jitter(rng);
        const Eigen::Vector3d ps = inv.apply(q);
        const double r = ps.norm();
        const double power = 20.0 * std::exp(-r / 50.0) * gain(rng);
        const double doppler = r > 0.0 ? v_rel.dot(ps / r) : 0.0;
        cloud.push_back(ps, {power, doppler});
        labels.push_back(static_cast<int>(i));
      }
    }
    cloud = apply_weather(cloud, spec.weather, derive_seed(spec.seed, 202), range, &labels);
    s.point_labels[SensorKind::kRadar4d] = std::move(labels);
    s.clouds[SensorKind::kRadar4d] = std::move(cloud);
  }

  if (spec.render_cameras) {
    const double interval_s = static_cast<double>(spec.frame_interval_us) * 1e-6;
    for (const auto& cam : rig.cameras) {
      CameraImage img;
      img.modality = cam.modality;
      switch (cam.modality) {
        case ImageModality::kRgb:
          img.data = render_rgb(spec, cam, 0.0);
          s.boxes2d = project_boxes(spec, cam);
          break;
        case ImageModality::kThermal:
          img.data = render_thermal(spec, cam);
          break;
        case ImageModality::kEventGrid: {
          // Events over the interval ending at the frame time, from three
          // renders.
          const std::int64_t t0 = spec.timestamp_us - spec.frame_interval_us;
          std::array<Grid, 3> frames;
          for (int k = 0; k < 3; ++k) {
            frames[static_cast<std::size_t>(k)] =
                render_intensity(spec, cam, (k - 2) * interval_s / 2);
          }
          EventStream stream;
          stream.width = cam.width;
          stream.height = cam.height;
          for (int k = 0; k < 2; ++k) {
            const std::int64_t ta = t0 + k * spec.frame_interval_us / 2;
            const std::int64_t tb = t0 + (k + 1) * spec.frame_interval_us / 2;
            auto part = synth_events(frames[static_cast<std::size_t>(k)],
                                     frames[static_cast<std::size_t>(k + 1)], 0.2, ta, tb);
            stream.events.insert(stream.events.end(), part.events.begin(), part.events.end());
          }
          s.events = std::move(stream);
          s.event_window_start_us = t0;
          img = events_to_voxel_grid(s.events, t0, spec.timestamp_us, kEventBins);
          break;
        }
      }
      s.images[cam.modality] = std::move(img);
    }
  }
  return s;
}

Eigen::Matrix3d augmentation_matrix(bool flip, double scale, double rot) {
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  if (flip) F(1, 1) = -1.0;
  return rot_z(rot) * (scale * F);
}

SceneSample augment_sample(const SceneSample& sample, const Rig& rig, bool flip, double scale,
                           double rot) {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(rot)) {
    throw Error(ErrorCode::kInvalidArgument, "augmentation scale must be positive and finite");
  }
  const Eigen::Matrix3d A = augmentation_matrix(flip, scale, rot);
  SceneSample out = sample;
  for (auto& [sensor, cloud] : out.clouds) {
    const RigidTransform ext = rig.range_extrinsic(sensor);
    const RigidTransform inv = ext.inverse();
    for (auto& p : cloud.points) p = inv.apply(A * ext.apply(p));
  }
  for (auto& b : out.boxes3d) {
    b.center = A * b.center;
    b.l *= scale;
    b.w *= scale;
    b.h *= scale;
    b.yaw = normalize_yaw((flip ? -b.yaw : b.yaw) + rot);
  }
  out.pose.R = A * sample.pose.R * A.inverse();
  out.pose.t = A * sample.pose.t;
  return out;
}

}  // namespace voxfuse
