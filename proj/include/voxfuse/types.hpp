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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace voxfuse {

enum class SensorKind : std::uint8_t { kLidarLong = 0, kLidarShort = 1, kRadar4d = 2 };
enum class ImageModality : std::uint8_t { kRgb = 0, kThermal = 1, kEventGrid = 2 };
enum class ObjectClass : std::uint8_t { kVehicle = 0, kPedestrian = 1, kBike = 2 };
enum class Weather : std::uint8_t { kClear, kFog, kLightRain, kHeavyRain, kLightSnow, kHeavySnow };
enum class Light : std::uint8_t { kNormal, kLowLight, kOverExpose, kHdr };

inline constexpr std::array kAllObjectClasses = {ObjectClass::kVehicle, ObjectClass::kPedestrian,
                                                 ObjectClass::kBike};
inline constexpr std::array kAllWeathers = {Weather::kClear,     Weather::kFog,
                                            Weather::kLightRain, Weather::kHeavyRain,
                                            Weather::kLightSnow, Weather::kHeavySnow};
inline constexpr std::array kAllLights = {Light::kNormal, Light::kLowLight, Light::kOverExpose,
                                          Light::kHdr};

std::string_view to_string(SensorKind v);
std::string_view to_string(ImageModality v);
std::string_view to_string(ObjectClass v);
std::string_view to_string(Weather v);
std::string_view to_string(Light v);

// Parsers throw Error(kUnknownClass) for object classes and Error(kUnknownEnum)
// for everything else.
SensorKind parse_sensor_kind(std::string_view s);
ImageModality parse_image_modality(std::string_view s);
ObjectClass parse_object_class(std::string_view s);
Weather parse_weather(std::string_view s);
Light parse_light(std::string_view s);

// Maps any finite yaw into (-pi, pi].
double normalize_yaw(double yaw);

/// Rigid transform x -> R x + t. Also used for odometry poses.
struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }
  RigidTransform inverse() const { return {R.transpose(), -R.transpose() * t}; }
  // (*this) after `other`.
  RigidTransform compose(const RigidTransform& other) const {
    return {R * other.R, R * other.t + t};
  }
  bool operator==(const RigidTransform&) const = default;
};

using OdometryPose = RigidTransform;

/// Dense row-major rows x cols x channels array of doubles. Backs camera
/// images, image feature maps and BEV maps.
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, int channels, double fill = 0.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Grid& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && channels_ == o.channels_;
  }

  double& at(int r, int c, int ch) { return data_[offset(r, c) + ch]; }
  double at(int r, int c, int ch) const { return data_[offset(r, c) + ch]; }
  std::span<double> pixel(int r, int c) {
    return {data_.data() + offset(r, c), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> pixel(int r, int c) const {
    return {data_.data() + offset(r, c), static_cast<std::size_t>(channels_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t offset(int r, int c) const {
    return (static_cast<std::size_t>(r) * cols_ + c) * channels_;
  }

  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Points from one range sensor, in that sensor's frame, with a fixed number
/// of per-point feature channels (1 = intensity for LiDAR, 2 = power and
/// Doppler in m/s for radar).
struct PointCloud {
  SensorKind sensor = SensorKind::kLidarLong;
  int channels = 1;
  std::vector<Eigen::Vector3d> points;
  std::vector<double> features;  // size() * channels, row-major

  PointCloud() = default;
  PointCloud(SensorKind s, int c) : sensor(s), channels(c) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  double feature(std::size_t i, int c) const { return features[i * channels + c]; }
  std::span<const double> feature_row(std::size_t i) const {
    return {features.data() + i * channels, static_cast<std::size_t>(channels)};
  }
  void push_back(const Eigen::Vector3d& p, std::span<const double> f);
  void push_back(const Eigen::Vector3d& p, std::initializer_list<double> f) {
    push_back(p, std::span<const double>(f.begin(), f.size()));
  }

  // Throws kInvalidArgument when coordinates are non-finite or the feature
  // array does not match size() * channels.
  void validate() const;

  bool operator==(const PointCloud&) const = default;
};

/// Channel count of the default point features for a sensor.
int default_feature_channels(SensorKind s);

struct Event {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int64_t t_us = 0;
  std::int8_t polarity = 1;
  bool operator==(const Event&) const = default;
};

struct EventStream {
  int width = 0;
  int height = 0;
  std::vector<Event> events;

  void validate() const;
  bool operator==(const EventStream&) const = default;
};

struct CameraImage {
  ImageModality modality = ImageModality::kRgb;
  Grid data;

  int width() const { return data.cols(); }
  int height() const { return data.rows(); }
  void validate() const;
  bool operator==(const CameraImage&) const = default;
};

/// 3 for rgb, 1 for thermal, 5 for the event voxel grid.
int expected_channels(ImageModality m);

struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double yaw = 0.0;
  ObjectClass cls = ObjectClass::kVehicle;
  std::optional<double> score;
  std::optional<std::int64_t> track_id;

  double bev_range() const { return center.head<2>().norm(); }
  double volume() const { return l * w * h; }
  void validate() const;
  bool operator==(const Box3D&) const = default;
};

struct Box2D {
  double u_min = 0.0;
  double v_min = 0.0;
  double w = 1.0;
  double h = 1.0;
  ObjectClass cls = ObjectClass::kVehicle;

  void validate() const;
  bool operator==(const Box2D&) const = default;
};

struct ConditionTags {
  Weather weather = Weather::kClear;
  Light light = Light::kNormal;
  bool operator==(const ConditionTags&) const = default;
};

/// Ideal pinhole camera. R, t map reference-frame points into the camera
/// frame (x right, y down, z forward).
struct CameraModel {
  std::string name;
  ImageModality modality = ImageModality::kRgb;
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 0;
  int height = 0;

  RigidTransform extrinsic() const { return {R, t}; }
  bool operator==(const CameraModel&) const = default;
};

/// Sensor rig: cameras plus range-sensor extrinsics (sensor frame ->
/// reference frame). The long-range LiDAR is the reference frame.
struct Rig {
  std::vector<CameraModel> cameras;
  std::map<SensorKind, RigidTransform> range_sensors;

  const CameraModel* camera(ImageModality m) const;
  CameraModel* camera(ImageModality m);
  RigidTransform range_extrinsic(SensorKind s) const;  // identity if absent
  bool operator==(const Rig&) const = default;
};

/// One synchronized frame. Point clouds are stored in their sensor frames.
struct SceneSample {
  std::int64_t frame_id = 0;
  std::int64_t timestamp_us = 0;
  std::map<SensorKind, PointCloud> clouds;
  std::map<ImageModality, CameraImage> images;
  EventStream events;
  std::int64_t event_window_start_us = 0;
  std::vector<Box3D> boxes3d;
  std::vector<Box2D> boxes2d;
  OdometryPose pose;
  ConditionTags conditions;
  // Generator-only ground truth: owning object index per point, -1 for
  // background and clutter. Not serialized.
  std::map<SensorKind, std::vector<int>> point_labels;
};

}  // namespace voxfuse
