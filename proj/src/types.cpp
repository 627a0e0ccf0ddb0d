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

#include "voxfuse/types.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "voxfuse/error.hpp"

namespace voxfuse {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kOutOfRange: return "out of range";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kMissingField: return "missing field";
    case ErrorCode::kUnknownClass: return "unknown class";
    case ErrorCode::kUnknownEnum: return "unknown enum value";
    case ErrorCode::kNotOrthonormal: return "not orthonormal";
    case ErrorCode::kSingular: return "singular matrix";
    case ErrorCode::kBehindCamera: return "behind camera";
    case ErrorCode::kTooFewPoints: return "too few points";
    case ErrorCode::kDegenerate: return "degenerate configuration";
  }
  return "unknown error";
}

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table,
                ErrorCode code) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw Error(code, "'" + std::string(s) + "'");
}

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum v, const std::array<std::pair<Enum, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<SensorKind, std::string_view>, 3> kSensorNames = {{
    {SensorKind::kLidarLong, "lidar_long"},
    {SensorKind::kLidarShort, "lidar_short"},
    {SensorKind::kRadar4d, "radar4d"},
}};
constexpr std::array<std::pair<ImageModality, std::string_view>, 3> kModalityNames = {{
    {ImageModality::kRgb, "rgb"},
    {ImageModality::kThermal, "thermal"},
    {ImageModality::kEventGrid, "event_grid"},
}};
constexpr std::array<std::pair<ObjectClass, std::string_view>, 3> kClassNames = {{
    {ObjectClass::kVehicle, "vehicle"},
    {ObjectClass::kPedestrian, "pedestrian"},
    {ObjectClass::kBike, "bike"},
}};
constexpr std::array<std::pair<Weather, std::string_view>, 6> kWeatherNames = {{
    {Weather::kClear, "clear"},
    {Weather::kFog, "fog"},
    {Weather::kLightRain, "light_rain"},
    {Weather::kHeavyRain, "heavy_rain"},
    {Weather::kLightSnow, "light_snow"},
    {Weather::kHeavySnow, "heavy_snow"},
}};
constexpr std::array<std::pair<Light, std::string_view>, 4> kLightNames = {{
    {Light::kNormal, "normal"},
    {Light::kLowLight, "low_light"},
    {Light::kOverExpose, "over_expose"},
    {Light::kHdr, "hdr"},
}};

}  // namespace

std::string_view to_string(SensorKind v) { return enum_name(v, kSensorNames); }
std::string_view to_string(ImageModality v) { return enum_name(v, kModalityNames); }
std::string_view to_string(ObjectClass v) { return enum_name(v, kClassNames); }
std::string_view to_string(Weather v) { return enum_name(v, kWeatherNames); }
std::string_view to_string(Light v) { return enum_name(v, kLightNames); }

SensorKind parse_sensor_kind(std::string_view s) {
  return parse_enum(s, kSensorNames, ErrorCode::kUnknownEnum);
}
ImageModality parse_image_modality(std::string_view s) {
  return parse_enum(s, kModalityNames, ErrorCode::kUnknownEnum);
}
ObjectClass parse_object_class(std::string_view s) {
  return parse_enum(s, kClassNames, ErrorCode::kUnknownClass);
}
Weather parse_weather(std::string_view s) {
  return parse_enum(s, kWeatherNames, ErrorCode::kUnknownEnum);
}
Light parse_light(std::string_view s) { return parse_enum(s, kLightNames, ErrorCode::kUnknownEnum); }

double normalize_yaw(double yaw) {
  constexpr double kPi = std::numbers::pi;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::remainder(yaw, kTwoPi);  // [-pi, pi]
  if (r <= -kPi) r += kTwoPi;
  return r;
}

Grid::Grid(int rows, int cols, int channels, double fill)
    : rows_(rows), cols_(cols), channels_(channels) {
  if (rows < 0 || cols < 0 || channels < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative grid dimension");
  }
  data_.assign(static_cast<std::size_t>(rows) * cols * channels, fill);
}

void PointCloud::push_back(const Eigen::Vector3d& p, std::span<const double> f) {
  if (static_cast<int>(f.size()) != channels) {
    throw Error(ErrorCode::kShapeMismatch, "feature width differs from cloud channel count");
  }
  points.push_back(p);
  features.insert(features.end(), f.begin(), f.end());
}

void PointCloud::validate() const {
  if (channels < 1) throw Error(ErrorCode::kInvalidArgument, "point cloud needs >= 1 channel");
  if (features.size() != points.size() * static_cast<std::size_t>(channels)) {
    throw Error(ErrorCode::kShapeMismatch, "features length != points * channels");
  }
  for (const auto& p : points) {
    if (!p.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite point coordinate");
  }
}

int default_feature_channels(SensorKind s) { return s == SensorKind::kRadar4d ? 2 : 1; }

void EventStream::validate() const {
  std::int64_t last = std::numeric_limits<std::int64_t>::min();
  for (const Event& e : events) {
    if (e.t_us < last) throw Error(ErrorCode::kInvalidArgument, "events not sorted by time");
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height) {
      throw Error(ErrorCode::kOutOfRange, "event outside sensor resolution");
    }
    if (e.polarity != 1 && e.polarity != -1) {
      throw Error(ErrorCode::kInvalidArgument, "polarity must be +1 or -1");
    }
    last = e.t_us;
  }
}

int expected_channels(ImageModality m) {
  switch (m) {
    case ImageModality::kRgb: return 3;
    case ImageModality::kThermal: return 1;
    case ImageModality::kEventGrid: return 5;
  }
  return 0;
}

void CameraImage::validate() const {
  if (data.channels() != expected_channels(modality)) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(to_string(modality)) + " image has wrong channel count");
  }
  for (double v : data.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite pixel");
  }
}

void Box3D::validate() const {
  if (!(l > 0 && w > 0 && h > 0)) throw Error(ErrorCode::kInvalidArgument, "box extents must be > 0");
  if (!center.allFinite() || !std::isfinite(yaw)) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite box");
  }
  if (score && (*score < 0.0 || *score > 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "score outside [0, 1]");
  }
}

void Box2D::validate() const {
  if (!(w > 0 && h > 0)) throw Error(ErrorCode::kInvalidArgument, "2d box extents must be > 0");
}

const CameraModel* Rig::camera(ImageModality m) const {
  for (const auto& c : cameras) {
    if (c.modality == m) return &c;
  }
  return nullptr;
}

CameraModel* Rig::camera(ImageModality m) {
  for (auto& c : cameras) {
    if (c.modality == m) return &c;
  }
  return nullptr;
}

RigidTransform Rig::range_extrinsic(SensorKind s) const {
  auto it = range_sensors.find(s);
  return it == range_sensors.end() ? RigidTransform{} : it->second;
}

}  // namespace voxfuse
