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

#include "voxfuse/sensorio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "voxfuse/error.hpp"
#include "voxfuse/geometry.hpp"

namespace voxfuse {

namespace {

using nlohmann::json;

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    bytes_.insert(bytes_.end(), raw.begin(), raw.end());
  }
  void put_magic(const char (&magic)[4]) { bytes_.insert(bytes_.end(), magic, magic + 4); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }
  void expect_magic(const char (&magic)[4]) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), magic, 4) != 0) {
      throw Error(ErrorCode::kBadMagic, "expected '" + std::string(magic, 4) + "'");
    }
    pos_ = 4;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::kTruncated, "payload ends early");
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void check_version(std::uint32_t version, std::uint32_t expected) {
  if (version != expected) {
    throw Error(ErrorCode::kVersionMismatch, "file version " + std::to_string(version) +
                                                 ", expected " + std::to_string(expected));
  }
}

constexpr char kImageMagic[4] = {'D', 'S', 'I', 'M'};
constexpr char kEventMagic[4] = {'D', 'S', 'E', 'V'};
constexpr std::uint32_t kImageVersion = 1;
constexpr std::uint32_t kEventVersion = 1;

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::kMissingField, std::string("'") + key + "'");
  }
  return j.at(key);
}

double require_number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) throw Error(ErrorCode::kInvalidArgument, std::string(key) + " not a number");
  return v.get<double>();
}

template <int N>
Eigen::Matrix<double, N, 1> read_vector(const json& j, const char* key) {
  const json& arr = require(j, key);
  if (!arr.is_array() || arr.size() != N) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(key) + " must hold " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = arr.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

Eigen::Matrix3d read_matrix3(const json& j, const char* key) {
  const auto v = read_vector<9>(j, key);
  Eigen::Matrix3d M;
  M << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  return M;
}

json matrix3_to_json(const Eigen::Matrix3d& M) {
  json arr = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) arr.push_back(M(r, c));
  return arr;
}

json vector3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json pose_to_json(const RigidTransform& p) {
  return {{"R", matrix3_to_json(p.R)}, {"t", vector3_to_json(p.t)}};
}

RigidTransform pose_from_json(const json& j) {
  return {repair_rotation(read_matrix3(j, "R")), read_vector<3>(j, "t")};
}

}  // namespace

std::vector<std::uint8_t> encode_point_cloud(const PointCloud& cloud) {
  cloud.validate();
  if (cloud.channels > 255) throw Error(ErrorCode::kInvalidArgument, "too many feature channels");
  ByteWriter w;
  w.put_magic(kPointCloudMagic);
  w.put<std::uint32_t>(kPointCloudVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(cloud.sensor));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(cloud.channels));
  w.put<std::uint64_t>(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) w.put<float>(static_cast<float>(cloud.points[i](a)));
    for (int c = 0; c < cloud.channels; ++c) w.put<float>(static_cast<float>(cloud.feature(i, c)));
  }
  return std::move(w.bytes());
}

PointCloud decode_point_cloud(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic(kPointCloudMagic);
  check_version(r.get<std::uint32_t>(), kPointCloudVersion);
  const auto tag = r.get<std::uint8_t>();
  if (tag > static_cast<std::uint8_t>(SensorKind::kRadar4d)) {
    throw Error(ErrorCode::kUnknownEnum, "sensor tag " + std::to_string(tag));
  }
  const int channels = r.get<std::uint8_t>();
  if (channels < 1) throw Error(ErrorCode::kInvalidArgument, "C_p must be >= 1");
  const auto count = r.get<std::uint64_t>();
  const std::uint64_t stride = (3 + static_cast<std::uint64_t>(channels)) * sizeof(float);
  if (count > r.remaining() / stride) throw Error(ErrorCode::kTruncated, "point payload too short");
  r.need(count * stride);

  PointCloud cloud(static_cast<SensorKind>(tag), channels);
  cloud.points.reserve(count);
  cloud.features.reserve(count * channels);
  for (std::uint64_t i = 0; i < count; ++i) {
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) p(a) = r.get<float>();
    cloud.points.push_back(p);
    for (int c = 0; c < channels; ++c) cloud.features.push_back(r.get<float>());
  }
  cloud.validate();
  return cloud;
}

void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  write_bytes(encode_point_cloud(cloud), path);
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  return decode_point_cloud(read_bytes(path));
}

namespace {

[[gnu::noinline]] double round_to_float(double v) { return static_cast<float>(v); }

}  // namespace

PointCloud quantize_to_float32(const PointCloud& cloud) {
  PointCloud q = cloud;
  for (auto& p : q.points) p = Eigen::Vector3d(round_to_float(p.x()), round_to_float(p.y()), round_to_float(p.z()));
  for (auto& f : q.features) f = round_to_float(f);
  return q;
}

void write_image(const CameraImage& image, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_magic(kImageMagic);
  w.put<std::uint32_t>(kImageVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(image.modality));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(image.data.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(image.data.cols()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(image.data.channels()));
  for (double v : image.data.data()) w.put<float>(static_cast<float>(v));
  write_bytes(w.bytes(), path);
}

CameraImage read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader r(bytes);
  r.expect_magic(kImageMagic);
  check_version(r.get<std::uint32_t>(), kImageVersion);
  const auto tag = r.get<std::uint8_t>();
  if (tag > static_cast<std::uint8_t>(ImageModality::kEventGrid)) {
    throw Error(ErrorCode::kUnknownEnum, "image modality tag " + std::to_string(tag));
  }
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  const auto channels = r.get<std::uint32_t>();
  const std::uint64_t count = std::uint64_t{rows} * cols * channels;
  if (count > r.remaining() / sizeof(float)) throw Error(ErrorCode::kTruncated, "image too short");
  CameraImage img{static_cast<ImageModality>(tag),
                  Grid(static_cast<int>(rows), static_cast<int>(cols), static_cast<int>(channels))};
  for (auto& v : img.data.data()) v = r.get<float>();
  return img;
}

void write_events(const EventStream& events, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_magic(kEventMagic);
  w.put<std::uint32_t>(kEventVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(events.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(events.height));
  w.put<std::uint64_t>(events.events.size());
  for (const Event& e : events.events) {
    w.put<std::int32_t>(e.x);
    w.put<std::int32_t>(e.y);
    w.put<std::int64_t>(e.t_us);
    w.put<std::int8_t>(e.polarity);
  }
  write_bytes(w.bytes(), path);
}

EventStream read_events(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader r(bytes);
  r.expect_magic(kEventMagic);
  check_version(r.get<std::uint32_t>(), kEventVersion);
  EventStream s;
  s.width = static_cast<int>(r.get<std::uint32_t>());
  s.height = static_cast<int>(r.get<std::uint32_t>());
  const auto count = r.get<std::uint64_t>();
  constexpr std::size_t kRecord = 4 + 4 + 8 + 1;
  if (count > r.remaining() / kRecord) throw Error(ErrorCode::kTruncated, "event payload too short");
  s.events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Event e;
    e.x = r.get<std::int32_t>();
    e.y = r.get<std::int32_t>();
    e.t_us = r.get<std::int64_t>();
    e.polarity = r.get<std::int8_t>();
    s.events.push_back(e);
  }
  s.validate();
  return s;
}

json box3d_to_json(const Box3D& box) {
  json j = {{"cx", box.center.x()}, {"cy", box.center.y()}, {"cz", box.center.z()},
            {"l", box.l},           {"w", box.w},           {"h", box.h},
            {"yaw", box.yaw},       {"class", std::string(to_string(box.cls))}};
  if (box.score) j["score"] = *box.score;
  if (box.track_id) j["track_id"] = *box.track_id;
  return j;
}

Box3D box3d_from_json(const json& j) {
  Box3D b;
  b.center = {require_number(j, "cx"), require_number(j, "cy"), require_number(j, "cz")};
  b.l = require_number(j, "l");
  b.w = require_number(j, "w");
  b.h = require_number(j, "h");
  b.yaw = normalize_yaw(require_number(j, "yaw"));
  b.cls = parse_object_class(require(j, "class").get<std::string>());
  if (j.contains("score") && !j.at("score").is_null()) b.score = j.at("score").get<double>();
  if (j.contains("track_id") && !j.at("track_id").is_null()) {
    b.track_id = j.at("track_id").get<std::int64_t>();
  }
  b.validate();
  return b;
}

json annotations_to_json(const Annotations& a) {
  json boxes3d = json::array();
  for (const auto& b : a.boxes3d) boxes3d.push_back(box3d_to_json(b));
  json boxes2d = json::array();
  for (const auto& b : a.boxes2d) {
    boxes2d.push_back({{"u_min", b.u_min},
                       {"v_min", b.v_min},
                       {"w", b.w},
                       {"h", b.h},
                       {"class", std::string(to_string(b.cls))}});
  }
  return {{"boxes3d", boxes3d},
          {"boxes2d", boxes2d},
          {"pose", pose_to_json(a.pose)},
          {"conditions",
           {{"weather", std::string(to_string(a.conditions.weather))},
            {"light", std::string(to_string(a.conditions.light))}}}};
}

Annotations annotations_from_json(const json& j) {
  Annotations a;
  for (const auto& jb : require(j, "boxes3d")) a.boxes3d.push_back(box3d_from_json(jb));
  for (const auto& jb : require(j, "boxes2d")) {
    Box2D b;
    b.u_min = require_number(jb, "u_min");
    b.v_min = require_number(jb, "v_min");
    b.w = require_number(jb, "w");
    b.h = require_number(jb, "h");
    b.cls = parse_object_class(require(jb, "class").get<std::string>());
    b.validate();
    a.boxes2d.push_back(b);
  }
  a.pose = pose_from_json(require(j, "pose"));
  const json& cond = require(j, "conditions");
  a.conditions.weather = parse_weather(require(cond, "weather").get<std::string>());
  a.conditions.light = parse_light(require(cond, "light").get<std::string>());
  return a;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  write_text_file(j.dump(2) + "\n", path);
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_annotations(const Annotations& a, const std::filesystem::path& path) {
  write_json_file(annotations_to_json(a), path);
}

Annotations read_annotations(const std::filesystem::path& path) {
  try {
    return annotations_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

json rig_to_json(const Rig& rig) {
  json cams = json::array();
  for (const auto& c : rig.cameras) {
    cams.push_back({{"name", c.name},
                    {"modality", std::string(to_string(c.modality))},
                    {"width", c.width},
                    {"height", c.height},
                    {"K", matrix3_to_json(c.K)},
                    {"R", matrix3_to_json(c.R)},
                    {"t", vector3_to_json(c.t)}});
  }
  json sensors = json::array();
  for (const auto& [kind, tf] : rig.range_sensors) {
    json s = pose_to_json(tf);
    s["sensor"] = std::string(to_string(kind));
    sensors.push_back(s);
  }
  return {{"cameras", cams}, {"range_sensors", sensors}};
}

Rig rig_from_json(const json& j) {
  Rig rig;
  for (const auto& jc : require(j, "cameras")) {
    CameraModel c;
    c.modality = parse_image_modality(require(jc, "modality").get<std::string>());
    c.name = jc.value("name", std::string(to_string(c.modality)));
    c.width = require(jc, "width").get<int>();
    c.height = require(jc, "height").get<int>();
    if (c.width <= 0 || c.height <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "camera resolution must be positive");
    }
    c.K = read_matrix3(jc, "K");
    validate_intrinsics(c.K);
    c.R = repair_rotation(read_matrix3(jc, "R"));
    c.t = read_vector<3>(jc, "t");
    rig.cameras.push_back(std::move(c));
  }
  if (j.contains("range_sensors")) {
    for (const auto& js : j.at("range_sensors")) {
      const SensorKind kind = parse_sensor_kind(require(js, "sensor").get<std::string>());
      rig.range_sensors[kind] = pose_from_json(js);
    }
  }
  return rig;
}

void save_rig(const Rig& rig, const std::filesystem::path& path) {
  write_json_file(rig_to_json(rig), path);
}

Rig load_rig(const std::filesystem::path& path) {
  try {
    return rig_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

PointCloud filter_to_range(const PointCloud& cloud, const AxisBox& range) {
  if (!(range.min.array() < range.max.array()).all()) {
    throw Error(ErrorCode::kInvalidArgument, "range min must be < max on every axis");
  }
  PointCloud out(cloud.sensor, cloud.channels);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (range.contains(cloud.points[i])) out.push_back(cloud.points[i], cloud.feature_row(i));
  }
  return out;
}

CameraImage events_to_voxel_grid(const EventStream& stream, std::int64_t t0_us,
                                 std::int64_t t1_us, int bins) {
  if (t1_us <= t0_us) throw Error(ErrorCode::kInvalidArgument, "event window has zero length");
  if (bins < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two temporal bins");
  CameraImage grid{ImageModality::kEventGrid, Grid(stream.height, stream.width, bins)};
  const double span = static_cast<double>(t1_us - t0_us);
  for (const Event& e : stream.events) {
    if (e.t_us < t0_us || e.t_us > t1_us) {
      throw Error(ErrorCode::kOutOfRange, "event at t=" + std::to_string(e.t_us) +
                                              " outside the window");
    }
    if (e.x < 0 || e.x >= stream.width || e.y < 0 || e.y >= stream.height) {
      throw Error(ErrorCode::kOutOfRange, "event outside sensor resolution");
    }
    const double tau = static_cast<double>(e.t_us - t0_us) / span * (bins - 1);
    const int lower = std::min(static_cast<int>(std::floor(tau)), bins - 1);
    const double frac = tau - lower;
    grid.data.at(e.y, e.x, lower) += e.polarity * (1.0 - frac);
    if (lower + 1 < bins && frac > 0.0) grid.data.at(e.y, e.x, lower + 1) += e.polarity * frac;
  }
  return grid;
}

}  // namespace voxfuse
