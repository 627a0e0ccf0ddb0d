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
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxfuse/types.hpp"

namespace voxfuse {

// Point-cloud binary layout (all little-endian):
//   "DSRT" | u32 version | u8 sensor tag | u8 C_p | u64 count |
//   count * (x, y, z, f_0 .. f_{C_p-1}) as float32
inline constexpr char kPointCloudMagic[4] = {'D', 'S', 'R', 'T'};
inline constexpr std::uint32_t kPointCloudVersion = 1;

// Coordinates and features are stored as float32, so read(write(c)) == c
// holds exactly for clouds whose values are float-representable (anything
// previously read from disk, or quantize_to_float32(c)).
void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud read_point_cloud(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_point_cloud(const PointCloud& cloud);
PointCloud decode_point_cloud(const std::vector<std::uint8_t>& bytes);
PointCloud quantize_to_float32(const PointCloud& cloud);

// Dense float grid ("DSIM"): u32 version | u8 modality | u32 rows | u32 cols |
// u32 channels | rows*cols*channels float32.
void write_image(const CameraImage& image, const std::filesystem::path& path);
CameraImage read_image(const std::filesystem::path& path);

// Raw events ("DSEV"): u32 version | u32 width | u32 height | u64 count |
// count * (i32 x, i32 y, i64 t_us, i8 polarity).
void write_events(const EventStream& events, const std::filesystem::path& path);
EventStream read_events(const std::filesystem::path& path);

struct Annotations {
  std::vector<Box3D> boxes3d;
  std::vector<Box2D> boxes2d;
  OdometryPose pose;
  ConditionTags conditions;
  bool operator==(const Annotations&) const = default;
};

nlohmann::json box3d_to_json(const Box3D& box);
Box3D box3d_from_json(const nlohmann::json& j);
nlohmann::json annotations_to_json(const Annotations& a);
// Yaw is renormalized; poses within 1e-3 of SO(3) are repaired, others
// rejected with kNotOrthonormal.
Annotations annotations_from_json(const nlohmann::json& j);
void write_annotations(const Annotations& a, const std::filesystem::path& path);
Annotations read_annotations(const std::filesystem::path& path);

nlohmann::json rig_to_json(const Rig& rig);
Rig rig_from_json(const nlohmann::json& j);
void save_rig(const Rig& rig, const std::filesystem::path& path);
// Rejects non-invertible K (kSingular) and rotations farther than 1e-3 from
// SO(3) (kNotOrthonormal); closer ones are re-orthonormalized.
Rig load_rig(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

struct AxisBox {
  Eigen::Vector3d min{0.0, -75.2, -2.0};
  Eigen::Vector3d max{75.2, 75.2, 4.0};

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() < max.array()).all();
  }
  bool operator==(const AxisBox&) const = default;
};

/// Keeps points with min <= coord < max on every axis.
PointCloud filter_to_range(const PointCloud& cloud, const AxisBox& range);

inline constexpr int kEventBins = 5;

/// Event voxel grid: each event at normalized time
/// tau = (t - t0) / (t1 - t0) * (bins - 1) adds polarity * (1 - |tau - b|) to
/// the two bins b adjacent to tau. Throws kInvalidArgument on an empty window
/// and kOutOfRange for events outside [t0, t1].
CameraImage events_to_voxel_grid(const EventStream& stream, std::int64_t t0_us,
                                 std::int64_t t1_us, int bins = kEventBins);

}  // namespace voxfuse
