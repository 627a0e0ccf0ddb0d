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
#include <compare>
#include <optional>
#include <vector>

#include "voxfuse/layers.hpp"
#include "voxfuse/sensorio.hpp"
#include "voxfuse/types.hpp"

namespace voxfuse {

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;
  auto operator<=>(const VoxelIndex&) const = default;
};

/// Regular voxel grid over an axis-aligned detection range. Defaults give a
/// 188 x 376 x 15 grid of 0.4 m cubes.
struct VoxelGridSpec {
  AxisBox range;
  Eigen::Vector3d voxel_size{0.4, 0.4, 0.4};
  int bev_stride = 2;
  int voxel_channels = 32;  // C_V
  int bev_channels = 64;    // C_B

  // Throws kInvalidArgument unless (max - min) / size is integral within 1e-9
  // on every axis and X, Y are divisible by the BEV stride.
  void validate() const;
  std::array<int, 3> dims() const;
  int bev_rows() const { return dims()[0] / bev_stride; }
  int bev_cols() const { return dims()[1] / bev_stride; }

  Eigen::Vector3d voxel_center(const VoxelIndex& v) const;
  std::optional<VoxelIndex> locate(const Eigen::Vector3d& p) const;

  bool operator==(const VoxelGridSpec&) const = default;
};

/// Non-empty voxels, sorted by index, with one C_V feature row each. The
/// centroid and point count of the contributing points ride along for box
/// fitting.
struct SparseVoxelSet {
  VoxelGridSpec spec;
  std::vector<VoxelIndex> indices;
  Eigen::MatrixXd features;  // N x C_V
  std::vector<Eigen::Vector3d> centroids;
  std::vector<int> counts;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  int channels() const { return static_cast<int>(features.cols()); }
  std::optional<std::size_t> find(const VoxelIndex& v) const;
  Eigen::Vector3d center(std::size_t i) const { return spec.voxel_center(indices[i]); }
  void validate() const;
};

/// Stand-in for the learned 3D backbone: per voxel, the mean point feature
/// concatenated with the mean offset of the points from the voxel centre
/// (C_p + 3 values) is lifted to C_V channels by a linear map. Points must
/// already lie inside spec.range; otherwise kOutOfRange.
SparseVoxelSet voxelize_points(const PointCloud& cloud, const VoxelGridSpec& spec,
                               const nn::Linear& lift);

/// Maps the 2 C_V concatenation [f_L | f_4R] back to C_V.
struct FusionProjector {
  nn::Linear map;
};

/// Union of two voxel sets. Voxels seen by one sensor keep that sensor's
/// feature; voxels seen by both get P [f_L | f_4R].
SparseVoxelSet union_fuse(const SparseVoxelSet& lidar, const SparseVoxelSet& radar,
                          const FusionProjector& proj);

/// Dense vertical collapse: per (ix, iy) the sum over iz, then mean pooling
/// over bev_stride x bev_stride blocks.
Grid collapse_to_bev(const SparseVoxelSet& set);

/// collapse_to_bev followed by a conv stack (empty stack = identity).
Grid bev_collapse(const SparseVoxelSet& set, const std::vector<nn::Conv2d>& convs);

/// Channel concatenation followed by one zero-padded 3x3 conv (with optional
/// ReLU carried by the conv).
Grid bev_concat_fuse(const Grid& bev_lidar, const Grid& bev_radar, const nn::Conv2d& conv);

/// Point counts per BEV cell from voxels whose centroid z is at or above
/// `min_z` (ground rejection).
struct OccupancyMap {
  int rows = 0;
  int cols = 0;
  std::vector<int> counts;
  int& at(int r, int c) { return counts[static_cast<std::size_t>(r) * cols + c]; }
  int at(int r, int c) const { return counts[static_cast<std::size_t>(r) * cols + c]; }
};

OccupancyMap bev_occupancy(const SparseVoxelSet& set, double min_z);

}  // namespace voxfuse
