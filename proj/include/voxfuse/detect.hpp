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
#include <optional>
#include <unordered_map>
#include <vector>

#include "voxfuse/layers.hpp"
#include "voxfuse/types.hpp"
#include "voxfuse/voxelize.hpp"

namespace voxfuse {

struct ProposalSet {
  int capacity = 128;
  std::vector<Box3D> boxes;  // every box carries a score
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return boxes.size(); }
  std::vector<Box3D> valid_boxes() const;
  void validate() const;
};

/// Connected-component proposer over an occupancy map.
struct ProposalParams {
  int capacity = 128;
  int min_cell_points = 6;        // cells below this count are empty
  int min_component_cells = 1;
  double score_half_cells = 4.0;  // score = cells / (cells + score_half_cells)
  double xy_margin = 0.0;         // added to fitted length and width (m)
  double z_margin = 0.2;          // added to the fitted height (m)
  // When set, boxes extend down to this plane instead of the lowest member.
  std::optional<double> ground_z;
  double vehicle_min_length = 2.8;
  double bike_min_length = 1.2;
};

/// Proposals from occupied BEV cells. Each 8-connected component becomes one
/// box: yaw from the principal axis of its member voxel centroids (weighted by
/// point count), length and width from the centroid spans along the principal
/// axes, z range from the member centroids; no extent falls below one voxel.
/// The class is chosen by length.
/// `voxels` must be the set the occupancy map was computed from.
ProposalSet propose_from_bev(const Grid& bev, const OccupancyMap& occupancy,
                             const SparseVoxelSet& voxels, double min_z,
                             const ProposalParams& params = {});

/// Fixed-radius neighbour lookup over a static point set (uniform hash grid
/// with cell size r).
class NeighborIndex {
 public:
  NeighborIndex(std::vector<Eigen::Vector3d> points, double radius);

  double radius() const { return radius_; }
  const std::vector<Eigen::Vector3d>& points() const { return points_; }
  // Indices of points with |p - q| <= radius, ascending.
  std::vector<std::size_t> query(const Eigen::Vector3d& q) const;

 private:
  struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const;
  };
  std::array<std::int64_t, 3> key(const Eigen::Vector3d& p) const;

  std::vector<Eigen::Vector3d> points_;
  double radius_;
  std::unordered_map<std::array<std::int64_t, 3>, std::vector<std::size_t>, KeyHash> cells_;
};

/// Sub-voxel centres of a box in its yaw-rotated frame, S^3 rows ordered
/// (i along l, j along w, k along h) with k fastest.
std::vector<Eigen::Vector3d> roi_grid_points(const Box3D& box, int S);

/// S^3 x C grid: each row is the mean feature of the indexed points within
/// the radius of that sub-voxel centre, zero if none.
Eigen::MatrixXd roi_grid_pool(const Box3D& box, const NeighborIndex& index,
                              const Eigen::MatrixXd& features, int S);

/// Voxel form: pools [original | fused] (2 C_V) over voxel centres within r.
Eigen::MatrixXd roi_grid_pool(const Box3D& box, const SparseVoxelSet& voxels,
                              const Eigen::MatrixXd& fused, int S, double r);

struct RefinementConfig {
  int grid_size = 6;      // S
  double radius = 0.0;    // r; <= 0 means the voxel diagonal
  nn::Mlp head;           // S^3 * 2 C_V -> 8 (dx, dy, dz, dl, dw, dh, dyaw, logit)

  void validate(int voxel_channels) const;
  static RefinementConfig random(int voxel_channels, int S, int hidden, std::uint64_t seed);
  static RefinementConfig zeros(int voxel_channels, int S, int hidden);
};

/// Applies the head residually to every proposal. `grids[i]` is the pooled
/// grid of proposal i.
ProposalSet refine_boxes(const ProposalSet& proposals, const std::vector<Eigen::MatrixXd>& grids,
                         const RefinementConfig& cfg);

/// Applies one 8-vector of head outputs to a box.
Box3D apply_box_delta(const Box3D& box, const Eigen::VectorXd& delta);

/// Greedy rotated NMS; returns kept boxes by descending score (stable for
/// ties).
std::vector<Box3D> nms(const std::vector<Box3D>& boxes, double iou_thresh = 0.7);

}  // namespace voxfuse
