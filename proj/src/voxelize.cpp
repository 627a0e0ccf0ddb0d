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

#include "voxfuse/voxelize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "voxfuse/error.hpp"

namespace voxfuse {

void VoxelGridSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    const double extent = range.max(a) - range.min(a);
    if (!(extent > 0.0) || !(voxel_size(a) > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "grid range and voxel size must be positive");
    }
    const double q = extent / voxel_size(a);
    if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, q)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "range is not an integral number of voxels on axis " + std::to_string(a));
    }
  }
  if (bev_stride < 1) throw Error(ErrorCode::kInvalidArgument, "bev stride must be >= 1");
  const auto d = dims();
  if (d[0] % bev_stride != 0 || d[1] % bev_stride != 0) {
    throw Error(ErrorCode::kInvalidArgument, "grid X/Y dims must be divisible by the bev stride");
  }
  if (voxel_channels < 1 || bev_channels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "channel counts must be >= 1");
  }
}

std::array<int, 3> VoxelGridSpec::dims() const {
  std::array<int, 3> d{};
  for (int a = 0; a < 3; ++a) {
    d[static_cast<std::size_t>(a)] =
        static_cast<int>(std::lround((range.max(a) - range.min(a)) / voxel_size(a)));
  }
  return d;
}

Eigen::Vector3d VoxelGridSpec::voxel_center(const VoxelIndex& v) const {
  return range.min + (Eigen::Vector3d(v.x, v.y, v.z).array() + 0.5).matrix().cwiseProduct(voxel_size);
}

std::optional<VoxelIndex> VoxelGridSpec::locate(const Eigen::Vector3d& p) const {
  if (!range.contains(p)) return std::nullopt;
  const auto d = dims();
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const int i = static_cast<int>(std::floor((p(a) - range.min(a)) / voxel_size(a)));
    idx[static_cast<std::size_t>(a)] = std::clamp(i, 0, d[static_cast<std::size_t>(a)] - 1);
  }
  return VoxelIndex{idx[0], idx[1], idx[2]};
}

std::optional<std::size_t> SparseVoxelSet::find(const VoxelIndex& v) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), v);
  if (it == indices.end() || *it != v) return std::nullopt;
  return static_cast<std::size_t>(it - indices.begin());
}

void SparseVoxelSet::validate() const {
  if (static_cast<std::size_t>(features.rows()) != indices.size() ||
      centroids.size() != indices.size() || counts.size() != indices.size()) {
    throw Error(ErrorCode::kShapeMismatch, "voxel set arrays are not aligned");
  }
  const auto d = spec.dims();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& v = indices[i];
    if (v.x < 0 || v.y < 0 || v.z < 0 || v.x >= d[0] || v.y >= d[1] || v.z >= d[2]) {
      throw Error(ErrorCode::kOutOfRange, "voxel index outside grid");
    }
    if (i > 0 && !(indices[i - 1] < v)) {
      throw Error(ErrorCode::kInvalidArgument, "voxel indices not strictly sorted");
    }
  }
  if (!features.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite voxel feature");
}

SparseVoxelSet voxelize_points(const PointCloud& cloud, const VoxelGridSpec& spec,
                               const nn::Linear& lift) {
  spec.validate();
  if (lift.in_features() != cloud.channels + 3) {
    throw Error(ErrorCode::kShapeMismatch, "lift expects " + std::to_string(lift.in_features()) +
                                               " inputs, cloud provides C_p + 3 = " +
                                               std::to_string(cloud.channels + 3));
  }
  struct Accum {
    Eigen::VectorXd feature_sum;
    Eigen::Vector3d position_sum = Eigen::Vector3d::Zero();
    int count = 0;
  };
  std::map<VoxelIndex, Accum> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto idx = spec.locate(cloud.points[i]);
    if (!idx) {
      throw Error(ErrorCode::kOutOfRange, "point outside the voxel grid range; filter first");
    }
    auto [it, inserted] = cells.try_emplace(*idx);
    Accum& acc = it->second;
    if (inserted) acc.feature_sum = Eigen::VectorXd::Zero(cloud.channels);
    for (int c = 0; c < cloud.channels; ++c) acc.feature_sum(c) += cloud.feature(i, c);
    acc.position_sum += cloud.points[i];
    ++acc.count;
  }

  SparseVoxelSet out;
  out.spec = spec;
  out.indices.reserve(cells.size());
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(cells.size()), cloud.channels + 3);
  Eigen::Index row = 0;
  for (const auto& [idx, acc] : cells) {
    const Eigen::Vector3d centroid = acc.position_sum / acc.count;
    raw.row(row).head(cloud.channels) = (acc.feature_sum / acc.count).transpose();
    raw.row(row).tail<3>() = (centroid - spec.voxel_center(idx)).transpose();
    out.indices.push_back(idx);
    out.centroids.push_back(centroid);
    out.counts.push_back(acc.count);
    ++row;
  }
  out.features = lift.apply_rows(raw);
  return out;
}

SparseVoxelSet union_fuse(const SparseVoxelSet& lidar, const SparseVoxelSet& radar,
                          const FusionProjector& proj) {
  if (!(lidar.spec == radar.spec)) throw Error(ErrorCode::kShapeMismatch, "voxel grid specs differ");
  if (lidar.channels() != radar.channels() && !lidar.empty() && !radar.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "voxel feature widths differ");
  }
  const int cv = !lidar.empty()   ? lidar.channels()
                 : !radar.empty() ? radar.channels()
                                  : proj.map.out_features();
  if (proj.map.in_features() != 2 * cv || proj.map.out_features() != cv) {
    throw Error(ErrorCode::kShapeMismatch, "projector must map 2*C_V -> C_V");
  }

  SparseVoxelSet out;
  out.spec = lidar.spec;
  std::vector<Eigen::VectorXd> rows;
  std::size_t i = 0;
  std::size_t j = 0;
  Eigen::VectorXd both(2 * cv);
  auto take = [&](const SparseVoxelSet& s, std::size_t k) {
    out.indices.push_back(s.indices[k]);
    out.centroids.push_back(s.centroids[k]);
    out.counts.push_back(s.counts[k]);
    rows.push_back(s.features.row(static_cast<Eigen::Index>(k)).transpose());
  };
  while (i < lidar.size() || j < radar.size()) {
    if (j == radar.size() || (i < lidar.size() && lidar.indices[i] < radar.indices[j])) {
      take(lidar, i++);
    } else if (i == lidar.size() || radar.indices[j] < lidar.indices[i]) {
      take(radar, j++);
    } else {
      both << lidar.features.row(static_cast<Eigen::Index>(i)).transpose(),
          radar.features.row(static_cast<Eigen::Index>(j)).transpose();
      const int n = lidar.counts[i] + radar.counts[j];
      out.indices.push_back(lidar.indices[i]);
      out.centroids.push_back((lidar.centroids[i] * lidar.counts[i] +
                               radar.centroids[j] * radar.counts[j]) /
                              n);
      out.counts.push_back(n);
      rows.push_back(proj.map(both));
      ++i;
      ++j;
    }
  }
  out.features.resize(static_cast<Eigen::Index>(rows.size()), cv);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  }
  return out;
}

Grid collapse_to_bev(const SparseVoxelSet& set) {
  const int s = set.spec.bev_stride;
  Grid bev(set.spec.bev_rows(), set.spec.bev_cols(), set.channels());
  const double norm = 1.0 / (s * s);
  for (std::size_t k = 0; k < set.size(); ++k) {
    auto cell = bev.pixel(set.indices[k].x / s, set.indices[k].y / s);
    for (int c = 0; c < set.channels(); ++c) {
      cell[static_cast<std::size_t>(c)] += set.features(static_cast<Eigen::Index>(k), c) * norm;
    }
  }
  return bev;
}

Grid bev_collapse(const SparseVoxelSet& set, const std::vector<nn::Conv2d>& convs) {
  return nn::forward(convs, collapse_to_bev(set));
}

Grid bev_concat_fuse(const Grid& bev_lidar, const Grid& bev_radar, const nn::Conv2d& conv) {
  if (bev_lidar.rows() != bev_radar.rows() || bev_lidar.cols() != bev_radar.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "BEV maps differ in spatial size");
  }
  const int cl = bev_lidar.channels();
  const int cr = bev_radar.channels();
  Grid cat(bev_lidar.rows(), bev_lidar.cols(), cl + cr);
  for (int r = 0; r < cat.rows(); ++r) {
    for (int c = 0; c < cat.cols(); ++c) {
      auto dst = cat.pixel(r, c);
      const auto a = bev_lidar.pixel(r, c);
      const auto b = bev_radar.pixel(r, c);
      std::copy(a.begin(), a.end(), dst.begin());
      std::copy(b.begin(), b.end(), dst.begin() + cl);
    }
  }
  return conv.forward(cat);
}

OccupancyMap bev_occupancy(const SparseVoxelSet& set, double min_z) {
  const int s = set.spec.bev_stride;
  OccupancyMap occ{set.spec.bev_rows(), set.spec.bev_cols(), {}};
  occ.counts.assign(static_cast<std::size_t>(occ.rows) * occ.cols, 0);
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (set.centroids[k].z() < min_z) continue;
    occ.at(set.indices[k].x / s, set.indices[k].y / s) += set.counts[k];
  }
  return occ;
}

}  // namespace voxfuse
