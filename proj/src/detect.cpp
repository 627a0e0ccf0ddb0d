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

#include "voxfuse/detect.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "voxfuse/error.hpp"
#include "voxfuse/eval.hpp"

namespace voxfuse {

std::vector<Box3D> ProposalSet::valid_boxes() const {
  std::vector<Box3D> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (valid[i]) out.push_back(boxes[i]);
  }
  return out;
}

void ProposalSet::validate() const {
  if (boxes.size() > static_cast<std::size_t>(capacity) || valid.size() != boxes.size()) {
    throw Error(ErrorCode::kShapeMismatch, "proposal set exceeds capacity or mask misaligned");
  }
  for (const auto& b : boxes) {
    if (!b.score || *b.score < 0.0 || *b.score > 1.0) {
      throw Error(ErrorCode::kInvalidArgument, "proposal score missing or outside [0,1]");
    }
  }
}

namespace {

Box3D fit_component(const std::vector<std::size_t>& members, const SparseVoxelSet& voxels,
                    int cells, const ProposalParams& params) {
  double total = 0.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  double z_lo = std::numeric_limits<double>::infinity();
  double z_hi = -z_lo;
  for (std::size_t k : members) {
    const double wk = voxels.counts[k];
    total += wk;
    mean += wk * voxels.centroids[k].head<2>();
    z_lo = std::min(z_lo, voxels.centroids[k].z());
    z_hi = std::max(z_hi, voxels.centroids[k].z());
  }
  mean /= total;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (std::size_t k : members) {
    const Eigen::Vector2d d = voxels.centroids[k].head<2>() - mean;
    cov += voxels.counts[k] * d * d.transpose();
  }
  cov /= total;

  double yaw = 0.0;
  if (cov.trace() > 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    const Eigen::Vector2d major = eig.eigenvectors().col(1);
    yaw = std::atan2(major.y(), major.x());
  }
  // Heading is ambiguous by pi; fold into (-pi/2, pi/2].
  if (yaw > M_PI / 2) yaw -= M_PI;
  if (yaw <= -M_PI / 2) yaw += M_PI;
  const Eigen::Vector2d ax(std::cos(yaw), std::sin(yaw));
  const Eigen::Vector2d ay(-ax.y(), ax.x());

  double a_lo = std::numeric_limits<double>::infinity();
  double a_hi = -a_lo;
  double b_lo = a_lo;
  double b_hi = -a_lo;
  for (std::size_t k : members) {
    const Eigen::Vector2d d = voxels.centroids[k].head<2>() - mean;
    a_lo = std::min(a_lo, d.dot(ax));
    a_hi = std::max(a_hi, d.dot(ax));
    b_lo = std::min(b_lo, d.dot(ay));
    b_hi = std::max(b_hi, d.dot(ay));
  }

  Box3D box;
  const Eigen::Vector2d c2 = mean + ax * (a_lo + a_hi) / 2 + ay * (b_lo + b_hi) / 2;
  if (params.ground_z && *params.ground_z < z_hi) {
    z_lo = *params.ground_z;
  } else {
    z_lo -= params.z_margin / 2;
  }
  z_hi += params.z_margin / 2;
  box.center = Eigen::Vector3d(c2.x(), c2.y(), (z_lo + z_hi) / 2);
  const double floor_xy = std::min(voxels.spec.voxel_size.x(), voxels.spec.voxel_size.y());
  box.l = std::max(a_hi - a_lo + params.xy_margin, floor_xy);
  box.w = std::max(b_hi - b_lo + params.xy_margin, floor_xy);
  box.h = std::max(z_hi - z_lo, voxels.spec.voxel_size.z());
  box.yaw = normalize_yaw(yaw);
  if (box.w > box.l) {
    std::swap(box.l, box.w);
    box.yaw = normalize_yaw(box.yaw + M_PI / 2);
  }
  box.cls = box.l >= params.vehicle_min_length ? ObjectClass::kVehicle
            : box.l >= params.bike_min_length  ? ObjectClass::kBike
                                               : ObjectClass::kPedestrian;
  box.score = cells / (cells + params.score_half_cells);
  return box;
}

}  // namespace

ProposalSet propose_from_bev(const Grid& bev, const OccupancyMap& occupancy,
                             const SparseVoxelSet& voxels, double min_z,
                             const ProposalParams& params) {
  if (bev.rows() != occupancy.rows || bev.cols() != occupancy.cols ||
      occupancy.rows != voxels.spec.bev_rows() || occupancy.cols != voxels.spec.bev_cols()) {
    throw Error(ErrorCode::kShapeMismatch, "occupancy, BEV map and voxel grid disagree");
  }
  const int rows = occupancy.rows;
  const int cols = occupancy.cols;
  const int s = voxels.spec.bev_stride;

  // Member voxels per BEV cell.
  std::vector<std::vector<std::size_t>> cell_voxels(static_cast<std::size_t>(rows) * cols);
  for (std::size_t k = 0; k < voxels.size(); ++k) {
    if (voxels.centroids[k].z() < min_z) continue;
    const int r = voxels.indices[k].x / s;
    const int c = voxels.indices[k].y / s;
    cell_voxels[static_cast<std::size_t>(r) * cols + c].push_back(k);
  }

  std::vector<int> label(static_cast<std::size_t>(rows) * cols, -1);
  auto occupied = [&](int r, int c) { return occupancy.at(r, c) >= params.min_cell_points; };

  std::vector<Box3D> found;
  std::vector<std::pair<int, int>> stack;
  int next = 0;
  for (int r0 = 0; r0 < rows; ++r0) {
    for (int c0 = 0; c0 < cols; ++c0) {
      if (!occupied(r0, c0) || label[static_cast<std::size_t>(r0) * cols + c0] >= 0) continue;
      std::vector<std::size_t> members;
      int cells = 0;
      stack.assign(1, {r0, c0});
      label[static_cast<std::size_t>(r0) * cols + c0] = next;
      while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        ++cells;
        const auto& cv = cell_voxels[static_cast<std::size_t>(r) * cols + c];
        members.insert(members.end(), cv.begin(), cv.end());
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= rows || cc >= cols || !occupied(rr, cc)) continue;
            int& l = label[static_cast<std::size_t>(rr) * cols + cc];
            if (l >= 0) continue;
            l = next;
            stack.emplace_back(rr, cc);
          }
        }
      }
      ++next;
      if (cells < params.min_component_cells || members.empty()) continue;
      std::sort(members.begin(), members.end());
      found.push_back(fit_component(members, voxels, cells, params));
    }
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const Box3D& a, const Box3D& b) { return *a.score > *b.score; });
  ProposalSet set;
  set.capacity = params.capacity;
  if (found.size() > static_cast<std::size_t>(params.capacity)) {
    found.resize(static_cast<std::size_t>(params.capacity));
  }
  set.boxes = std::move(found);
  set.valid.assign(set.boxes.size(), 1);
  return set;
}

NeighborIndex::NeighborIndex(std::vector<Eigen::Vector3d> points, double radius)
    : points_(std::move(points)), radius_(radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "neighbour radius must be > 0");
  for (std::size_t i = 0; i < points_.size(); ++i) cells_[key(points_[i])].push_back(i);
}

std::size_t NeighborIndex::KeyHash::operator()(const std::array<std::int64_t, 3>& k) const {
  std::size_t h = 1469598103934665603ULL;
  for (std::int64_t v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ULL;
  return h;
}

std::array<std::int64_t, 3> NeighborIndex::key(const Eigen::Vector3d& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / radius_)),
          static_cast<std::int64_t>(std::floor(p.y() / radius_)),
          static_cast<std::int64_t>(std::floor(p.z() / radius_))};
}

std::vector<std::size_t> NeighborIndex::query(const Eigen::Vector3d& q) const {
  std::vector<std::size_t> out;
  const auto k = key(q);
  const double r2 = radius_ * radius_;
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        auto it = cells_.find({k[0] + dx, k[1] + dy, k[2] + dz});
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second) {
          if ((points_[i] - q).squaredNorm() <= r2) out.push_back(i);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Eigen::Vector3d> roi_grid_points(const Box3D& box, int S) {
  if (S < 1) throw Error(ErrorCode::kInvalidArgument, "grid size S must be >= 1");
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(S) * S * S);
  for (int i = 0; i < S; ++i) {
    const double u = ((i + 0.5) / S - 0.5) * box.l;
    for (int j = 0; j < S; ++j) {
      const double v = ((j + 0.5) / S - 0.5) * box.w;
      for (int k = 0; k < S; ++k) {
        const double z = ((k + 0.5) / S - 0.5) * box.h;
        pts.emplace_back(box.center.x() + c * u - s * v, box.center.y() + s * u + c * v,
                         box.center.z() + z);
      }
    }
  }
  return pts;
}

Eigen::MatrixXd roi_grid_pool(const Box3D& box, const NeighborIndex& index,
                              const Eigen::MatrixXd& features, int S) {
  if (static_cast<std::size_t>(features.rows()) != index.points().size()) {
    throw Error(ErrorCode::kShapeMismatch, "one feature row per indexed point required");
  }
  const auto centres = roi_grid_points(box, S);
  Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(centres.size()),
                                               features.cols());
  for (std::size_t g = 0; g < centres.size(); ++g) {
    const auto nb = index.query(centres[g]);
    if (nb.empty()) continue;
    auto row = grid.row(static_cast<Eigen::Index>(g));
    for (std::size_t i : nb) row += features.row(static_cast<Eigen::Index>(i));
    row /= static_cast<double>(nb.size());
  }
  return grid;
}

Eigen::MatrixXd roi_grid_pool(const Box3D& box, const SparseVoxelSet& voxels,
                              const Eigen::MatrixXd& fused, int S, double r) {
  if (fused.rows() != voxels.features.rows() || fused.cols() != voxels.features.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "fused features must align with the voxel set");
  }
  std::vector<Eigen::Vector3d> centres(voxels.size());
  for (std::size_t k = 0; k < voxels.size(); ++k) centres[k] = voxels.center(k);
  Eigen::MatrixXd both(fused.rows(), 2 * fused.cols());
  both << voxels.features, fused;
  return roi_grid_pool(box, NeighborIndex(std::move(centres), r), both, S);
}

void RefinementConfig::validate(int voxel_channels) const {
  if (grid_size < 1) throw Error(ErrorCode::kInvalidArgument, "S must be >= 1");
  const int in = grid_size * grid_size * grid_size * 2 * voxel_channels;
  if (head.hidden.in_features() != in || head.output.out_features() != 8) {
    throw Error(ErrorCode::kShapeMismatch, "refinement head must map S^3*2C_V -> 8");
  }
}

RefinementConfig RefinementConfig::random(int voxel_channels, int S, int hidden,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RefinementConfig cfg;
  cfg.grid_size = S;
  cfg.head.hidden = nn::Linear::random(S * S * S * 2 * voxel_channels, hidden, rng);
  cfg.head.output = nn::Linear::random(hidden, 8, rng);
  return cfg;
}

RefinementConfig RefinementConfig::zeros(int voxel_channels, int S, int hidden) {
  RefinementConfig cfg;
  cfg.grid_size = S;
  cfg.head.hidden = nn::Linear::zeros(S * S * S * 2 * voxel_channels, hidden);
  cfg.head.output = nn::Linear::zeros(hidden, 8);
  return cfg;
}

Box3D apply_box_delta(const Box3D& box, const Eigen::VectorXd& delta) {
  if (delta.size() != 8) throw Error(ErrorCode::kShapeMismatch, "box delta needs 8 values");
  Box3D out = box;
  out.center += delta.head<3>();
  out.l *= std::exp(delta(3));
  out.w *= std::exp(delta(4));
  out.h *= std::exp(delta(5));
  out.yaw = normalize_yaw(box.yaw + delta(6));
  out.score = nn::sigmoid(delta(7));
  return out;
}

ProposalSet refine_boxes(const ProposalSet& proposals, const std::vector<Eigen::MatrixXd>& grids,
                         const RefinementConfig& cfg) {
  if (grids.size() != proposals.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one pooled grid per proposal required");
  }
  ProposalSet out = proposals;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const Eigen::MatrixXd& g = grids[i];
    if (g.size() != cfg.head.hidden.in_features()) {
      throw Error(ErrorCode::kShapeMismatch, "pooled grid does not match the head input");
    }
    // Row-major flatten: sub-voxel by sub-voxel.
    Eigen::VectorXd x(g.size());
    for (Eigen::Index r = 0; r < g.rows(); ++r) x.segment(r * g.cols(), g.cols()) = g.row(r);
    out.boxes[i] = apply_box_delta(proposals.boxes[i], cfg.head(x));
  }
  return out;
}

std::vector<Box3D> nms(const std::vector<Box3D>& boxes, double iou_thresh) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score.value_or(0.0) > boxes[b].score.value_or(0.0);
  });
  std::vector<Box3D> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (const auto& k : kept) {
      if (iou3d(boxes[i], k) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(boxes[i]);
  }
  return kept;
}

}  // namespace voxfuse
