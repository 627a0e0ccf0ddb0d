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
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "voxfuse/types.hpp"

namespace voxfuse {

using ProjectionMatrix = Eigen::Matrix<double, 3, 4>;

// Smallest homogeneous depth accepted by project_point.
inline constexpr double kMinProjectionDepth = 1e-6;

/// Largest absolute entry of R^T R - I; zero for an exact rotation.
double orthonormality_defect(const Eigen::Matrix3d& R);

/// Nearest rotation in the Frobenius sense (polar factor U V^T of the SVD).
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& M);

/// Repairs a matrix within `tolerance` of SO(3) to its nearest rotation;
/// matrices orthonormal to 1e-12 are returned unchanged. Throws kNotOrthonormal when it is farther away or has negative determinant.
Eigen::Matrix3d repair_rotation(const Eigen::Matrix3d& R, double tolerance = 1e-3);

/// Rotation angle of R in radians, in [0, pi].
double rotation_angle(const Eigen::Matrix3d& R);

/// Rodrigues' formula.
Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& axis_angle);

/// Throws kSingular unless K is upper-triangular with positive focal lengths
/// and invertible.
void validate_intrinsics(const Eigen::Matrix3d& K);

ProjectionMatrix projection_matrix(const CameraModel& cam);

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Perspective projection of a reference-frame point. Throws kBehindCamera
/// when the homogeneous depth is <= kMinProjectionDepth.
PixelProjection project_point(const ProjectionMatrix& M, const Eigen::Vector3d& p);

/// Non-throwing variant for hot paths; nullopt when behind the camera.
std::optional<PixelProjection> try_project_point(const ProjectionMatrix& M,
                                                 const Eigen::Vector3d& p);

/// Infinite-plane homography mapping src pixels to dst pixels:
/// H = K_dst * R_dst,src * K_src^-1, with R_dst,src = R_dst * R_src^T.
Eigen::Matrix3d homography(const CameraModel& src, const CameraModel& dst);

/// Inverse-mapped bilinear warp: out(x) = img(H^-1 x). Destination pixels
/// whose preimage leaves [0, W-1] x [0, H-1] are zero. Throws kSingular.
CameraImage warp_image(const CameraImage& img, const Eigen::Matrix3d& H, int out_width,
                       int out_height);

struct Correspondence {
  Eigen::Vector3d xyz;
  Eigen::Vector2d uv;
};

struct RigidSolveResult {
  RigidTransform transform;
  double rms_reprojection_px = 0.0;
  int iterations = 0;
};

inline constexpr int kMinRigidCorrespondences = 6;
inline constexpr int kMaxRefineIterations = 20;

/// Camera pose from 3D-2D correspondences: DLT on normalized image
/// coordinates, polar orthonormalization, then Gauss-Newton refinement of the
/// pixel reprojection error (<= 20 iterations or step norm < 1e-10).
/// Throws kTooFewPoints (< 6 pairs), kSingular (K) and kDegenerate (rank
/// deficient design, e.g. coplanar or collinear points).
RigidSolveResult solve_rigid(std::span<const Correspondence> correspondences,
                             const Eigen::Matrix3d& K);

/// RMS pixel reprojection error of a pose over correspondences.
double reprojection_rms(std::span<const Correspondence> correspondences, const Eigen::Matrix3d& K,
                        const RigidTransform& pose);

/// Index of the radar return with the highest power (feature channel 0).
/// Ties resolve to the lowest index. Throws kEmptyInput.
std::size_t select_reflector(const PointCloud& radar);

/// Shifts t by exactly sigma_t meters along a random direction and composes R
/// with a rotation of exactly sigma_r_deg degrees about a random axis.
/// Deterministic per seed.
RigidTransform perturb_extrinsics(const RigidTransform& tf, double sigma_t, double sigma_r_deg,
                                  std::uint64_t seed);

using RowPair = std::pair<Eigen::Vector2d, Eigen::Vector2d>;

/// Max |v_left - v_right| over matched pixel pairs. Throws kEmptyInput.
double epipolar_row_check(std::span<const RowPair> pairs);

}  // namespace voxfuse
