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

#include "voxfuse/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "voxfuse/error.hpp"

namespace voxfuse {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

Eigen::Vector3d random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Eigen::Vector3d v(normal(rng), normal(rng), normal(rng));
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

// Pixel coordinates of a camera-frame point and their 2x3 Jacobian.
Eigen::Vector2d project_camera_point(const Eigen::Matrix3d& K, const Eigen::Vector3d& pc,
                                     Eigen::Matrix<double, 2, 3>* jac) {
  const Eigen::Vector3d h = K * pc;
  const double inv = 1.0 / h.z();
  if (jac != nullptr) {
    jac->row(0) = (K.row(0) * h.z() - h.x() * K.row(2)) * inv * inv;
    jac->row(1) = (K.row(1) * h.z() - h.y() * K.row(2)) * inv * inv;
  }
  return {h.x() * inv, h.y() * inv};
}

}  // namespace

double orthonormality_defect(const Eigen::Matrix3d& R) {
  return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& M) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0) U.col(2) *= -1.0;
  return U * V.transpose();
}

Eigen::Matrix3d repair_rotation(const Eigen::Matrix3d& R, double tolerance) {
  if (!R.allFinite()) throw Error(ErrorCode::kNotOrthonormal, "non-finite rotation");
  if (R.determinant() <= 0.0) {
    throw Error(ErrorCode::kNotOrthonormal, "rotation has non-positive determinant");
  }
  const double defect = orthonormality_defect(R);
  if (defect > tolerance) {
    throw Error(ErrorCode::kNotOrthonormal,
                "rotation is " + std::to_string(defect) + " from orthonormal");
  }
  if (defect <= 1e-12) return R;
  return nearest_rotation(R);
}

double rotation_angle(const Eigen::Matrix3d& R) {
  const Eigen::Vector3d axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (R.trace() - 1.0));
}

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& axis_angle) {
  const double theta = axis_angle.norm();
  if (theta < 1e-300) return Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d k = skew(axis_angle / theta);
  return Eigen::Matrix3d::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

void validate_intrinsics(const Eigen::Matrix3d& K) {
  if (!K.allFinite()) throw Error(ErrorCode::kSingular, "non-finite intrinsics");
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0) {
    throw Error(ErrorCode::kSingular, "intrinsics must be upper-triangular");
  }
  if (!(K(0, 0) > 0.0 && K(1, 1) > 0.0) || K(2, 2) == 0.0) {
    throw Error(ErrorCode::kSingular, "intrinsics are not invertible (fx, fy > 0 required)");
  }
}

ProjectionMatrix projection_matrix(const CameraModel& cam) {
  ProjectionMatrix Rt;
  Rt.leftCols<3>() = cam.R;
  Rt.col(3) = cam.t;
  return cam.K * Rt;
}

std::optional<PixelProjection> try_project_point(const ProjectionMatrix& M,
                                                 const Eigen::Vector3d& p) {
  const Eigen::Vector3d h = M.leftCols<3>() * p + M.col(3);
  if (!(h.z() > kMinProjectionDepth)) return std::nullopt;
  return PixelProjection{h.x() / h.z(), h.y() / h.z(), h.z()};
}

PixelProjection project_point(const ProjectionMatrix& M, const Eigen::Vector3d& p) {
  auto proj = try_project_point(M, p);
  if (!proj) throw Error(ErrorCode::kBehindCamera, "point at or behind the image plane");
  return *proj;
}

Eigen::Matrix3d homography(const CameraModel& src, const CameraModel& dst) {
  validate_intrinsics(src.K);
  validate_intrinsics(dst.K);
  const Eigen::Matrix3d relative = dst.R * src.R.transpose();
  return dst.K * relative * src.K.inverse();
}

CameraImage warp_image(const CameraImage& img, const Eigen::Matrix3d& H, int out_width,
                       int out_height) {
  if (!H.allFinite()) throw Error(ErrorCode::kSingular, "non-finite homography");
  const double scale = H.cwiseAbs().maxCoeff();
  if (scale == 0.0 || std::abs(H.determinant()) <= 1e-12 * scale * scale * scale) {
    throw Error(ErrorCode::kSingular, "homography is not invertible");
  }
  if (out_width <= 0 || out_height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "output resolution must be positive");
  }
  const Eigen::Matrix3d Hinv = H.inverse();
  const int W = img.width();
  const int Hh = img.height();
  const int C = img.data.channels();
  constexpr double kEdgeSlack = 1e-9;

  CameraImage out{img.modality, Grid(out_height, out_width, C)};
  if (W == 0 || Hh == 0) return out;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Eigen::Vector3d s = Hinv * Eigen::Vector3d(x, y, 1.0);
      if (std::abs(s.z()) < 1e-12) continue;
      double sx = s.x() / s.z();
      double sy = s.y() / s.z();
      if (sx < -kEdgeSlack || sy < -kEdgeSlack || sx > W - 1 + kEdgeSlack ||
          sy > Hh - 1 + kEdgeSlack) {
        continue;
      }
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(Hh - 1));
      const int x0 = std::min(static_cast<int>(sx), std::max(W - 2, 0));
      const int y0 = std::min(static_cast<int>(sy), std::max(Hh - 2, 0));
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, Hh - 1);
      const double ax = sx - x0;
      const double ay = sy - y0;
      for (int c = 0; c < C; ++c) {
        const double top = (1 - ax) * img.data.at(y0, x0, c) + ax * img.data.at(y0, x1, c);
        const double bot = (1 - ax) * img.data.at(y1, x0, c) + ax * img.data.at(y1, x1, c);
        out.data.at(y, x, c) = (1 - ay) * top + ay * bot;
      }
    }
  }
  return out;
}

double reprojection_rms(std::span<const Correspondence> correspondences, const Eigen::Matrix3d& K,
                        const RigidTransform& pose) {
  if (correspondences.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : correspondences) {
    const Eigen::Vector2d uv = project_camera_point(K, pose.apply(c.xyz), nullptr);
    sum += (uv - c.uv).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(correspondences.size()));
}

RigidSolveResult solve_rigid(std::span<const Correspondence> correspondences,
                             const Eigen::Matrix3d& K) {
  const auto n = static_cast<int>(correspondences.size());
  if (n < kMinRigidCorrespondences) {
    throw Error(ErrorCode::kTooFewPoints, "need at least 6 correspondences, got " +
                                              std::to_string(n));
  }
  validate_intrinsics(K);
  const Eigen::Matrix3d Kinv = K.inverse();

  // Conditioning: centre the 3D points and scale them to mean norm sqrt(3).
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& c : correspondences) centroid += c.xyz;
  centroid /= n;
  double mean_dist = 0.0;
  for (const auto& c : correspondences) mean_dist += (c.xyz - centroid).norm();
  mean_dist /= n;
  if (mean_dist <= 0.0) throw Error(ErrorCode::kDegenerate, "all 3D points coincide");
  const double s = std::sqrt(3.0) / mean_dist;

  Eigen::MatrixXd A(2 * n, 12);
  for (int i = 0; i < n; ++i) {
    const auto& c = correspondences[static_cast<std::size_t>(i)];
    const Eigen::Vector3d xn = Kinv * Eigen::Vector3d(c.uv.x(), c.uv.y(), 1.0);
    const double x = xn.x() / xn.z();
    const double y = xn.y() / xn.z();
    Eigen::Matrix<double, 1, 4> X;
    X << s * (c.xyz - centroid).transpose(), 1.0;
    A.row(2 * i) << -X, Eigen::Matrix<double, 1, 4>::Zero(), x * X;
    A.row(2 * i + 1) << Eigen::Matrix<double, 1, 4>::Zero(), -X, y * X;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // A well-posed DLT has a one-dimensional null space; coplanar or collinear
  // points add more.
  if (sv(10) <= 1e-6 * sv(0)) {
    throw Error(ErrorCode::kDegenerate, "rank-deficient DLT system (coplanar/collinear points)");
  }
  const Eigen::VectorXd p = svd.matrixV().col(11);
  ProjectionMatrix Pn;
  Pn << p.segment<4>(0).transpose(), p.segment<4>(4).transpose(), p.segment<4>(8).transpose();

  // Undo the conditioning: P = Pn * [sI, -s c; 0, 1].
  Eigen::Matrix3d M = Pn.leftCols<3>() * s;
  Eigen::Vector3d b = Pn.col(3) - s * Pn.leftCols<3>() * centroid;
  if (M.determinant() < 0) {
    M = -M;
    b = -b;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> msvd(M);
  const double lambda = msvd.singularValues().mean();
  if (!(lambda > 0.0)) throw Error(ErrorCode::kDegenerate, "DLT produced a null projection");

  RigidTransform pose{nearest_rotation(M / lambda), b / lambda};

  // Gauss-Newton on the pixel reprojection error with a left perturbation
  // X_c -> exp(w) X_c + dt.
  RigidSolveResult result;
  for (int it = 0; it < kMaxRefineIterations; ++it) {
    Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> Jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : correspondences) {
      const Eigen::Vector3d pc = pose.apply(c.xyz);
      Eigen::Matrix<double, 2, 3> dproj;
      const Eigen::Vector2d r = project_camera_point(K, pc, &dproj) - c.uv;
      Eigen::Matrix<double, 3, 6> dpc;
      dpc.leftCols<3>() = -skew(pc);
      dpc.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> J = dproj * dpc;
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> step = JtJ.ldlt().solve(-Jtr);
    if (!step.allFinite()) break;
    const Eigen::Matrix3d dR = axis_angle_to_matrix(step.head<3>());
    pose.R = nearest_rotation(dR * pose.R);
    pose.t = dR * pose.t + step.tail<3>();
    result.iterations = it + 1;
    if (step.norm() < 1e-10) break;
  }
  result.transform = pose;
  result.rms_reprojection_px = reprojection_rms(correspondences, K, pose);
  return result;
}

std::size_t select_reflector(const PointCloud& radar) {
  if (radar.empty()) throw Error(ErrorCode::kEmptyInput, "radar cloud has no points");
  std::size_t best = 0;
  for (std::size_t i = 1; i < radar.size(); ++i) {
    if (radar.feature(i, 0) > radar.feature(best, 0)) best = i;
  }
  return best;
}

RigidTransform perturb_extrinsics(const RigidTransform& tf, double sigma_t, double sigma_r_deg,
                                  std::uint64_t seed) {
  if (sigma_t < 0.0 || sigma_r_deg < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "perturbation magnitudes must be >= 0");
  }
  std::mt19937_64 rng(seed);
  const Eigen::Vector3d direction = random_unit_vector(rng);
  const Eigen::Vector3d axis = random_unit_vector(rng);
  const double angle = sigma_r_deg * std::numbers::pi / 180.0;
  const Eigen::Matrix3d dR = axis_angle_to_matrix(axis * angle);
  return {nearest_rotation(dR * tf.R), tf.t + sigma_t * direction};
}

double epipolar_row_check(std::span<const RowPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no stereo pairs to check");
  double worst = 0.0;
  for (const auto& [left, right] : pairs) worst = std::max(worst, std::abs(left.y() - right.y()));
  return worst;
}

}  // namespace voxfuse
