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

#include "voxfuse/fusion.hpp"

#include <array>
#include <cmath>
#include <string>
#include <tuple>

#include "voxfuse/error.hpp"

namespace voxfuse {

int default_downsample(ImageModality m) {
  switch (m) {
    case ImageModality::kRgb: return 4;
    case ImageModality::kThermal: return 1;
    case ImageModality::kEventGrid: return 2;
  }
  return 1;
}

Grid downsample_mean(const Grid& image, int factor) {
  if (factor < 1) throw Error(ErrorCode::kInvalidArgument, "downsample factor must be >= 1");
  if (factor == 1) return image;
  const int rows = image.rows() / factor;
  const int cols = image.cols() / factor;
  Grid out(rows, cols, image.channels());
  const double norm = 1.0 / (factor * factor);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto dst = out.pixel(r, c);
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          const auto src = image.pixel(r * factor + dy, c * factor + dx);
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k] * norm;
        }
      }
    }
  }
  return out;
}

ImageBackboneStub ImageBackboneStub::random(ImageModality m, int out_channels,
                                            std::mt19937_64& rng) {
  ImageBackboneStub stub;
  stub.downsample = default_downsample(m);
  stub.conv1 = nn::Conv2d::random(expected_channels(m), out_channels, 3, 2, 1, true, rng);
  stub.conv2 = nn::Conv2d::random(out_channels, out_channels, 3, 2, 1, true, rng);
  return stub;
}

ImageFeatureMap extract_image_features(const CameraImage& img, const ImageBackboneStub& stub) {
  if (img.data.channels() != expected_channels(img.modality) ||
      img.data.channels() != stub.conv1.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, std::string(to_string(img.modality)) +
                                               " image does not match the backbone input");
  }
  const Grid small = downsample_mean(img.data, stub.downsample);
  ImageFeatureMap fmap;
  fmap.modality = img.modality;
  fmap.features = stub.conv2.forward(stub.conv1.forward(small));
  fmap.stride = stub.stride();
  return fmap;
}

Eigen::VectorXd bilinear_sample(const Grid& map, double x, double y) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(map.channels());
  if (!std::isfinite(x) || !std::isfinite(y)) return out;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  // Far outside: every tap is padding.
  if (fx < -1.0 || fy < -1.0 || fx > map.cols() || fy > map.rows()) return out;
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const std::array<std::tuple<int, int, double>, 4> taps = {{
      {y0, x0, (1 - ax) * (1 - ay)},
      {y0, x0 + 1, ax * (1 - ay)},
      {y0 + 1, x0, (1 - ax) * ay},
      {y0 + 1, x0 + 1, ax * ay},
  }};
  for (const auto& [r, c, wgt] : taps) {
    if (r < 0 || c < 0 || r >= map.rows() || c >= map.cols() || wgt == 0.0) continue;
    const auto px = map.pixel(r, c);
    for (int k = 0; k < map.channels(); ++k) out(k) += wgt * px[static_cast<std::size_t>(k)];
  }
  return out;
}

void FusionWeights::validate(int voxel_channels, int image_channels) const {
  if (num_samples < 1) throw Error(ErrorCode::kInvalidArgument, "Q must be >= 1");
  for (const auto& [m, b] : branches) {
    const int d = b.query.out_features();
    const bool ok = b.sampler.in_features() == voxel_channels &&
                    b.sampler.out_features() == 3 * num_samples &&
                    b.query.in_features() == voxel_channels && b.key.in_features() == image_channels &&
                    b.key.out_features() == d && b.value.in_features() == image_channels &&
                    b.output.in_features() == b.value.out_features() &&
                    b.output.out_features() == voxel_channels;
    if (!ok) {
      throw Error(ErrorCode::kShapeMismatch,
                  std::string(to_string(m)) + " fusion branch has inconsistent shapes");
    }
  }
  if (ffn.hidden.in_features() != (camera_count() + 1) * voxel_channels ||
      ffn.output.out_features() != voxel_channels) {
    throw Error(ErrorCode::kShapeMismatch, "FFN must map (K+1)*C_V -> C_V");
  }
}

FusionWeights FusionWeights::random(int voxel_channels, int image_channels,
                                    const std::vector<ImageModality>& cameras, int num_samples,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FusionWeights w;
  w.num_samples = num_samples;
  const int d = voxel_channels;
  for (ImageModality m : cameras) {
    CameraBranchWeights b;
    b.sampler = nn::Linear::random(voxel_channels, 3 * num_samples, rng);
    b.query = nn::Linear::random(voxel_channels, d, rng);
    b.key = nn::Linear::random(image_channels, d, rng);
    b.value = nn::Linear::random(image_channels, d, rng);
    b.output = nn::Linear::random(d, voxel_channels, rng);
    w.branches.emplace(m, std::move(b));
  }
  const int k = static_cast<int>(w.branches.size());
  w.ffn.hidden = nn::Linear::random((k + 1) * voxel_channels, voxel_channels, rng);
  w.ffn.output = nn::Linear::random(voxel_channels, voxel_channels, rng);
  return w;
}

AttentionResult attention(const Eigen::VectorXd& query, const Eigen::MatrixXd& keys,
                          const Eigen::MatrixXd& values, const Eigen::VectorXd* log_prior) {
  if (keys.cols() != query.size() || keys.rows() != values.rows() || keys.rows() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "attention operands disagree");
  }
  Eigen::VectorXd logits = keys * query / std::sqrt(static_cast<double>(query.size()));
  if (log_prior != nullptr) logits += *log_prior;
  AttentionResult r;
  r.weights = nn::softmax(logits);
  r.output = values.transpose() * r.weights;
  return r;
}

Eigen::MatrixXd attention_query_jacobian(const Eigen::VectorXd& query, const Eigen::MatrixXd& keys,
                                         const Eigen::MatrixXd& values,
                                         const Eigen::VectorXd* log_prior) {
  const AttentionResult r = attention(query, keys, values, log_prior);
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
  // d out / d logits_q = alpha_q (v_q - out); d logits_q / d query = k_q * scale.
  Eigen::MatrixXd centered = values.rowwise() - r.output.transpose();
  return scale * centered.transpose() * r.weights.asDiagonal() * keys;
}

VoxelSampling sample_voxel(const Eigen::VectorXd& voxel_feature, const Eigen::Vector3d& center,
                           const ImageFeatureMap& fmap, const CameraModel& cam,
                           const ProjectionMatrix& M, const CameraBranchWeights& branch,
                           const FusionWeights& weights) {
  VoxelSampling s;
  s.enhanced = voxel_feature;
  const auto proj = try_project_point(M, center);
  if (!proj || proj->u < 0.0 || proj->v < 0.0 || proj->u >= cam.width || proj->v >= cam.height) {
    return s;
  }
  s.visible = true;
  const int q_count = weights.num_samples;
  s.anchor = Eigen::Vector2d(proj->u, proj->v) / fmap.stride;

  const Eigen::VectorXd raw = branch.sampler(voxel_feature);
  Eigen::VectorXd logits(q_count);
  for (int q = 0; q < q_count; ++q) logits(q) = raw(3 * q + 2);
  s.sample_weights = weights.normalize_sample_weights ? nn::softmax(logits) : logits;

  s.samples.resize(q_count, fmap.features.channels());
  s.locations.resize(static_cast<std::size_t>(q_count));
  for (int q = 0; q < q_count; ++q) {
    const Eigen::Vector2d loc = s.anchor + Eigen::Vector2d(raw(3 * q), raw(3 * q + 1));
    s.locations[static_cast<std::size_t>(q)] = loc;
    s.samples.row(q) = bilinear_sample(fmap.features, loc.x(), loc.y()).transpose();
  }
  s.aggregated = s.samples.transpose() * s.sample_weights;

  const Eigen::VectorXd query = branch.query(voxel_feature);
  AttentionResult att;
  if (weights.mode == AttentionMode::kLiteral) {
    const Eigen::MatrixXd kv = s.aggregated.transpose();
    att = attention(query, branch.key.apply_rows(kv), branch.value.apply_rows(kv));
  } else if (weights.normalize_sample_weights) {
    const Eigen::VectorXd log_prior =
        (logits.array() - logits.maxCoeff()).matrix() -
        Eigen::VectorXd::Constant(q_count,
                                  std::log((logits.array() - logits.maxCoeff()).exp().sum()));
    att = attention(query, branch.key.apply_rows(s.samples), branch.value.apply_rows(s.samples),
                    &log_prior);
  } else {
    const Eigen::MatrixXd scaled = s.sample_weights.asDiagonal() * s.samples;
    att = attention(query, branch.key.apply_rows(s.samples), branch.value.apply_rows(scaled));
  }
  s.attention_weights = att.weights;
  s.enhanced = voxel_feature + branch.output(att.output);
  return s;
}

Eigen::MatrixXd enhance_voxels(const SparseVoxelSet& voxels, const ImageFeatureMap& fmap,
                               const CameraModel& cam, const FusionWeights& weights) {
  auto it = weights.branches.find(fmap.modality);
  if (it == weights.branches.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "no fusion branch for " + std::string(to_string(fmap.modality)));
  }
  const ProjectionMatrix M = projection_matrix(cam);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(voxels.size()), voxels.channels());
  for (std::size_t j = 0; j < voxels.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd f = voxels.features.row(row).transpose();
    out.row(row) =
        sample_voxel(f, voxels.center(j), fmap, cam, M, it->second, weights).enhanced.transpose();
  }
  return out;
}

GateResult gate_and_reweight(const std::vector<Eigen::MatrixXd>& blocks) {
  GateResult r;
  for (const auto& b : blocks) {
    if (b.size() == 0) throw Error(ErrorCode::kEmptyInput, "gating needs at least one voxel");
    if (b.rows() != blocks.front().rows() || b.cols() != blocks.front().cols()) {
      throw Error(ErrorCode::kShapeMismatch, "camera blocks differ in shape");
    }
    const double g = nn::sigmoid(b.mean());
    r.gates.push_back(g);
    r.reweighted.push_back(b * g);
  }
  return r;
}

double gate_gradient(const Eigen::MatrixXd& block) {
  if (block.size() == 0) throw Error(ErrorCode::kEmptyInput, "gating needs at least one voxel");
  const double g = nn::sigmoid(block.mean());
  return g * (1.0 - g) / static_cast<double>(block.size());
}

Eigen::MatrixXd fuse_final(const std::vector<Eigen::MatrixXd>& gated,
                           const Eigen::MatrixXd& original, const nn::Mlp& ffn) {
  const Eigen::Index n = original.rows();
  const Eigen::Index c = original.cols();
  for (const auto& g : gated) {
    if (g.rows() != n || g.cols() != c) {
      throw Error(ErrorCode::kShapeMismatch, "gated block not aligned with voxel features");
    }
  }
  Eigen::MatrixXd cat(n, c * static_cast<Eigen::Index>(gated.size() + 1));
  for (std::size_t k = 0; k < gated.size(); ++k) {
    cat.middleCols(static_cast<Eigen::Index>(k) * c, c) = gated[k];
  }
  cat.rightCols(c) = original;
  return ffn.apply_rows(cat);
}

}  // namespace voxfuse
