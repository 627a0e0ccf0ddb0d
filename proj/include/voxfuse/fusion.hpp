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
#include <map>
#include <optional>
#include <vector>

#include "voxfuse/geometry.hpp"
#include "voxfuse/layers.hpp"
#include "voxfuse/types.hpp"
#include "voxfuse/voxelize.hpp"

namespace voxfuse {

/// Per-modality input downsampling applied before the stride-4 stub:
/// rgb 1/4, thermal 1, event 1/2.
int default_downsample(ImageModality m);

/// Block-mean downsampling by an integer factor (trailing partial blocks are
/// dropped).
Grid downsample_mean(const Grid& image, int factor);

/// Stand-in for the 2D image backbone: two stride-2 3x3 convs with ReLU.
struct ImageBackboneStub {
  int downsample = 1;
  nn::Conv2d conv1;
  nn::Conv2d conv2;

  int stride() const { return downsample * conv1.stride * conv2.stride; }
  static ImageBackboneStub random(ImageModality m, int out_channels, std::mt19937_64& rng);
};

struct ImageFeatureMap {
  ImageModality modality = ImageModality::kRgb;
  Grid features;  // (H / stride) x (W / stride) x C_I
  int stride = 4;  // full-resolution pixels per feature cell
};

ImageFeatureMap extract_image_features(const CameraImage& img, const ImageBackboneStub& stub);

/// Bilinear read at continuous feature-map coordinates (x = column, y = row,
/// cell centres at integers). Taps outside the map read as zero.
Eigen::VectorXd bilinear_sample(const Grid& map, double x, double y);

enum class AttentionMode {
  // The Q deformable samples are the keys/values; the sampling weights enter
  // as a log-prior on the attention logits.
  kDeformable,
  // Attention with the single aggregated feature as key and value.
  kLiteral,
};

struct CameraBranchWeights {
  nn::Linear sampler;  // C_V -> 3Q: (dx, dy, weight logit) per sample
  nn::Linear query;    // C_V -> d
  nn::Linear key;      // C_I -> d
  nn::Linear value;    // C_I -> d
  nn::Linear output;   // d -> C_V
};

struct FusionWeights {
  int num_samples = 4;  // Q
  AttentionMode mode = AttentionMode::kDeformable;
  bool normalize_sample_weights = true;
  std::map<ImageModality, CameraBranchWeights> branches;
  nn::Mlp ffn;  // (K + 1) C_V -> C_V, K = branches.size()

  int camera_count() const { return static_cast<int>(branches.size()); }
  void validate(int voxel_channels, int image_channels) const;

  // Uniform +-1/sqrt(fan_in) initialization; the attention width equals C_V.
  static FusionWeights random(int voxel_channels, int image_channels,
                              const std::vector<ImageModality>& cameras, int num_samples,
                              std::uint64_t seed);
};

struct AttentionResult {
  Eigen::VectorXd output;
  Eigen::VectorXd weights;  // softmax over keys
};

/// Single-head scaled dot-product attention; `log_prior` (optional, one per
/// key) is added to the logits before the softmax.
AttentionResult attention(const Eigen::VectorXd& query, const Eigen::MatrixXd& keys,
                          const Eigen::MatrixXd& values,
                          const Eigen::VectorXd* log_prior = nullptr);

/// d attention(query).output / d query, a (value width) x (query width)
/// matrix.
Eigen::MatrixXd attention_query_jacobian(const Eigen::VectorXd& query, const Eigen::MatrixXd& keys,
                                         const Eigen::MatrixXd& values,
                                         const Eigen::VectorXd* log_prior = nullptr);

/// Intermediate quantities of the deformable sampling step for one voxel.
struct VoxelSampling {
  bool visible = false;
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();  // projected centre, feature-map units
  std::vector<Eigen::Vector2d> locations;           // anchor + offsets
  Eigen::VectorXd sample_weights;                   // w_q
  Eigen::MatrixXd samples;                          // Q x C_I
  Eigen::VectorXd aggregated;                       // sum_q w_q * sample_q
  Eigen::VectorXd attention_weights;
  Eigen::VectorXd enhanced;                         // f + W_o * attention output
};

VoxelSampling sample_voxel(const Eigen::VectorXd& voxel_feature, const Eigen::Vector3d& center,
                           const ImageFeatureMap& fmap, const CameraModel& cam,
                           const ProjectionMatrix& M, const CameraBranchWeights& branch,
                           const FusionWeights& weights);

/// Image-enhanced features for every voxel (N x C_V). Voxels behind the
/// camera or projecting outside the image keep their own feature.
Eigen::MatrixXd enhance_voxels(const SparseVoxelSet& voxels, const ImageFeatureMap& fmap,
                               const CameraModel& cam, const FusionWeights& weights);

struct GateResult {
  std::vector<double> gates;
  std::vector<Eigen::MatrixXd> reweighted;
};

/// gate_m = sigmoid(mean of all N_V x C_V entries of block m); every block is
/// scaled by its gate. Throws kEmptyInput when N_V = 0.
GateResult gate_and_reweight(const std::vector<Eigen::MatrixXd>& blocks);

/// d gate / d (any single entry) of a block.
double gate_gradient(const Eigen::MatrixXd& block);

/// Per voxel: FFN([gated_1 | ... | gated_K | original]).
Eigen::MatrixXd fuse_final(const std::vector<Eigen::MatrixXd>& gated,
                           const Eigen::MatrixXd& original, const nn::Mlp& ffn);

}  // namespace voxfuse
