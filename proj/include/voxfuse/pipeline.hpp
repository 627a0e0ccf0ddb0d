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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxfuse/detect.hpp"
#include "voxfuse/eval.hpp"
#include "voxfuse/fusion.hpp"
#include "voxfuse/layers.hpp"
#include "voxfuse/types.hpp"
#include "voxfuse/voxelize.hpp"

namespace voxfuse {

/// Enabled sensors, written as a subset of "R,E,T,4R,L".
struct ModalitySet {
  bool rgb = true;
  bool event = true;
  bool thermal = true;
  bool radar = true;
  bool lidar = true;

  static ModalitySet parse(const std::string& text);
  static ModalitySet lidar_only();
  std::string to_string() const;
  bool has_range_sensor() const { return radar || lidar; }
  bool has(ImageModality m) const;
  std::vector<ImageModality> cameras() const;
  bool operator==(const ModalitySet&) const = default;
};

/// Per-frame extrinsic perturbation of the sensors named in `mask` (the
/// LiDAR is the reference frame and is never perturbed).
struct ExtrinsicNoise {
  double sigma_t = 0.0;      // metres
  double sigma_r_deg = 0.0;  // degrees
  ModalitySet mask{true, true, true, true, false};
  std::uint64_t seed = 0;

  bool active() const { return sigma_t > 0.0 || sigma_r_deg > 0.0; }
};

enum class RefinementMode {
  kIdentity,  // proposals pass through unchanged
  kHead,      // ROI-grid pooling followed by the MLP head
};

struct RunConfig {
  VoxelGridSpec grid{AxisBox{}, {0.4, 0.4, 0.4}, 2, 32, 16};
  int image_channels = 16;  // C_I
  int num_samples = 4;      // Q
  int roi_grid = 6;         // S
  double roi_radius = 0.0;  // <= 0: voxel diagonal
  int head_hidden = 64;
  double nms_iou = 0.7;
  AttentionMode attention = AttentionMode::kDeformable;
  bool normalize_sample_weights = true;
  RefinementMode refinement = RefinementMode::kIdentity;
  ProposalParams proposals;
  double ground_z = -1.9;
  double ground_clearance = 0.3;  // occupancy ignores voxels below ground_z + this
  EvalConfig eval;
  ModalitySet modalities;
  ExtrinsicNoise noise;
  std::uint64_t init_seed = 0;
  std::optional<std::filesystem::path> weights_path;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> rig_path;
  int jobs = 1;

  void validate() const;
  double pooling_radius() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults. Relative paths resolve against `base`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});

/// Stand-in weights for every learned stage.
struct ModelWeights {
  std::map<SensorKind, nn::Linear> lift;  // (C_p + 3) -> C_V
  FusionProjector projector;              // 2 C_V -> C_V
  nn::Conv2d bev_lidar;                   // C_V -> C_B
  nn::Conv2d bev_radar;                   // C_V -> C_B
  nn::Conv2d bev_fuse;                    // 2 C_B -> C_B
  std::map<ImageModality, ImageBackboneStub> backbones;
  FusionWeights fusion;
  RefinementConfig refine;

  void validate(const RunConfig& cfg) const;
  static ModelWeights random(const RunConfig& cfg, std::uint64_t seed);
  nn::TensorFile to_tensors() const;
  static ModelWeights from_tensors(const nn::TensorFile& file, const RunConfig& cfg);
};

/// Random weights from cfg.init_seed, or the weight file when given.
ModelWeights load_or_init_weights(const RunConfig& cfg);

/// Rig with noisy extrinsics for one frame; the draw depends only on
/// (noise.seed, frame_id, sensor), never on the magnitudes.
Rig perturb_rig(const Rig& rig, const ExtrinsicNoise& noise, std::int64_t frame_id);

struct FrameResult {
  std::int64_t frame_id = 0;
  std::vector<Box3D> detections;
  std::vector<double> gates;  // one per enabled camera, in ImageModality order
  std::size_t num_voxels = 0;
  std::size_t num_proposals = 0;
};

FrameResult run_frame(const SceneSample& sample, const Rig& rig, const ModelWeights& weights,
                      const RunConfig& cfg);

struct PipelineOutput {
  std::vector<FrameResult> frames;  // ordered by frame id
  APReport report;
};

/// Runs every frame on cfg.jobs workers and evaluates against the samples'
/// annotations. Output does not depend on the worker count.
PipelineOutput run_pipeline(const RunConfig& cfg, const std::vector<SceneSample>& samples,
                            const Rig& rig, const ModelWeights& weights);

std::vector<FrameDetections> to_frame_detections(const std::vector<FrameResult>& results,
                                                 const std::vector<SceneSample>& samples);

nlohmann::json detections_to_json(const std::vector<FrameResult>& results);
std::vector<FrameResult> detections_from_json(const nlohmann::json& j);

}  // namespace voxfuse
