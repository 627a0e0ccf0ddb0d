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

#include <doctest.h>

#include <Eigen/Dense>
#include <numbers>

#include "support.hpp"
#include "voxfuse/dataset.hpp"
#include "voxfuse/error.hpp"
#include "voxfuse/pipeline.hpp"
#include "voxfuse/sensorio.hpp"
#include "voxfuse/synth.hpp"

using namespace voxfuse;

namespace {

std::vector<SceneSample> small_dataset(int n, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.num_scenes = n;
  cfg.options.max_objects = 4;
  std::vector<SceneSample> out;
  for (const auto& spec : synth_scene_specs(cfg)) out.push_back(generate_scene(spec));
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("modality sets parse and print") {
  CHECK(ModalitySet::parse("R,E,T,4R,L") == ModalitySet{});
  CHECK(ModalitySet::parse(" l ") == ModalitySet::lidar_only());
  CHECK(ModalitySet::parse("T,4R").to_string() == "T,4R");
  CHECK(ModalitySet::parse("L,R").to_string() == "R,L");
  CHECK(code_of([] { ModalitySet::parse("R,X"); }) == ErrorCode::kUnknownEnum);
  CHECK(code_of([] { ModalitySet::parse("R,E,T"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { ModalitySet::parse(""); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("every modality subset with a range sensor runs") {
  const auto data = small_dataset(1, 3);
  const Rig rig = default_rig();
  int subsets = 0;
  for (int bits = 1; bits < 32; ++bits) {
    ModalitySet m{bool(bits & 1), bool(bits & 2), bool(bits & 4), bool(bits & 8), bool(bits & 16)};
    if (!m.has_range_sensor()) continue;
    RunConfig cfg;
    cfg.modalities = m;
    const ModelWeights w = ModelWeights::random(cfg, 1);
    const FrameResult r = run_frame(data[0], rig, w, cfg);
    CHECK(r.gates.size() == m.cameras().size());
    for (double g : r.gates) {
      CHECK(g >= 0.0);
      CHECK(g <= 1.0);
    }
    CHECK(r.num_voxels > 0);
    for (const auto& b : r.detections) CHECK_NOTHROW(b.validate());
    ++subsets;
  }
  CHECK(subsets == 24);
}

TEST_CASE("pipeline output is deterministic and independent of the worker count") {
  const auto data = small_dataset(4, 11);
  const Rig rig = default_rig();
  RunConfig cfg;
  cfg.refinement = RefinementMode::kHead;
  cfg.init_seed = 5;
  const ModelWeights w = load_or_init_weights(cfg);
  const PipelineOutput a = run_pipeline(cfg, data, rig, w);
  const PipelineOutput b = run_pipeline(cfg, data, rig, w);
  cfg.jobs = 3;
  const PipelineOutput c = run_pipeline(cfg, data, rig, w);
  CHECK(a.report.to_csv() == b.report.to_csv());
  CHECK(a.report.to_csv() == c.report.to_csv());
  CHECK(detections_to_json(a.frames).dump() == detections_to_json(c.frames).dump());
  REQUIRE(a.frames.size() == 4);
  for (std::size_t i = 1; i < a.frames.size(); ++i) CHECK(a.frames[i - 1].frame_id < a.frames[i].frame_id);
}

TEST_CASE("lidar-only identity refinement finds clean vehicles") {
  const auto data = small_dataset(5, 21);
  RunConfig cfg;
  cfg.modalities = ModalitySet::lidar_only();
  const PipelineOutput out = run_pipeline(cfg, data, default_rig(), load_or_init_weights(cfg));
  const auto* row = out.report.find("all", ObjectClass::kVehicle, "all");
  REQUIRE(row);
  REQUIRE(row->result.ap.has_value());
  CHECK(*row->result.ap >= 0.9);
}

TEST_CASE("detections json round trip") {
  const auto data = small_dataset(2, 4);
  RunConfig cfg;
  const PipelineOutput out = run_pipeline(cfg, data, default_rig(), load_or_init_weights(cfg));
  const auto j = detections_to_json(out.frames);
  const auto back = detections_from_json(j);
  CHECK(detections_to_json(back) == j);
  CHECK(code_of([] { detections_from_json(nlohmann::json{{"frames", 3}}); }) == ErrorCode::kMissingField);
}

TEST_CASE("run config json round trip") {
  RunConfig cfg;
  cfg.modalities = ModalitySet::parse("T,L");
  cfg.noise.sigma_r_deg = 3.0;
  cfg.noise.seed = 9;
  cfg.attention = AttentionMode::kLiteral;
  cfg.refinement = RefinementMode::kHead;
  cfg.nms_iou = 0.55;
  cfg.data_dir = "/data/x";
  cfg.jobs = 2;
  const RunConfig back = run_config_from_json(run_config_to_json(cfg));
  CHECK(run_config_to_json(back) == run_config_to_json(cfg));
  CHECK(back.modalities == cfg.modalities);

  const RunConfig rel = run_config_from_json(nlohmann::json{{"data_dir", "frames"}}, "/base");
  CHECK(rel.data_dir == std::filesystem::path("/base/frames"));
  CHECK(code_of([] { run_config_from_json(nlohmann::json{{"attention", "sideways"}}); }) ==
        ErrorCode::kUnknownEnum);
  CHECK(code_of([] { run_config_from_json(nlohmann::json{{"jobs", 0}}).validate(); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("weights survive the tensor file round trip") {
  RunConfig cfg;
  cfg.refinement = RefinementMode::kHead;
  const ModelWeights w = ModelWeights::random(cfg, 17);
  const auto file = nn::TensorFile::from_json(w.to_tensors().to_json());
  const ModelWeights back = ModelWeights::from_tensors(file, cfg);
  CHECK(back.to_tensors().to_json() == w.to_tensors().to_json());

  const auto data = small_dataset(1, 8);
  const FrameResult a = run_frame(data[0], default_rig(), w, cfg);
  const FrameResult b = run_frame(data[0], default_rig(), back, cfg);
  CHECK(detections_to_json({a}) == detections_to_json({b}));

  RunConfig other = cfg;
  other.modalities = ModalitySet::lidar_only();
  CHECK_THROWS_AS(ModelWeights::from_tensors(file, RunConfig{}).validate(other), Error);
}

TEST_CASE("rig perturbation") {
  const Rig rig = default_rig();
  ExtrinsicNoise noise;
  CHECK(perturb_rig(rig, noise, 0) == rig);

  noise.sigma_t = 0.1;
  noise.sigma_r_deg = 2.0;
  noise.seed = 4;
  const Rig a = perturb_rig(rig, noise, 7);
  CHECK(a == perturb_rig(rig, noise, 7));
  CHECK_FALSE(a == perturb_rig(rig, noise, 8));
  CHECK(a.range_extrinsic(SensorKind::kLidarLong).t == rig.range_extrinsic(SensorKind::kLidarLong).t);

  const RigidTransform r0 = rig.range_extrinsic(SensorKind::kRadar4d);
  const RigidTransform r1 = a.range_extrinsic(SensorKind::kRadar4d);
  CHECK((r1.t - r0.t).norm() == doctest::Approx(0.1).epsilon(1e-9));
  const double angle = Eigen::AngleAxisd(r1.R * r0.R.transpose()).angle();
  CHECK(angle == doctest::Approx(2.0 * std::numbers::pi / 180.0).epsilon(1e-9));

  // The draw does not depend on the magnitude.
  ExtrinsicNoise twice = noise;
  twice.sigma_t = 0.2;
  const RigidTransform r2 = perturb_rig(rig, twice, 7).range_extrinsic(SensorKind::kRadar4d);
  CHECK(((r2.t - r0.t) - 2.0 * (r1.t - r0.t)).norm() <= 1e-12);

  // Masked-out sensors keep their calibration.
  noise.mask = ModalitySet::parse("T,L");
  const Rig b = perturb_rig(rig, noise, 7);
  CHECK(b.range_extrinsic(SensorKind::kRadar4d) == r0);
  CHECK(b.camera(ImageModality::kRgb)->R == rig.camera(ImageModality::kRgb)->R);
  CHECK_FALSE(b.camera(ImageModality::kThermal)->R == rig.camera(ImageModality::kThermal)->R);
}

TEST_CASE("datasets round trip through disk at float32 precision") {
  const auto dir = testing::scratch_dir("dataset");
  const auto data = small_dataset(3, 31);
  write_dataset(data, default_rig(), dir);
  CHECK(load_rig(dir / "rig.json") == default_rig());
  const auto back = read_dataset(dir);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].frame_id == data[i].frame_id);
    CHECK(back[i].timestamp_us == data[i].timestamp_us);
    CHECK(back[i].event_window_start_us == data[i].event_window_start_us);
    for (const auto& [k, cloud] : data[i].clouds) CHECK(back[i].clouds.at(k) == quantize_to_float32(cloud));
    CHECK(back[i].events.events == data[i].events.events);
    CHECK(back[i].boxes3d.size() == data[i].boxes3d.size());
    CHECK(back[i].conditions == data[i].conditions);
    CHECK(back[i].images.size() == data[i].images.size());
    CHECK(frame_directory(dir, data[i].frame_id).parent_path() == dir);
  }
  CHECK(code_of([&] { read_dataset(dir / "missing"); }) == ErrorCode::kIo);
}
