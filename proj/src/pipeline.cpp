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

#include "voxfuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "voxfuse/error.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/random.hpp"
#include "voxfuse/sensorio.hpp"

namespace voxfuse {

using nlohmann::json;

ModalitySet ModalitySet::parse(const std::string& text) {
  ModalitySet m{false, false, false, false, false};
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }),
              tok.end());
    for (char& c : tok) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (tok == "R") m.rgb = true;
    else if (tok == "E") m.event = true;
    else if (tok == "T") m.thermal = true;
    else if (tok == "4R") m.radar = true;
    else if (tok == "L") m.lidar = true;
    else if (!tok.empty()) throw Error(ErrorCode::kUnknownEnum, "modality '" + tok + "'");
  }
  if (!m.has_range_sensor()) {
    throw Error(ErrorCode::kInvalidArgument, "modalities must include 4R or L");
  }
  return m;
}

ModalitySet ModalitySet::lidar_only() { return {false, false, false, false, true}; }

std::string ModalitySet::to_string() const {
  std::vector<std::string> parts;
  if (rgb) parts.emplace_back("R");
  if (event) parts.emplace_back("E");
  if (thermal) parts.emplace_back("T");
  if (radar) parts.emplace_back("4R");
  if (lidar) parts.emplace_back("L");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

bool ModalitySet::has(ImageModality m) const {
  switch (m) {
    case ImageModality::kRgb: return rgb;
    case ImageModality::kThermal: return thermal;
    case ImageModality::kEventGrid: return event;
  }
  return false;
}

std::vector<ImageModality> ModalitySet::cameras() const {
  std::vector<ImageModality> out;
  for (ImageModality m : {ImageModality::kRgb, ImageModality::kThermal, ImageModality::kEventGrid}) {
    if (has(m)) out.push_back(m);
  }
  return out;
}

void RunConfig::validate() const {
  grid.validate();
  if (!modalities.has_range_sensor()) {
    throw Error(ErrorCode::kInvalidArgument, "modalities must include 4R or L");
  }
  if (image_channels < 1 || num_samples < 1 || roi_grid < 1 || head_hidden < 1) {
    throw Error(ErrorCode::kInvalidArgument, "channel counts, Q and S must be >= 1");
  }
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "NMS threshold must lie in [0,1]");
  }
  if (proposals.capacity < 1) throw Error(ErrorCode::kInvalidArgument, "capacity must be >= 1");
  if (noise.sigma_t < 0.0 || noise.sigma_r_deg < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise magnitudes must be >= 0");
  }
  if (jobs < 1) throw Error(ErrorCode::kInvalidArgument, "--jobs must be >= 1");
}

double RunConfig::pooling_radius() const {
  return roi_radius > 0.0 ? roi_radius : std::sqrt(3.0) * grid.voxel_size.maxCoeff();
}

namespace {

const char* attention_name(AttentionMode m) {
  return m == AttentionMode::kLiteral ? "literal" : "deformable";
}

const char* refinement_name(RefinementMode m) {
  return m == RefinementMode::kHead ? "head" : "identity";
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kInvalidArgument, "expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

json run_config_to_json(const RunConfig& cfg) {
  json bins = json::array();
  for (const auto& b : cfg.eval.bins) bins.push_back({b.lo, b.hi});
  json j = {
      {"grid",
       {{"range_min", vec3(cfg.grid.range.min)},
        {"range_max", vec3(cfg.grid.range.max)},
        {"voxel_size", vec3(cfg.grid.voxel_size)},
        {"bev_stride", cfg.grid.bev_stride},
        {"voxel_channels", cfg.grid.voxel_channels},
        {"bev_channels", cfg.grid.bev_channels}}},
      {"image_channels", cfg.image_channels},
      {"num_samples", cfg.num_samples},
      {"roi_grid", cfg.roi_grid},
      {"roi_radius", cfg.roi_radius},
      {"head_hidden", cfg.head_hidden},
      {"nms_iou", cfg.nms_iou},
      {"attention", attention_name(cfg.attention)},
      {"normalize_sample_weights", cfg.normalize_sample_weights},
      {"refinement", refinement_name(cfg.refinement)},
      {"proposals",
       {{"capacity", cfg.proposals.capacity},
        {"min_cell_points", cfg.proposals.min_cell_points},
        {"min_component_cells", cfg.proposals.min_component_cells},
        {"score_half_cells", cfg.proposals.score_half_cells},
        {"xy_margin", cfg.proposals.xy_margin},
        {"z_margin", cfg.proposals.z_margin},
        {"vehicle_min_length", cfg.proposals.vehicle_min_length},
        {"bike_min_length", cfg.proposals.bike_min_length}}},
      {"ground_z", cfg.ground_z},
      {"ground_clearance", cfg.ground_clearance},
      {"eval",
       {{"iou_vehicle", cfg.eval.thresholds.vehicle},
        {"iou_pedestrian", cfg.eval.thresholds.pedestrian},
        {"iou_bike", cfg.eval.thresholds.bike},
        {"x_min", cfg.eval.x_min},
        {"x_max", cfg.eval.x_max},
        {"bins", bins}}},
      {"modalities", cfg.modalities.to_string()},
      {"noise",
       {{"sigma_t", cfg.noise.sigma_t},
        {"sigma_r_deg", cfg.noise.sigma_r_deg},
        {"mask", cfg.noise.mask.to_string()},
        {"seed", cfg.noise.seed}}},
      {"init_seed", cfg.init_seed},
      {"data_dir", cfg.data_dir.string()},
      {"jobs", cfg.jobs},
  };
  if (cfg.weights_path) j["weights"] = cfg.weights_path->string();
  if (cfg.rig_path) j["rig"] = cfg.rig_path->string();
  return j;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "run config must be an object");
  RunConfig cfg;
  auto get = [](const json& o, const char* key, auto& dst) {
    if (o.contains(key)) dst = o.at(key).get<std::decay_t<decltype(dst)>>();
  };
  try {
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      if (g.contains("range_min")) cfg.grid.range.min = vec3_from(g.at("range_min"));
      if (g.contains("range_max")) cfg.grid.range.max = vec3_from(g.at("range_max"));
      if (g.contains("voxel_size")) cfg.grid.voxel_size = vec3_from(g.at("voxel_size"));
      get(g, "bev_stride", cfg.grid.bev_stride);
      get(g, "voxel_channels", cfg.grid.voxel_channels);
      get(g, "bev_channels", cfg.grid.bev_channels);
    }
    get(j, "image_channels", cfg.image_channels);
    get(j, "num_samples", cfg.num_samples);
    get(j, "roi_grid", cfg.roi_grid);
    get(j, "roi_radius", cfg.roi_radius);
    get(j, "head_hidden", cfg.head_hidden);
    get(j, "nms_iou", cfg.nms_iou);
    if (j.contains("attention")) {
      const auto a = j.at("attention").get<std::string>();
      if (a == "deformable") cfg.attention = AttentionMode::kDeformable;
      else if (a == "literal") cfg.attention = AttentionMode::kLiteral;
      else throw Error(ErrorCode::kUnknownEnum, "attention '" + a + "'");
    }
    get(j, "normalize_sample_weights", cfg.normalize_sample_weights);
    if (j.contains("refinement")) {
      const auto r = j.at("refinement").get<std::string>();
      if (r == "identity") cfg.refinement = RefinementMode::kIdentity;
      else if (r == "head") cfg.refinement = RefinementMode::kHead;
      else throw Error(ErrorCode::kUnknownEnum, "refinement '" + r + "'");
    }
    if (j.contains("proposals")) {
      const json& p = j.at("proposals");
      get(p, "capacity", cfg.proposals.capacity);
      get(p, "min_cell_points", cfg.proposals.min_cell_points);
      get(p, "min_component_cells", cfg.proposals.min_component_cells);
      get(p, "score_half_cells", cfg.proposals.score_half_cells);
      get(p, "xy_margin", cfg.proposals.xy_margin);
      get(p, "z_margin", cfg.proposals.z_margin);
      get(p, "vehicle_min_length", cfg.proposals.vehicle_min_length);
      get(p, "bike_min_length", cfg.proposals.bike_min_length);
    }
    get(j, "ground_z", cfg.ground_z);
    get(j, "ground_clearance", cfg.ground_clearance);
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      get(e, "iou_vehicle", cfg.eval.thresholds.vehicle);
      get(e, "iou_pedestrian", cfg.eval.thresholds.pedestrian);
      get(e, "iou_bike", cfg.eval.thresholds.bike);
      get(e, "x_min", cfg.eval.x_min);
      get(e, "x_max", cfg.eval.x_max);
      if (e.contains("bins")) {
        cfg.eval.bins.clear();
        for (const auto& b : e.at("bins")) {
          cfg.eval.bins.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
        }
      }
    }
    if (j.contains("modalities")) {
      cfg.modalities = ModalitySet::parse(j.at("modalities").get<std::string>());
    }
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      get(n, "sigma_t", cfg.noise.sigma_t);
      get(n, "sigma_r_deg", cfg.noise.sigma_r_deg);
      get(n, "seed", cfg.noise.seed);
      if (n.contains("mask")) {
        // The mask may name cameras only, so skip the range-sensor check.
        ModalitySet m{false, false, false, false, false};
        const std::string text = n.at("mask").get<std::string>();
        if (!text.empty()) {
          m = ModalitySet::parse(text + ",L");
          m.lidar = text.find('L') != std::string::npos;
        }
        cfg.noise.mask = m;
      }
    }
    get(j, "init_seed", cfg.init_seed);
    if (j.contains("weights")) cfg.weights_path = resolve(base, j.at("weights").get<std::string>());
    if (j.contains("rig")) cfg.rig_path = resolve(base, j.at("rig").get<std::string>());
    if (j.contains("data_dir")) cfg.data_dir = resolve(base, j.at("data_dir").get<std::string>());
    get(j, "jobs", cfg.jobs);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("run config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void ModelWeights::validate(const RunConfig& cfg) const {
  const int cv = cfg.grid.voxel_channels;
  const int cb = cfg.grid.bev_channels;
  auto need_lift = [&](SensorKind s) {
    auto it = lift.find(s);
    if (it == lift.end()) {
      throw Error(ErrorCode::kMissingField, "no lift weights for " + std::string(to_string(s)));
    }
    if (it->second.in_features() != default_feature_channels(s) + 3 ||
        it->second.out_features() != cv) {
      throw Error(ErrorCode::kShapeMismatch, "lift weights for " + std::string(to_string(s)));
    }
  };
  if (cfg.modalities.lidar) need_lift(SensorKind::kLidarLong);
  if (cfg.modalities.radar) need_lift(SensorKind::kRadar4d);
  if (bev_lidar.in_channels != cv || bev_radar.in_channels != cv || bev_lidar.out_channels != cb ||
      bev_radar.out_channels != cb || bev_fuse.in_channels != 2 * cb || bev_fuse.out_channels != cb) {
    throw Error(ErrorCode::kShapeMismatch, "BEV conv weights do not match the grid channels");
  }
  for (ImageModality m : cfg.modalities.cameras()) {
    auto it = backbones.find(m);
    if (it == backbones.end() || fusion.branches.count(m) == 0) {
      throw Error(ErrorCode::kMissingField,
                  "no image weights for " + std::string(to_string(m)));
    }
    if (it->second.conv2.out_channels != cfg.image_channels) {
      throw Error(ErrorCode::kShapeMismatch, "image backbone width != image_channels");
    }
  }
  if (fusion.camera_count() != static_cast<int>(cfg.modalities.cameras().size())) {
    throw Error(ErrorCode::kShapeMismatch, "fusion weights cover a different camera set");
  }
  fusion.validate(cv, cfg.image_channels);
  if (cfg.refinement == RefinementMode::kHead) refine.validate(cv);
}

ModelWeights ModelWeights::random(const RunConfig& cfg, std::uint64_t seed) {
  const int cv = cfg.grid.voxel_channels;
  const int cb = cfg.grid.bev_channels;
  ModelWeights w;
  std::mt19937_64 rng(derive_seed(seed, 1));
  for (SensorKind s : {SensorKind::kLidarLong, SensorKind::kRadar4d}) {
    w.lift[s] = nn::Linear::random(default_feature_channels(s) + 3, cv, rng);
  }
  w.projector.map = nn::Linear::random(2 * cv, cv, rng);
  // BEV convs are bias-free.
  w.bev_lidar = nn::Conv2d::random(cv, cb, 3, 1, 1, true, rng);
  w.bev_radar = nn::Conv2d::random(cv, cb, 3, 1, 1, true, rng);
  w.bev_fuse = nn::Conv2d::random(2 * cb, cb, 3, 1, 1, true, rng);
  for (auto* c : {&w.bev_lidar, &w.bev_radar, &w.bev_fuse}) {
    std::fill(c->bias.begin(), c->bias.end(), 0.0);
  }
  for (ImageModality m : cfg.modalities.cameras()) {
    std::mt19937_64 brng(derive_seed(seed, 10 + static_cast<std::uint64_t>(m)));
    w.backbones[m] = ImageBackboneStub::random(m, cfg.image_channels, brng);
  }
  w.fusion = FusionWeights::random(cv, cfg.image_channels, cfg.modalities.cameras(),
                                   cfg.num_samples, derive_seed(seed, 2));
  w.fusion.mode = cfg.attention;
  w.fusion.normalize_sample_weights = cfg.normalize_sample_weights;
  w.refine = RefinementConfig::random(cv, cfg.roi_grid, cfg.head_hidden, derive_seed(seed, 3));
  w.refine.radius = cfg.pooling_radius();
  return w;
}

nn::TensorFile ModelWeights::to_tensors() const {
  nn::TensorFile f;
  for (const auto& [s, l] : lift) f.put("lift." + std::string(to_string(s)), l);
  f.put("projector", projector.map);
  f.put("bev.lidar", bev_lidar);
  f.put("bev.radar", bev_radar);
  f.put("bev.fuse", bev_fuse);
  for (const auto& [m, b] : backbones) {
    const std::string p = "backbone." + std::string(to_string(m));
    f.put(p + ".conv1", b.conv1);
    f.put(p + ".conv2", b.conv2);
  }
  for (const auto& [m, b] : fusion.branches) {
    const std::string p = "fusion." + std::string(to_string(m));
    f.put(p + ".sampler", b.sampler);
    f.put(p + ".query", b.query);
    f.put(p + ".key", b.key);
    f.put(p + ".value", b.value);
    f.put(p + ".output", b.output);
  }
  f.put("fusion.ffn", fusion.ffn);
  f.put("refine.head", refine.head);
  return f;
}

ModelWeights ModelWeights::from_tensors(const nn::TensorFile& f, const RunConfig& cfg) {
  ModelWeights w;
  for (SensorKind s : {SensorKind::kLidarLong, SensorKind::kRadar4d}) {
    const std::string name = "lift." + std::string(to_string(s));
    if (f.has(name)) w.lift[s] = f.get_linear(name);
  }
  w.projector.map = f.get_linear("projector");
  w.bev_lidar = f.get_conv("bev.lidar");
  w.bev_radar = f.get_conv("bev.radar");
  w.bev_fuse = f.get_conv("bev.fuse");
  for (ImageModality m : cfg.modalities.cameras()) {
    const std::string bp = "backbone." + std::string(to_string(m));
    ImageBackboneStub stub;
    stub.downsample = default_downsample(m);
    stub.conv1 = f.get_conv(bp + ".conv1");
    stub.conv2 = f.get_conv(bp + ".conv2");
    w.backbones[m] = stub;
    const std::string fp = "fusion." + std::string(to_string(m));
    CameraBranchWeights b;
    b.sampler = f.get_linear(fp + ".sampler");
    b.query = f.get_linear(fp + ".query");
    b.key = f.get_linear(fp + ".key");
    b.value = f.get_linear(fp + ".value");
    b.output = f.get_linear(fp + ".output");
    w.fusion.branches[m] = b;
  }
  w.fusion.num_samples = cfg.num_samples;
  w.fusion.mode = cfg.attention;
  w.fusion.normalize_sample_weights = cfg.normalize_sample_weights;
  w.fusion.ffn = f.get_mlp("fusion.ffn");
  w.refine.grid_size = cfg.roi_grid;
  w.refine.radius = cfg.pooling_radius();
  if (cfg.refinement == RefinementMode::kHead) w.refine.head = f.get_mlp("refine.head");
  w.validate(cfg);
  return w;
}

ModelWeights load_or_init_weights(const RunConfig& cfg) {
  if (cfg.weights_path) {
    return ModelWeights::from_tensors(nn::TensorFile::from_json(read_json_file(*cfg.weights_path)),
                                      cfg);
  }
  ModelWeights w = ModelWeights::random(cfg, cfg.init_seed);
  w.validate(cfg);
  return w;
}

Rig perturb_rig(const Rig& rig, const ExtrinsicNoise& noise, std::int64_t frame_id) {
  if (!noise.active()) return rig;
  Rig out = rig;
  const std::uint64_t frame_seed = derive_seed(noise.seed, static_cast<std::uint64_t>(frame_id));
  if (noise.mask.radar && out.range_sensors.count(SensorKind::kRadar4d) != 0) {
    auto& tf = out.range_sensors[SensorKind::kRadar4d];
    tf = perturb_extrinsics(tf, noise.sigma_t, noise.sigma_r_deg, derive_seed(frame_seed, 100));
  }
  for (auto& cam : out.cameras) {
    if (!noise.mask.has(cam.modality)) continue;
    const RigidTransform tf = perturb_extrinsics(
        cam.extrinsic(), noise.sigma_t, noise.sigma_r_deg,
        derive_seed(frame_seed, 200 + static_cast<std::uint64_t>(cam.modality)));
    cam.R = tf.R;
    cam.t = tf.t;
  }
  return out;
}

namespace {

SparseVoxelSet voxelize_sensor(const SceneSample& sample, const Rig& rig, SensorKind sensor,
                               const ModelWeights& weights, const RunConfig& cfg) {
  auto it = sample.clouds.find(sensor);
  if (it == sample.clouds.end()) {
    throw Error(ErrorCode::kMissingField, "frame " + std::to_string(sample.frame_id) + " has no " +
                                              std::string(to_string(sensor)) + " cloud");
  }
  if (sensor != SensorKind::kLidarLong && rig.range_sensors.count(sensor) == 0) {
    throw Error(ErrorCode::kMissingField,
                "rig has no extrinsic for " + std::string(to_string(sensor)));
  }
  const RigidTransform ext = rig.range_extrinsic(sensor);
  PointCloud ref = it->second;
  for (auto& p : ref.points) p = ext.apply(p);
  return voxelize_points(filter_to_range(ref, cfg.grid.range), cfg.grid, weights.lift.at(sensor));
}

}  // namespace

FrameResult run_frame(const SceneSample& sample, const Rig& base_rig, const ModelWeights& weights,
                      const RunConfig& cfg) {
  const Rig rig = perturb_rig(base_rig, cfg.noise, sample.frame_id);
  FrameResult result;
  result.frame_id = sample.frame_id;

  SparseVoxelSet voxels;
  Grid bev;
  if (cfg.modalities.lidar && cfg.modalities.radar) {
    const SparseVoxelSet lidar = voxelize_sensor(sample, rig, SensorKind::kLidarLong, weights, cfg);
    const SparseVoxelSet radar = voxelize_sensor(sample, rig, SensorKind::kRadar4d, weights, cfg);
    voxels = union_fuse(lidar, radar, weights.projector);
    bev = bev_concat_fuse(bev_collapse(lidar, {weights.bev_lidar}),
                          bev_collapse(radar, {weights.bev_radar}), weights.bev_fuse);
  } else {
    const SensorKind s = cfg.modalities.lidar ? SensorKind::kLidarLong : SensorKind::kRadar4d;
    voxels = voxelize_sensor(sample, rig, s, weights, cfg);
    bev = bev_collapse(voxels, {s == SensorKind::kLidarLong ? weights.bev_lidar : weights.bev_radar});
  }
  result.num_voxels = voxels.size();

  const double min_z = cfg.ground_z + cfg.ground_clearance;
  ProposalParams params = cfg.proposals;
  if (!params.ground_z) params.ground_z = cfg.ground_z;
  const ProposalSet proposals =
      propose_from_bev(bev, bev_occupancy(voxels, min_z), voxels, min_z, params);
  result.num_proposals = proposals.size();

  Eigen::MatrixXd fused = voxels.features;
  if (!voxels.empty()) {
    std::vector<Eigen::MatrixXd> blocks;
    for (ImageModality m : cfg.modalities.cameras()) {
      auto img = sample.images.find(m);
      if (img == sample.images.end()) {
        throw Error(ErrorCode::kMissingField, "frame " + std::to_string(sample.frame_id) +
                                                  " has no " + std::string(to_string(m)) + " image");
      }
      const CameraModel* cam = rig.camera(m);
      if (cam == nullptr) {
        throw Error(ErrorCode::kMissingField, "rig has no " + std::string(to_string(m)) + " camera");
      }
      const ImageFeatureMap fmap = extract_image_features(img->second, weights.backbones.at(m));
      blocks.push_back(enhance_voxels(voxels, fmap, *cam, weights.fusion));
    }
    GateResult gated = gate_and_reweight(blocks);
    result.gates = gated.gates;
    fused = fuse_final(gated.reweighted, voxels.features, weights.fusion.ffn);
  }

  ProposalSet refined = proposals;
  if (cfg.refinement == RefinementMode::kHead && proposals.size() > 0) {
    std::vector<Eigen::Vector3d> centres(voxels.size());
    for (std::size_t k = 0; k < voxels.size(); ++k) centres[k] = voxels.center(k);
    Eigen::MatrixXd both(fused.rows(), 2 * fused.cols());
    both << voxels.features, fused;
    const NeighborIndex index(std::move(centres), weights.refine.radius > 0.0
                                                      ? weights.refine.radius
                                                      : cfg.pooling_radius());
    std::vector<Eigen::MatrixXd> grids;
    for (const auto& box : proposals.boxes) {
      grids.push_back(roi_grid_pool(box, index, both, weights.refine.grid_size));
    }
    refined = refine_boxes(proposals, grids, weights.refine);
  }
  result.detections = nms(refined.valid_boxes(), cfg.nms_iou);
  return result;
}

std::vector<FrameDetections> to_frame_detections(const std::vector<FrameResult>& results,
                                                 const std::vector<SceneSample>& samples) {
  std::vector<FrameDetections> out;
  for (const auto& r : results) {
    auto it = std::find_if(samples.begin(), samples.end(),
                           [&](const SceneSample& s) { return s.frame_id == r.frame_id; });
    if (it == samples.end()) {
      throw Error(ErrorCode::kMissingField, "no annotations for frame " + std::to_string(r.frame_id));
    }
    out.push_back({r.frame_id, r.detections, it->boxes3d, it->conditions});
  }
  return out;
}

PipelineOutput run_pipeline(const RunConfig& cfg, const std::vector<SceneSample>& samples,
                            const Rig& rig, const ModelWeights& weights) {
  cfg.validate();
  weights.validate(cfg);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].frame_id < samples[b].frame_id;
  });

  std::vector<FrameResult> results(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < order.size(); k = next++) {
      try {
        results[k] = run_frame(samples[order[k]], rig, weights, cfg);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = order.size();
      }
    }
  };
  const int n = std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(order.size(), 1)));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  PipelineOutput out;
  out.frames = std::move(results);
  out.report = breakdown(to_frame_detections(out.frames, samples), cfg.eval);
  return out;
}

json detections_to_json(const std::vector<FrameResult>& results) {
  json frames = json::array();
  for (const auto& r : results) {
    json boxes = json::array();
    for (const auto& b : r.detections) boxes.push_back(box3d_to_json(b));
    frames.push_back({{"frame_id", r.frame_id}, {"gates", r.gates}, {"detections", boxes}});
  }
  return {{"frames", frames}};
}

std::vector<FrameResult> detections_from_json(const json& j) {
  std::vector<FrameResult> out;
  try {
    for (const auto& f : j.at("frames")) {
      FrameResult r;
      r.frame_id = f.at("frame_id").get<std::int64_t>();
      if (f.contains("gates")) r.gates = f.at("gates").get<std::vector<double>>();
      for (const auto& b : f.at("detections")) r.detections.push_back(box3d_from_json(b));
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMissingField, std::string("detections: ") + e.what());
  }
  return out;
}

}  // namespace voxfuse
