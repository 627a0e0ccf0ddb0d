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

// voxfuse command-line driver.
//
//   voxfuse synth   --config synth.json --out data/
//   voxfuse run     --config run.json   --out results/ [--modalities L] [--jobs 4]
//   voxfuse eval    --config eval.json  --out results/
//   voxfuse calib solve|check --config calib.json --out calib/
//   voxfuse align   --config align.json --out aligned/
//   voxfuse perturb --config perturb.json --out noisy/
//
// Exit status: 0 success, 2 invalid input or configuration, 3 I/O failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "voxfuse/dataset.hpp"
#include "voxfuse/error.hpp"
#include "voxfuse/eval.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/pipeline.hpp"
#include "voxfuse/sensorio.hpp"
#include "voxfuse/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace voxfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitIo = 3;
constexpr int kExitInternal = 1;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> modalities;
  std::optional<int> jobs;
};

fs::path config_dir(const CommonArgs& a) { return fs::path(a.config).parent_path(); }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::kMissingField, std::string("config field '") + key + "'");
  }
  return j.at(key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  try {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string(key) + ": " + e.what());
  }
}

Eigen::Matrix3d mat3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 9) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must have 9 entries");
  }
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = j[static_cast<std::size_t>(i)].get<double>();
  return m;
}

json mat3_json(const Eigen::Matrix3d& m) {
  json a = json::array();
  for (int i = 0; i < 9; ++i) a.push_back(m(i / 3, i % 3));
  return a;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// A list given inline or as the path of a JSON file.
json inline_or_file(const json& j, const fs::path& base) {
  if (j.is_string()) return read_json_file(resolve(base, j.get<std::string>()));
  return j;
}

void report(const std::string& line) { std::cout << line << '\n'; }

// ---------------------------------------------------------------- synth

int cmd_synth(const CommonArgs& a) {
  SynthConfig cfg = synth_config_from_json(read_json_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const fs::path out(a.out);
  const Rig rig = default_rig();
  const auto specs = synth_scene_specs(cfg);
  std::vector<SceneSample> samples;
  samples.reserve(specs.size());
  for (const auto& s : specs) samples.push_back(generate_scene(s, rig));
  write_dataset(samples, rig, out);

  SynthConfig resolved = cfg;
  resolved.scenes = specs;
  write_json_file(synth_config_to_json(resolved), out / "scenes.json");
  write_text_file(dataset_stats(samples).to_csv(), out / "dataset_stats.csv");
  report("wrote " + std::to_string(samples.size()) + " frames to " + out.string());
  return kExitOk;
}

// ---------------------------------------------------------------- run

Rig rig_for(const RunConfig& cfg) {
  return load_rig(cfg.rig_path ? *cfg.rig_path : cfg.data_dir / "rig.json");
}

int cmd_run(const CommonArgs& a) {
  RunConfig cfg = run_config_from_json(read_json_file(a.config), config_dir(a));
  if (a.seed) cfg.init_seed = *a.seed;
  if (a.modalities) cfg.modalities = ModalitySet::parse(*a.modalities);
  if (a.jobs) cfg.jobs = *a.jobs;
  cfg.validate();
  if (cfg.data_dir.empty()) throw Error(ErrorCode::kMissingField, "config field 'data_dir'");

  const Rig rig = rig_for(cfg);
  const auto samples = read_dataset(cfg.data_dir);
  const ModelWeights weights = load_or_init_weights(cfg);
  const PipelineOutput result = run_pipeline(cfg, samples, rig, weights);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_json_file(detections_to_json(result.frames), out / "detections.json");
  write_text_file(result.report.to_csv(), out / "metrics.csv");
  write_text_file(result.report.to_markdown(), out / "summary.md");
  json resolved = run_config_to_json(cfg);
  resolved["jobs"] = 1;  // the worker count never changes results
  write_json_file(resolved, out / "run_config.json");

  const ApRow* v = result.report.find("all", ObjectClass::kVehicle, "all");
  char line[160];
  if (v && v->result.ap) {
    std::snprintf(line, sizeof line, "%zu frames, vehicle AP %.4f (%s)", result.frames.size(),
                  *v->result.ap, cfg.modalities.to_string().c_str());
  } else {
    std::snprintf(line, sizeof line, "%zu frames, no vehicle ground truth", result.frames.size());
  }
  report(line);
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const CommonArgs& a) {
  const json j = read_json_file(a.config);
  const fs::path base = config_dir(a);
  const auto results = detections_from_json(
      read_json_file(resolve(base, require(j, "detections").get<std::string>())));
  const auto samples = read_dataset(resolve(base, require(j, "data_dir").get<std::string>()));
  EvalConfig eval;
  if (j.contains("eval")) eval = run_config_from_json(json{{"eval", j.at("eval")}}).eval;

  const APReport rep = breakdown(to_frame_detections(results, samples), eval);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text_file(rep.to_csv(), out / "metrics.csv");
  write_text_file(rep.to_markdown(), out / "summary.md");
  report("evaluated " + std::to_string(results.size()) + " frames");
  return kExitOk;
}

// ---------------------------------------------------------------- calib

std::vector<Correspondence> load_correspondences(const json& list, const fs::path& base) {
  if (!list.is_array()) throw Error(ErrorCode::kInvalidArgument, "correspondences must be a list");
  std::vector<Correspondence> out;
  for (const auto& c : list) {
    Correspondence k;
    const json uv = require(c, "uv");
    if (!uv.is_array() || uv.size() != 2) throw Error(ErrorCode::kInvalidArgument, "uv must be a 2-vector");
    k.uv = {uv[0].get<double>(), uv[1].get<double>()};
    if (c.contains("xyz")) {
      const json& p = c.at("xyz");
      if (!p.is_array() || p.size() != 3) throw Error(ErrorCode::kInvalidArgument, "xyz must be a 3-vector");
      k.xyz = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    } else {
      // Corner-reflector frame: the strongest radar return is the target.
      const PointCloud radar = read_point_cloud(resolve(base, require(c, "radar").get<std::string>()));
      k.xyz = radar.points[select_reflector(radar)];
    }
    out.push_back(k);
  }
  return out;
}

int cmd_calib_solve(const CommonArgs& a) {
  const json j = read_json_file(a.config);
  const fs::path base = config_dir(a);
  const Eigen::Matrix3d K = mat3_from(require(j, "K"), "K");
  const auto corr = load_correspondences(inline_or_file(require(j, "correspondences"), base), base);
  const RigidSolveResult r = solve_rigid(corr, K);

  json xyz = json::array();
  for (const auto& c : corr) xyz.push_back({c.xyz.x(), c.xyz.y(), c.xyz.z()});
  const json out_j = {{"R", mat3_json(r.transform.R)},
                      {"t", vec_json(r.transform.t)},
                      {"rms_reprojection_px", r.rms_reprojection_px},
                      {"iterations", r.iterations},
                      {"points", xyz}};
  const fs::path out(a.out);
  fs::create_directories(out);
  write_json_file(out_j, out / "calib.json");
  char line[96];
  std::snprintf(line, sizeof line, "solved from %zu pairs, rms %.6g px", corr.size(),
                r.rms_reprojection_px);
  report(line);
  return kExitOk;
}

int cmd_calib_check(const CommonArgs& a) {
  const json j = read_json_file(a.config);
  const json list = inline_or_file(require(j, "pairs"), config_dir(a));
  const double tol = get_or<double>(j, "tolerance_px", 1.0);
  std::vector<RowPair> pairs;
  try {
    for (const auto& p : list) {
      pairs.push_back({{p.at(0).at(0).get<double>(), p.at(0).at(1).get<double>()},
                       {p.at(1).at(0).get<double>(), p.at(1).at(1).get<double>()}});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("pairs: ") + e.what());
  }
  const double d = epipolar_row_check(pairs);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_json_file({{"max_row_disparity_px", d}, {"tolerance_px", tol}, {"pass", d <= tol}},
                  out / "check.json");
  char line[96];
  std::snprintf(line, sizeof line, "max row disparity %.6g px: %s", d, d <= tol ? "pass" : "FAIL");
  report(line);
  return kExitOk;
}

// ---------------------------------------------------------------- align

int cmd_align(const CommonArgs& a) {
  const json j = read_json_file(a.config);
  const fs::path base = config_dir(a);
  const Rig rig = load_rig(resolve(base, require(j, "rig").get<std::string>()));
  const ImageModality src_m = parse_image_modality(get_or<std::string>(j, "src", "thermal"));
  const ImageModality dst_m = parse_image_modality(get_or<std::string>(j, "dst", "rgb"));
  const CameraModel* src = rig.camera(src_m);
  const CameraModel* dst = rig.camera(dst_m);
  if (!src || !dst) throw Error(ErrorCode::kMissingField, "rig lacks the requested cameras");

  const Eigen::Matrix3d H = homography(*src, *dst);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_json_file({{"src", to_string(src_m)}, {"dst", to_string(dst_m)}, {"H", mat3_json(H)}},
                  out / "homography.json");
  if (j.contains("image")) {
    const CameraImage img = read_image(resolve(base, j.at("image").get<std::string>()));
    const CameraImage warped = warp_image(img, H, dst->width, dst->height);
    write_image(warped, out / (std::string(to_string(src_m)) + "_on_" +
                               std::string(to_string(dst_m)) + ".dsim"));
  }
  report("aligned " + std::string(to_string(src_m)) + " to " + std::string(to_string(dst_m)));
  return kExitOk;
}

// ---------------------------------------------------------------- perturb

int cmd_perturb(const CommonArgs& a) {
  const json j = read_json_file(a.config);
  const fs::path base = config_dir(a);
  const Rig rig = load_rig(resolve(base, require(j, "rig").get<std::string>()));
  json noise_j = {{"sigma_t", get_or<double>(j, "sigma_t", 0.0)},
                  {"sigma_r_deg", get_or<double>(j, "sigma_r_deg", 0.0)},
                  {"seed", a.seed ? *a.seed : get_or<std::uint64_t>(j, "seed", 0)}};
  if (j.contains("mask")) noise_j["mask"] = j.at("mask");
  const ExtrinsicNoise noise = run_config_from_json(json{{"noise", noise_j}}).noise;
  if (noise.sigma_t < 0.0 || noise.sigma_r_deg < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise magnitudes must be >= 0");
  }
  const Rig noisy = perturb_rig(rig, noise, get_or<std::int64_t>(j, "frame_id", 0));

  json changes = json::array();
  for (const auto& cam : noisy.cameras) {
    const CameraModel* before = rig.camera(cam.modality);
    changes.push_back({{"sensor", to_string(cam.modality)},
                       {"rotation_deg", rotation_angle(cam.R * before->R.transpose()) * 180.0 / M_PI},
                       {"translation_m", (cam.t - before->t).norm()}});
  }
  for (const auto& [kind, tf] : noisy.range_sensors) {
    const RigidTransform before = rig.range_extrinsic(kind);
    changes.push_back({{"sensor", to_string(kind)},
                       {"rotation_deg", rotation_angle(tf.R * before.R.transpose()) * 180.0 / M_PI},
                       {"translation_m", (tf.t - before.t).norm()}});
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  save_rig(noisy, out / "rig.json");
  write_json_file({{"mask", noise.mask.to_string()}, {"changes", changes}}, out / "perturbation.json");
  report("perturbed " + noise.mask.to_string());
  return kExitOk;
}

int guarded(int (*fn)(const CommonArgs&), const CommonArgs& a) {
  try {
    return fn(a);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_io() ? kExitIo : kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxfuse: multi-modal voxel fusion detection toolkit"};
  app.require_subcommand(1);
  CommonArgs args;

  auto common = [&](CLI::App* sub, bool with_run_flags) {
    sub->add_option("--config", args.config, "JSON configuration file")->required();
    sub->add_option("--out", args.out, "output directory")->required();
    sub->add_option("--seed", args.seed, "seed override");
    if (with_run_flags) {
      sub->add_option("--modalities", args.modalities, "enabled sensors, e.g. R,E,T,4R,L");
      sub->add_option("--jobs", args.jobs, "worker threads")->check(CLI::PositiveNumber);
    }
  };

  int (*selected)(const CommonArgs&) = nullptr;
  auto bind = [&](CLI::App* sub, int (*fn)(const CommonArgs&)) {
    sub->callback([&selected, fn] { selected = fn; });
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  common(synth, false);
  bind(synth, cmd_synth);
  auto* run = app.add_subcommand("run", "run the detection pipeline and evaluate");
  common(run, true);
  bind(run, cmd_run);
  auto* eval = app.add_subcommand("eval", "evaluate a detections file");
  common(eval, false);
  bind(eval, cmd_eval);
  auto* calib = app.add_subcommand("calib", "calibration utilities");
  calib->require_subcommand(1);
  auto* solve = calib->add_subcommand("solve", "radar-camera rigid transform from correspondences");
  common(solve, false);
  bind(solve, cmd_calib_solve);
  auto* check = calib->add_subcommand("check", "row alignment of rectified pairs");
  common(check, false);
  bind(check, cmd_calib_check);
  auto* align = app.add_subcommand("align", "infinite-plane homography between cameras");
  common(align, false);
  bind(align, cmd_align);
  auto* perturb = app.add_subcommand("perturb", "apply extrinsic noise to a rig");
  common(perturb, false);
  bind(perturb, cmd_perturb);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }
  return selected ? guarded(selected, args) : kExitInvalid;
}
