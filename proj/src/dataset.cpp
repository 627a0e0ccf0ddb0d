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

#include "voxfuse/dataset.hpp"

#include <algorithm>
#include <cstdio>

#include "voxfuse/error.hpp"
#include "voxfuse/sensorio.hpp"

namespace voxfuse {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path frame_directory(const fs::path& root, std::int64_t frame_id) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06lld", static_cast<long long>(frame_id));
  return root / name;
}

void write_sample(const SceneSample& sample, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_json_file({{"frame_id", sample.frame_id},
                   {"timestamp_us", sample.timestamp_us},
                   {"event_window_start_us", sample.event_window_start_us}},
                  dir / "meta.json");
  write_annotations({sample.boxes3d, sample.boxes2d, sample.pose, sample.conditions},
                    dir / "annotations.json");
  for (const auto& [sensor, cloud] : sample.clouds) {
    write_point_cloud(cloud, dir / (std::string(to_string(sensor)) + ".dsrt"));
  }
  for (const auto& [modality, image] : sample.images) {
    write_image(image, dir / (std::string(to_string(modality)) + ".dsim"));
  }
  if (sample.events.width > 0) write_events(sample.events, dir / "events.dsev");
}

SceneSample read_sample(const fs::path& dir) {
  SceneSample s;
  const json meta = read_json_file(dir / "meta.json");
  try {
    s.frame_id = meta.at("frame_id").get<std::int64_t>();
    s.timestamp_us = meta.at("timestamp_us").get<std::int64_t>();
    s.event_window_start_us = meta.value("event_window_start_us", std::int64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMissingField, (dir / "meta.json").string() + ": " + e.what());
  }
  const Annotations a = read_annotations(dir / "annotations.json");
  s.boxes3d = a.boxes3d;
  s.boxes2d = a.boxes2d;
  s.pose = a.pose;
  s.conditions = a.conditions;
  for (SensorKind k : {SensorKind::kLidarLong, SensorKind::kLidarShort, SensorKind::kRadar4d}) {
    const fs::path p = dir / (std::string(to_string(k)) + ".dsrt");
    if (fs::exists(p)) s.clouds[k] = read_point_cloud(p);
  }
  for (ImageModality m : {ImageModality::kRgb, ImageModality::kThermal, ImageModality::kEventGrid}) {
    const fs::path p = dir / (std::string(to_string(m)) + ".dsim");
    if (fs::exists(p)) s.images[m] = read_image(p);
  }
  if (fs::exists(dir / "events.dsev")) s.events = read_events(dir / "events.dsev");
  return s;
}

void write_dataset(const std::vector<SceneSample>& samples, const Rig& rig, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + root.string() + ": " + ec.message());
  save_rig(rig, root / "rig.json");
  for (const auto& s : samples) write_sample(s, frame_directory(root, s.frame_id));
}

std::vector<SceneSample> read_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::kIo, "no dataset directory " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("frame_", 0) == 0) {
      dirs.push_back(entry.path());
    }
  }
  std::vector<SceneSample> samples;
  for (const auto& d : dirs) samples.push_back(read_sample(d));
  std::stable_sort(samples.begin(), samples.end(),
                   [](const SceneSample& a, const SceneSample& b) { return a.frame_id < b.frame_id; });
  return samples;
}

}  // namespace voxfuse
