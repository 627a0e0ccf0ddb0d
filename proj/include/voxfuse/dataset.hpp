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

#include <filesystem>
#include <vector>

#include "voxfuse/types.hpp"

namespace voxfuse {

// On-disk layout of a dataset directory:
//   rig.json
//   frame_<id>/meta.json          frame id, timestamp, event window start
//   frame_<id>/annotations.json
//   frame_<id>/<sensor>.dsrt      one per point cloud
//   frame_<id>/<modality>.dsim    one per camera image
//   frame_<id>/events.dsev        raw events, when present

std::filesystem::path frame_directory(const std::filesystem::path& root, std::int64_t frame_id);

void write_sample(const SceneSample& sample, const std::filesystem::path& dir);
SceneSample read_sample(const std::filesystem::path& dir);

void write_dataset(const std::vector<SceneSample>& samples, const Rig& rig,
                   const std::filesystem::path& root);

/// All frame_* directories under root, ordered by frame id.
std::vector<SceneSample> read_dataset(const std::filesystem::path& root);

}  // namespace voxfuse
