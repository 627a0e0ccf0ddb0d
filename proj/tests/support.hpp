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

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "voxfuse/types.hpp"

namespace voxfuse::testing {

// Per-test scratch directory under VOXFUSE_TEST_TMP (or the system temp dir),
// recreated empty.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("VOXFUSE_TEST_TMP");
  std::filesystem::path dir =
      (root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "voxfuse") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::Vector3d random_vec3(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Box3D random_box(std::mt19937_64& rng, double spread = 3.0) {
  Box3D b;
  b.center = random_vec3(rng, -spread, spread);
  b.l = uniform(rng, 0.5, 4.0);
  b.w = uniform(rng, 0.5, 3.0);
  b.h = uniform(rng, 0.5, 2.5);
  b.yaw = uniform(rng, -M_PI, M_PI);
  return b;
}

// Relative error with an absolute floor for values near zero.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace voxfuse::testing
