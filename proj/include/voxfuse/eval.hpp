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

#include <optional>
#include <string>
#include <vector>

#include "voxfuse/types.hpp"

namespace voxfuse {

/// BEV footprint corners, counter-clockwise.
std::vector<Eigen::Vector2d> bev_corners(const Box3D& box);

/// Sutherland-Hodgman clip of a convex polygon against a convex CCW clip
/// polygon.
std::vector<Eigen::Vector2d> clip_convex(const std::vector<Eigen::Vector2d>& subject,
                                         const std::vector<Eigen::Vector2d>& clip);

/// Signed shoelace area (positive for CCW).
double polygon_area(const std::vector<Eigen::Vector2d>& poly);

double bev_intersection_area(const Box3D& a, const Box3D& b);
double iou3d(const Box3D& a, const Box3D& b);
double iou2d(const Box2D& a, const Box2D& b);

struct IouThresholds {
  double vehicle = 0.5;
  double pedestrian = 0.3;
  double bike = 0.3;
  double get(ObjectClass c) const;
};

/// Predictions and ground truth of one frame.
struct FrameDetections {
  std::int64_t frame_id = 0;
  std::vector<Box3D> predictions;
  std::vector<Box3D> ground_truth;
  ConditionTags conditions;
};

struct ApResult {
  std::optional<double> ap;  // absent when there is no ground truth
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int gt = 0;
};

/// Greedy matching by descending score (ties keep input order); each
/// prediction takes the unmatched ground-truth box of the same frame with the
/// highest IoU, if that IoU reaches the threshold. AP is the area under the
/// all-point interpolated precision-recall curve.
ApResult average_precision(const std::vector<FrameDetections>& frames, ObjectClass cls,
                           double iou_thresh);

struct DistanceBin {
  double lo = 0.0;
  double hi = 0.0;
  std::string label() const;
  bool contains(double range) const { return range >= lo && range < hi; }
};

std::vector<DistanceBin> default_distance_bins();

struct EvalConfig {
  IouThresholds thresholds;
  double x_min = 0.0;  // boxes count only if x_min <= center x < x_max
  double x_max = 70.0;
  std::vector<DistanceBin> bins = default_distance_bins();
};

struct ApRow {
  std::string condition;  // "all" or a weather / light value
  ObjectClass cls = ObjectClass::kVehicle;
  std::string bin;  // "all" or a DistanceBin label
  ApResult result;
};

struct APReport {
  std::vector<ApRow> rows;

  const ApRow* find(const std::string& condition, ObjectClass cls, const std::string& bin) const;
  std::string to_csv() const;
  std::string to_markdown() const;
};

/// AP for every (condition, class, distance bin), where condition runs over
/// "all" and each weather and light value present in the frames.
APReport breakdown(const std::vector<FrameDetections>& frames, const EvalConfig& cfg = {});

struct DatasetStats {
  std::vector<std::string> bins;
  // counts[row label][bin index]; rows are classes followed by weathers.
  std::vector<std::pair<std::string, std::vector<int>>> class_counts;
  std::vector<std::pair<std::string, std::vector<int>>> weather_counts;

  std::string to_csv() const;
};

/// Ground-truth object counts per class and per weather over distance bins
/// (BEV range of the box centre).
DatasetStats dataset_stats(const std::vector<SceneSample>& samples,
                           const std::vector<DistanceBin>& bins = default_distance_bins());

}  // namespace voxfuse
