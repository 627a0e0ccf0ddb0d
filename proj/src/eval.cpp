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

#include "voxfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace voxfuse {

std::vector<Eigen::Vector2d> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const Eigen::Vector2d ax(c, s);
  const Eigen::Vector2d ay(-s, c);
  const Eigen::Vector2d o = box.center.head<2>();
  const double hl = box.l / 2;
  const double hw = box.w / 2;
  return {o - hl * ax - hw * ay, o + hl * ax - hw * ay, o + hl * ax + hw * ay,
          o - hl * ax + hw * ay};
}

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace

std::vector<Eigen::Vector2d> clip_convex(const std::vector<Eigen::Vector2d>& subject,
                                         const std::vector<Eigen::Vector2d>& clip) {
  std::vector<Eigen::Vector2d> out = subject;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Eigen::Vector2d& a = clip[e];
    const Eigen::Vector2d& b = clip[(e + 1) % clip.size()];
    const Eigen::Vector2d edge = b - a;
    std::vector<Eigen::Vector2d> in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Eigen::Vector2d& p = in[i];
      const Eigen::Vector2d& q = in[(i + 1) % in.size()];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
  }
  return out;
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    a += cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return a / 2;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  // Cheap reject on circumscribed circles.
  const double ra = std::hypot(a.l, a.w) / 2;
  const double rb = std::hypot(b.l, b.w) / 2;
  if ((a.center.head<2>() - b.center.head<2>()).norm() > ra + rb) return 0.0;
  return std::max(0.0, polygon_area(clip_convex(ca, cb)));
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double z_lo = std::max(a.center.z() - a.h / 2, b.center.z() - b.h / 2);
  const double z_hi = std::min(a.center.z() + a.h / 2, b.center.z() + b.h / 2);
  if (z_hi <= z_lo) return 0.0;
  const double inter = bev_intersection_area(a, b) * (z_hi - z_lo);
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.u_min + a.w, b.u_min + b.w) - std::max(a.u_min, b.u_min);
  const double ih = std::min(a.v_min + a.h, b.v_min + b.h) - std::max(a.v_min, b.v_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return std::clamp(inter / (a.w * a.h + b.w * b.h - inter), 0.0, 1.0);
}

double IouThresholds::get(ObjectClass c) const {
  switch (c) {
    case ObjectClass::kVehicle: return vehicle;
    case ObjectClass::kPedestrian: return pedestrian;
    case ObjectClass::kBike: return bike;
  }
  return vehicle;
}

ApResult average_precision(const std::vector<FrameDetections>& frames, ObjectClass cls,
                           double iou_thresh) {
  struct Pred {
    std::size_t frame;
    const Box3D* box;
    double score;
  };
  std::vector<Pred> preds;
  std::vector<std::vector<const Box3D*>> gts(frames.size());
  ApResult r;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const auto& b : frames[f].predictions) {
      if (b.cls == cls) preds.push_back({f, &b, b.score.value_or(0.0)});
    }
    for (const auto& b : frames[f].ground_truth) {
      if (b.cls == cls) gts[f].push_back(&b);
    }
    r.gt += static_cast<int>(gts[f].size());
  }
  std::stable_sort(preds.begin(), preds.end(),
                   [](const Pred& a, const Pred& b) { return a.score > b.score; });

  std::vector<std::vector<std::uint8_t>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) taken[f].assign(gts[f].size(), 0);
  std::vector<std::uint8_t> is_tp(preds.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& cand = gts[preds[i].frame];
    auto& used = taken[preds[i].frame];
    double best = -1.0;
    std::size_t best_j = cand.size();
    for (std::size_t j = 0; j < cand.size(); ++j) {
      if (used[j]) continue;
      const double iou = iou3d(*preds[i].box, *cand[j]);
      if (iou >= iou_thresh && iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best_j < cand.size()) {
      used[best_j] = 1;
      is_tp[i] = 1;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = r.gt - r.tp;
  if (r.gt == 0) return r;

  std::vector<double> recall(preds.size());
  std::vector<double> precision(preds.size());
  int tp = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    tp += is_tp[i];
    recall[i] = static_cast<double>(tp) / r.gt;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = preds.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  r.ap = std::clamp(ap, 0.0, 1.0);
  return r;
}

std::string DistanceBin::label() const {
  auto fmt = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  return fmt(lo) + "-" + fmt(hi);
}

std::vector<DistanceBin> default_distance_bins() { return {{0, 20}, {20, 40}, {40, 70}}; }

const ApRow* APReport::find(const std::string& condition, ObjectClass cls,
                            const std::string& bin) const {
  for (const auto& row : rows) {
    if (row.condition == condition && row.cls == cls && row.bin == bin) return &row;
  }
  return nullptr;
}

namespace {

std::string format_ap(const std::optional<double>& ap, double scale, int digits) {
  if (!ap) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *ap * scale);
  return buf;
}

std::vector<Box3D> in_eval_region(const std::vector<Box3D>& boxes, const EvalConfig& cfg,
                                  const DistanceBin* bin) {
  std::vector<Box3D> out;
  for (const auto& b : boxes) {
    if (b.center.x() < cfg.x_min || b.center.x() >= cfg.x_max) continue;
    if (bin != nullptr && !bin->contains(b.bev_range())) continue;
    out.push_back(b);
  }
  return out;
}

}  // namespace

std::string APReport::to_csv() const {
  std::ostringstream os;
  os << "condition,class,bin,ap,tp,fp,fn,gt\n";
  for (const auto& row : rows) {
    os << row.condition << ',' << to_string(row.cls) << ',' << row.bin << ','
       << format_ap(row.result.ap, 1.0, 6) << ',' << row.result.tp << ',' << row.result.fp << ','
       << row.result.fn << ',' << row.result.gt << '\n';
  }
  return os.str();
}

std::string APReport::to_markdown() const {
  std::vector<std::string> conditions;
  std::vector<std::string> bins;
  for (const auto& row : rows) {
    if (std::find(conditions.begin(), conditions.end(), row.condition) == conditions.end())
      conditions.push_back(row.condition);
    if (std::find(bins.begin(), bins.end(), row.bin) == bins.end()) bins.push_back(row.bin);
  }
  std::ostringstream os;
  auto table = [&](const std::vector<std::string>& cols, bool by_condition) {
    os << "| Class |";
    for (const auto& c : cols) os << ' ' << c << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) os << "---:|";
    os << '\n';
    for (ObjectClass cls : kAllObjectClasses) {
      os << "| " << to_string(cls) << " |";
      for (const auto& c : cols) {
        const ApRow* row = by_condition ? find(c, cls, "all") : find("all", cls, c);
        os << ' ' << (row ? format_ap(row->result.ap, 100.0, 2) : std::string("NA")) << " |";
      }
      os << '\n';
    }
  };
  os << "### AP by condition\n\n";
  table(conditions, true);
  os << "\n### AP by distance (m)\n\n";
  table(bins, false);
  return os.str();
}

APReport breakdown(const std::vector<FrameDetections>& frames, const EvalConfig& cfg) {
  std::vector<std::string> conditions = {"all"};
  for (Weather w : kAllWeathers) {
    for (const auto& f : frames) {
      if (f.conditions.weather == w) {
        conditions.emplace_back(to_string(w));
        break;
      }
    }
  }
  for (Light l : kAllLights) {
    for (const auto& f : frames) {
      if (f.conditions.light == l) {
        conditions.emplace_back(to_string(l));
        break;
      }
    }
  }
  auto matches = [](const FrameDetections& f, const std::string& cond) {
    return cond == "all" || to_string(f.conditions.weather) == cond ||
           to_string(f.conditions.light) == cond;
  };

  APReport report;
  for (const auto& cond : conditions) {
    for (ObjectClass cls : kAllObjectClasses) {
      for (int b = -1; b < static_cast<int>(cfg.bins.size()); ++b) {
        const DistanceBin* bin = b < 0 ? nullptr : &cfg.bins[static_cast<std::size_t>(b)];
        std::vector<FrameDetections> subset;
        for (const auto& f : frames) {
          if (!matches(f, cond)) continue;
          FrameDetections s;
          s.frame_id = f.frame_id;
          s.conditions = f.conditions;
          s.predictions = in_eval_region(f.predictions, cfg, bin);
          s.ground_truth = in_eval_region(f.ground_truth, cfg, bin);
          subset.push_back(std::move(s));
        }
        report.rows.push_back({cond, cls, bin ? bin->label() : "all",
                               average_precision(subset, cls, cfg.thresholds.get(cls))});
      }
    }
  }
  return report;
}

std::string DatasetStats::to_csv() const {
  std::ostringstream os;
  os << "group,label";
  for (const auto& b : bins) os << ',' << b;
  os << '\n';
  auto emit = [&](const char* group, const auto& rows) {
    for (const auto& [label, counts] : rows) {
      os << group << ',' << label;
      for (int c : counts) os << ',' << c;
      os << '\n';
    }
  };
  emit("class", class_counts);
  emit("weather", weather_counts);
  return os.str();
}

DatasetStats dataset_stats(const std::vector<SceneSample>& samples,
                           const std::vector<DistanceBin>& bins) {
  DatasetStats st;
  for (const auto& b : bins) st.bins.push_back(b.label());
  for (ObjectClass c : kAllObjectClasses) {
    st.class_counts.emplace_back(std::string(to_string(c)), std::vector<int>(bins.size(), 0));
  }
  for (Weather w : kAllWeathers) {
    st.weather_counts.emplace_back(std::string(to_string(w)), std::vector<int>(bins.size(), 0));
  }
  for (const auto& s : samples) {
    for (const auto& box : s.boxes3d) {
      for (std::size_t b = 0; b < bins.size(); ++b) {
        if (!bins[b].contains(box.bev_range())) continue;
        ++st.class_counts[static_cast<std::size_t>(box.cls)].second[b];
        ++st.weather_counts[static_cast<std::size_t>(s.conditions.weather)].second[b];
        break;
      }
    }
  }
  return st;
}

}  // namespace voxfuse
