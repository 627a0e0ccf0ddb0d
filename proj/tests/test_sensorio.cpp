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

#include <cstring>
#include <fstream>
#include <random>

#include "support.hpp"
#include "voxfuse/error.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/sensorio.hpp"

using namespace voxfuse;
using voxfuse::testing::scratch_dir;
using voxfuse::testing::uniform;

namespace {

PointCloud random_cloud(std::mt19937_64& rng, SensorKind s, std::size_t n) {
  PointCloud c(s, default_feature_channels(s));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> f(static_cast<std::size_t>(c.channels));
    for (auto& v : f) v = uniform(rng, -5, 5);
    c.push_back(testing::random_vec3(rng, -80, 80), f);
  }
  return c;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::kInvalidArgument;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

}  // namespace

TEST_CASE("point cloud file: empty cloud is a bare header") {
  const auto dir = scratch_dir("sensorio_empty");
  PointCloud c(SensorKind::kLidarLong, 1);
  write_point_cloud(c, dir / "e.dsrt");
  CHECK(std::filesystem::file_size(dir / "e.dsrt") == 4 + 4 + 1 + 1 + 8);
  CHECK(read_point_cloud(dir / "e.dsrt") == c);
}

TEST_CASE("point cloud file: single point round-trips") {
  const auto dir = scratch_dir("sensorio_one");
  PointCloud c(SensorKind::kLidarLong, 1);
  c.push_back({1.0, 2.0, 3.0}, {0.5});
  write_point_cloud(c, dir / "p.dsrt");
  CHECK(read_point_cloud(dir / "p.dsrt") == c);
}

TEST_CASE("point cloud encoding matches a hand-built byte layout") {
  PointCloud c(SensorKind::kRadar4d, 2);
  c.push_back({1.5, -2.25, 0.125}, {3.0, -0.75});
  c.push_back({-7.0, 8.5, 1.0}, {0.25, 2.0});
  std::vector<std::uint8_t> want = {'D', 'S', 'R', 'T'};
  append_le<std::uint32_t>(want, 1);
  append_le<std::uint8_t>(want, 2);  // radar4d tag
  append_le<std::uint8_t>(want, 2);
  append_le<std::uint64_t>(want, 2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) append_le<float>(want, static_cast<float>(c.points[i][k]));
    for (int k = 0; k < 2; ++k) append_le<float>(want, static_cast<float>(c.feature(i, k)));
  }
  CHECK(encode_point_cloud(c) == want);
}

TEST_CASE("point cloud round-trip is bit-exact for float-representable clouds") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto kind = static_cast<SensorKind>(trial % 3);
    const PointCloud c = quantize_to_float32(random_cloud(rng, kind, rng() % 64));
    const PointCloud back = decode_point_cloud(encode_point_cloud(c));
    REQUIRE(back == c);
    CHECK(encode_point_cloud(back) == encode_point_cloud(c));
  }
}

TEST_CASE("point cloud decoding failures are distinct") {
  PointCloud c(SensorKind::kLidarLong, 1);
  c.push_back({1, 2, 3}, {0.5});
  auto bytes = encode_point_cloud(c);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  auto bad_version = bytes;
  bad_version[4] = 9;
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  auto short_header = bytes;
  short_header.resize(6);

  CHECK(code_of([&] { decode_point_cloud(bad_magic); }) == ErrorCode::kBadMagic);
  CHECK(code_of([&] { decode_point_cloud(bad_version); }) == ErrorCode::kVersionMismatch);
  CHECK(code_of([&] { decode_point_cloud(truncated); }) == ErrorCode::kTruncated);
  CHECK(code_of([&] { decode_point_cloud(short_header); }) == ErrorCode::kTruncated);
  CHECK(code_of([] { read_point_cloud("/nonexistent/x.dsrt"); }) == ErrorCode::kIo);
}

TEST_CASE("image and event files round-trip") {
  const auto dir = scratch_dir("sensorio_img");
  std::mt19937_64 rng(3);
  CameraImage img{ImageModality::kRgb, Grid(7, 9, 3)};
  for (auto& v : img.data.data()) v = static_cast<float>(uniform(rng, 0, 1));
  write_image(img, dir / "a.dsim");
  CHECK(read_image(dir / "a.dsim") == img);

  EventStream ev{32, 24, {}};
  for (int i = 0; i < 100; ++i) {
    ev.events.push_back({static_cast<int>(rng() % 32), static_cast<int>(rng() % 24), i * 7,
                         static_cast<std::int8_t>(rng() % 2 ? 1 : -1)});
  }
  write_events(ev, dir / "e.dsev");
  CHECK(read_events(dir / "e.dsev") == ev);

  std::ofstream(dir / "junk.dsim", std::ios::binary) << "DSRT0000";
  CHECK(code_of([&] { read_image(dir / "junk.dsim"); }) == ErrorCode::kBadMagic);
}

TEST_CASE("annotations: round-trip, yaw renormalization and schema errors") {
  const auto dir = scratch_dir("sensorio_ann");
  Annotations a;
  Box3D b;
  b.center = {10, -2, -1};
  b.l = 4.2;
  b.w = 1.8;
  b.h = 1.5;
  b.yaw = 0.3;
  b.score = 0.75;
  b.track_id = 7;
  a.boxes3d.push_back(b);
  a.boxes2d.push_back({10, 20, 30, 40, ObjectClass::kBike});
  a.conditions = {Weather::kHeavySnow, Light::kHdr};
  write_annotations(a, dir / "a.json");
  CHECK(read_annotations(dir / "a.json") == a);

  nlohmann::json j = annotations_to_json(a);
  j["boxes3d"][0]["yaw"] = 3 * M_PI / 2;
  CHECK(annotations_from_json(j).boxes3d[0].yaw == doctest::Approx(-M_PI / 2).epsilon(1e-15));

  auto truck = annotations_to_json(a);
  truck["boxes3d"][0]["class"] = "truck";
  CHECK(code_of([&] { annotations_from_json(truck); }) == ErrorCode::kUnknownClass);

  auto missing = annotations_to_json(a);
  missing["boxes3d"][0].erase("cx");
  CHECK(code_of([&] { annotations_from_json(missing); }) == ErrorCode::kMissingField);

  auto skew = annotations_to_json(a);
  skew["pose"]["R"][1] = 0.2;
  CHECK(code_of([&] { annotations_from_json(skew); }) == ErrorCode::kNotOrthonormal);
}

TEST_CASE("rig loading: identity camera, singular K, small drift repaired") {
  const auto dir = scratch_dir("sensorio_rig");
  CameraModel cam;
  cam.modality = ImageModality::kThermal;
  cam.name = "thermal";
  cam.K << 100, 0, 80, 0, 100, 60, 0, 0, 1;
  cam.width = 160;
  cam.height = 120;
  Rig rig;
  rig.cameras.push_back(cam);
  rig.range_sensors[SensorKind::kRadar4d] = {Eigen::Matrix3d::Identity(), {1, 0, -1}};
  save_rig(rig, dir / "rig.json");
  CHECK(load_rig(dir / "rig.json") == rig);

  auto singular = rig_to_json(rig);
  singular["cameras"][0]["K"] = {100, 0, 80, 0, 0, 60, 0, 0, 1};
  write_json_file(singular, dir / "singular.json");
  CHECK(code_of([&] { load_rig(dir / "singular.json"); }) == ErrorCode::kSingular);

  // Perturb R by 1e-4 and compare with the polar factor from Newton iteration
  // R <- (R + R^-T) / 2, independent of the SVD used by the loader.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix3d R = axis_angle_to_matrix(testing::random_vec3(rng, -1, 1));
    for (int k = 0; k < 9; ++k) R(k / 3, k % 3) += uniform(rng, -1e-4, 1e-4);
    auto j = rig_to_json(rig);
    for (int k = 0; k < 9; ++k) j["cameras"][0]["R"][k] = R(k / 3, k % 3);
    write_json_file(j, dir / "drift.json");
    const Eigen::Matrix3d got = load_rig(dir / "drift.json").cameras[0].R;

    Eigen::Matrix3d polar = R;
    for (int it = 0; it < 30; ++it) polar = 0.5 * (polar + polar.inverse().transpose());
    CHECK(got.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(orthonormality_defect(got) < 1e-12);
    CHECK((got - polar).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("filter_to_range: half-open bounds, lockstep features, idempotence") {
  PointCloud c(SensorKind::kLidarLong, 1);
  c.push_back({35, 0, 0}, {1});
  c.push_back({80, 0, 0}, {2});
  c.push_back({75.2, 0, 0}, {3});
  c.push_back({0, -75.2, -2}, {4});
  const PointCloud f = filter_to_range(c, AxisBox{});
  REQUIRE(f.size() == 2);
  CHECK(f.points[0] == Eigen::Vector3d(35, 0, 0));
  CHECK(f.feature(0, 0) == 1);
  CHECK(f.feature(1, 0) == 4);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud r = random_cloud(rng, SensorKind::kRadar4d, 200);
    const PointCloud once = filter_to_range(r, AxisBox{});
    CHECK(filter_to_range(once, AxisBox{}) == once);
    std::size_t want = 0;
    for (const auto& p : r.points) {
      want += p.x() >= 0 && p.x() < 75.2 && p.y() >= -75.2 && p.y() < 75.2 && p.z() >= -2 && p.z() < 4;
    }
    CHECK(once.size() == want);
  }
}

TEST_CASE("event voxel grid: bin centres, midpoint split and errors") {
  EventStream s{4, 3, {{1, 2, 0, 1}}};
  CameraImage g = events_to_voxel_grid(s, 0, 400);
  CHECK(g.data.channels() == 5);
  CHECK(g.data.at(2, 1, 0) == 1.0);
  for (int b = 1; b < 5; ++b) CHECK(g.data.at(2, 1, b) == 0.0);

  // Bins sit at t = 0, 100, 200, 300, 400; t = 150 lies midway between 1 and 2.
  s.events = {{0, 0, 150, 1}};
  g = events_to_voxel_grid(s, 0, 400);
  CHECK(g.data.at(0, 0, 1) == doctest::Approx(0.5));
  CHECK(g.data.at(0, 0, 2) == doctest::Approx(0.5));

  CHECK(code_of([&] { events_to_voxel_grid(s, 10, 10); }) == ErrorCode::kInvalidArgument);
  s.events = {{0, 0, 500, 1}};
  CHECK(code_of([&] { events_to_voxel_grid(s, 0, 400); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("event voxel grid conserves mass and matches a direct accumulation") {
  std::mt19937_64 rng(21);
  EventStream s{16, 12, {}};
  const std::int64_t t0 = 1000, t1 = 101000;
  std::vector<std::int64_t> ts;
  for (int i = 0; i < 1000; ++i) ts.push_back(t0 + static_cast<std::int64_t>(rng() % (t1 - t0 + 1)));
  std::sort(ts.begin(), ts.end());
  for (auto t : ts) {
    s.events.push_back({static_cast<int>(rng() % 16), static_cast<int>(rng() % 12), t,
                        static_cast<std::int8_t>(rng() % 2 ? 1 : -1)});
  }
  const CameraImage g = events_to_voxel_grid(s, t0, t1);

  Grid want(12, 16, 5);
  double mass = 0.0;
  for (const auto& e : s.events) {
    const double tau = double(e.t_us - t0) / double(t1 - t0) * 4.0;
    for (int b = 0; b < 5; ++b) {
      const double w = std::max(0.0, 1.0 - std::abs(tau - b));
      want.at(e.y, e.x, b) += e.polarity * w;
      mass += w;
    }
  }
  CHECK(mass == doctest::Approx(1000.0).epsilon(1e-12));
  double err = 0.0;
  for (std::size_t i = 0; i < want.data().size(); ++i) {
    err = std::max(err, std::abs(want.data()[i] - g.data.data()[i]));
  }
  CHECK(err < 1e-12);

  // With one polarity, the grid total is the event count.
  for (auto& e : s.events) e.polarity = 1;
  const CameraImage pos = events_to_voxel_grid(s, t0, t1);
  double total = 0.0;
  for (double v : pos.data.data()) total += std::abs(v);
  CHECK(total == doctest::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("yaw normalization lands in (-pi, pi], is idempotent and preserves the angle") {
  std::mt19937_64 rng(2);
  CHECK(normalize_yaw(-M_PI) == doctest::Approx(M_PI));
  CHECK(normalize_yaw(M_PI) == doctest::Approx(M_PI));
  for (int i = 0; i < 1000; ++i) {
    const double y = uniform(rng, -50, 50);
    const double n = normalize_yaw(y);
    CHECK(n > -M_PI);
    CHECK(n <= M_PI);
    CHECK(normalize_yaw(n) == n);
    CHECK(std::cos(n) == doctest::Approx(std::cos(y)).epsilon(1e-9));
    CHECK(std::sin(n) == doctest::Approx(std::sin(y)).epsilon(1e-9));
  }
}
