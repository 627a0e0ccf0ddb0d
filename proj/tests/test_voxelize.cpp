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

#include <map>
#include <random>

#include "support.hpp"
#include "voxfuse/error.hpp"
#include "voxfuse/voxelize.hpp"

using namespace voxfuse;
using voxfuse::testing::uniform;

namespace {

VoxelGridSpec small_spec(int nx, int ny, int nz, int stride, int cv) {
  VoxelGridSpec s;
  s.range.min = {0, 0, 0};
  s.range.max = {0.4 * nx, 0.4 * ny, 0.4 * nz};
  s.bev_stride = stride;
  s.voxel_channels = cv;
  s.bev_channels = cv;
  return s;
}

nn::Linear identity_lift(int n) {
  nn::Linear l = nn::Linear::zeros(n, n);
  l.weight.setIdentity();
  return l;
}

PointCloud random_points(std::mt19937_64& rng, const VoxelGridSpec& s, int n, int channels) {
  PointCloud c(SensorKind::kLidarLong, channels);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) p(a) = uniform(rng, s.range.min(a), s.range.max(a) - 1e-9);
    std::vector<double> f(static_cast<std::size_t>(channels));
    for (auto& v : f) v = uniform(rng, -1, 1);
    c.push_back(p, f);
  }
  return c;
}

// Direct zero-padded convolution over a dense grid.
Grid naive_conv(const Grid& in, const nn::Conv2d& k) {
  const int oh = (in.rows() + 2 * k.padding - k.kernel) / k.stride + 1;
  const int ow = (in.cols() + 2 * k.padding - k.kernel) / k.stride + 1;
  Grid out(oh, ow, k.out_channels);
  for (int o = 0; o < k.out_channels; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = k.bias.empty() ? 0.0 : k.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < k.in_channels; ++i) {
          for (int ky = 0; ky < k.kernel; ++ky) {
            for (int kx = 0; kx < k.kernel; ++kx) {
              const int r = y * k.stride + ky - k.padding;
              const int c = x * k.stride + kx - k.padding;
              if (r < 0 || c < 0 || r >= in.rows() || c >= in.cols()) continue;
              acc += k.w(o, i, ky, kx) * in.at(r, c, i);
            }
          }
        }
        out.at(y, x, o) = k.relu ? std::max(0.0, acc) : acc;
      }
    }
  }
  return out;
}

double max_abs_diff(const Grid& a, const Grid& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("default grid spec") {
  VoxelGridSpec s;
  s.validate();
  CHECK(s.dims() == std::array<int, 3>{188, 376, 15});
  CHECK(s.bev_rows() == 94);
  CHECK(s.bev_cols() == 188);
  VoxelGridSpec bad = s;
  bad.voxel_size = {0.3, 0.4, 0.4};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("voxelize_points matches a brute-force binning") {
  std::mt19937_64 rng(1);
  const VoxelGridSpec s = small_spec(6, 6, 4, 2, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud cloud = random_points(rng, s, 300, 2);

    struct Cell {
      std::vector<std::size_t> members;
    };
    std::map<std::array<int, 3>, Cell> oracle;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      oracle[{int(p.x() / 0.4), int(p.y() / 0.4), int(p.z() / 0.4)}].members.push_back(i);
    }

    const nn::Linear lift = nn::Linear::random(5, 5, rng);
    const SparseVoxelSet raw = voxelize_points(cloud, s, identity_lift(5));
    const SparseVoxelSet out = voxelize_points(cloud, s, lift);
    REQUIRE(out.size() == oracle.size());
    std::size_t k = 0;
    for (const auto& [key, cell] : oracle) {
      CHECK(out.indices[k] == VoxelIndex{key[0], key[1], key[2]});
      Eigen::VectorXd want = Eigen::VectorXd::Zero(5);
      for (auto i : cell.members) {
        want(0) += cloud.feature(i, 0);
        want(1) += cloud.feature(i, 1);
        want.tail<3>() += cloud.points[i];
      }
      want /= double(cell.members.size());
      const Eigen::Vector3d centroid = want.tail<3>();
      const Eigen::Vector3d centre = (Eigen::Vector3d(key[0], key[1], key[2]).array() + 0.5) * 0.4;
      want.tail<3>() -= centre;
      CHECK(out.counts[k] == int(cell.members.size()));
      CHECK((out.centroids[k] - centroid).norm() < 1e-12);
      CHECK((raw.features.row(k).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
      const Eigen::VectorXd lifted = lift.weight * want + lift.bias;
      CHECK((out.features.row(k).transpose() - lifted).cwiseAbs().maxCoeff() < 1e-12);
      ++k;
    }
    out.validate();
  }
}

TEST_CASE("voxelize_points rejects out-of-range points and wrong lift widths") {
  const VoxelGridSpec s = small_spec(4, 4, 4, 2, 4);
  PointCloud c(SensorKind::kLidarLong, 1);
  c.push_back({5, 0.1, 0.1}, {1});
  CHECK_THROWS_AS(voxelize_points(c, s, identity_lift(4)), Error);
  PointCloud ok(SensorKind::kLidarLong, 1);
  ok.push_back({0.1, 0.1, 0.1}, {1});
  try {
    voxelize_points(ok, s, identity_lift(5));
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("union_fuse follows the three-case definition on every occupancy pattern") {
  // Three voxels of a 5^3 grid, each empty, LiDAR-only, radar-only or both:
  // 4^3 patterns.
  const VoxelGridSpec s = small_spec(5, 5, 5, 1, 3);
  const std::array<VoxelIndex, 3> cells = {VoxelIndex{0, 0, 0}, VoxelIndex{2, 4, 1},
                                           VoxelIndex{4, 1, 3}};
  std::mt19937_64 rng(2);
  const FusionProjector proj{nn::Linear::random(6, 3, rng)};

  for (int pattern = 0; pattern < 64; ++pattern) {
    SparseVoxelSet L, R;
    L.spec = R.spec = s;
    std::vector<Eigen::VectorXd> lf, rf;
    std::map<VoxelIndex, Eigen::VectorXd> want;
    for (int v = 0; v < 3; ++v) {
      const int state = (pattern >> (2 * v)) & 3;
      const Eigen::VectorXd fl = Eigen::VectorXd::Random(3);
      const Eigen::VectorXd fr = Eigen::VectorXd::Random(3);
      const Eigen::Vector3d centre = s.voxel_center(cells[v]);
      if (state & 1) {
        L.indices.push_back(cells[v]);
        L.centroids.push_back(centre);
        L.counts.push_back(2);
        lf.push_back(fl);
      }
      if (state & 2) {
        R.indices.push_back(cells[v]);
        R.centroids.push_back(centre);
        R.counts.push_back(1);
        rf.push_back(fr);
      }
      if (state == 1) want[cells[v]] = fl;
      if (state == 2) want[cells[v]] = fr;
      if (state == 3) {
        Eigen::VectorXd cat(6);
        cat << fl, fr;
        want[cells[v]] = proj.map.weight * cat + proj.map.bias;
      }
    }
    L.features.resize(Eigen::Index(lf.size()), 3);
    for (std::size_t i = 0; i < lf.size(); ++i) L.features.row(Eigen::Index(i)) = lf[i].transpose();
    R.features.resize(Eigen::Index(rf.size()), 3);
    for (std::size_t i = 0; i < rf.size(); ++i) R.features.row(Eigen::Index(i)) = rf[i].transpose();

    const SparseVoxelSet out = union_fuse(L, R, proj);
    REQUIRE(out.size() == want.size());
    std::size_t k = 0;
    for (const auto& [idx, f] : want) {
      CHECK(out.indices[k] == idx);
      CHECK((out.features.row(Eigen::Index(k)).transpose() - f).cwiseAbs().maxCoeff() < 1e-12);
      ++k;
    }
  }
}

TEST_CASE("union_fuse index set is the union of the inputs") {
  std::mt19937_64 rng(3);
  const VoxelGridSpec s = small_spec(10, 10, 5, 2, 4);
  const nn::Linear lift = nn::Linear::random(4, 4, rng);
  const FusionProjector proj{nn::Linear::random(8, 4, rng)};
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = voxelize_points(random_points(rng, s, 80, 1), s, lift);
    const auto b = voxelize_points(random_points(rng, s, 80, 1), s, lift);
    const auto u = union_fuse(a, b, proj);
    std::vector<VoxelIndex> want(a.indices);
    want.insert(want.end(), b.indices.begin(), b.indices.end());
    std::sort(want.begin(), want.end());
    want.erase(std::unique(want.begin(), want.end()), want.end());
    CHECK(u.indices == want);
    u.validate();
    int total = 0;
    for (int c : u.counts) total += c;
    CHECK(total == 160);
  }
}

TEST_CASE("collapse_to_bev equals a dense vertical sum then block mean") {
  std::mt19937_64 rng(4);
  const VoxelGridSpec s = small_spec(8, 6, 4, 2, 3);
  const nn::Linear lift = nn::Linear::random(4, 3, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const auto set = voxelize_points(random_points(rng, s, 60, 1), s, lift);
    std::vector<double> dense(8 * 6 * 3, 0.0);
    for (std::size_t k = 0; k < set.size(); ++k) {
      for (int c = 0; c < 3; ++c) {
        dense[(std::size_t(set.indices[k].x) * 6 + set.indices[k].y) * 3 + c] += set.features(Eigen::Index(k), c);
      }
    }
    Grid want(4, 3, 3);
    for (int r = 0; r < 4; ++r) {
      for (int col = 0; col < 3; ++col) {
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int dx = 0; dx < 2; ++dx) {
            for (int dy = 0; dy < 2; ++dy) acc += dense[(std::size_t(2 * r + dx) * 6 + 2 * col + dy) * 3 + c];
          }
          want.at(r, col, c) = acc / 4.0;
        }
      }
    }
    CHECK(max_abs_diff(collapse_to_bev(set), want) < 1e-12);
  }
}

TEST_CASE("Conv2d and bev_concat_fuse match a direct convolution") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Grid a(7, 9, 3), b(7, 9, 2);
    for (auto& v : a.data()) v = rng() % 3 == 0 ? uniform(rng, -1, 1) : 0.0;
    for (auto& v : b.data()) v = rng() % 3 == 0 ? uniform(rng, -1, 1) : 0.0;
    const auto conv = nn::Conv2d::random(5, 4, 3, 1, 1, trial % 2 == 0, rng);
    Grid cat(7, 9, 5);
    for (int r = 0; r < 7; ++r) {
      for (int c = 0; c < 9; ++c) {
        for (int k = 0; k < 3; ++k) cat.at(r, c, k) = a.at(r, c, k);
        for (int k = 0; k < 2; ++k) cat.at(r, c, 3 + k) = b.at(r, c, k);
      }
    }
    CHECK(max_abs_diff(bev_concat_fuse(a, b, conv), naive_conv(cat, conv)) < 1e-12);

    const auto strided = nn::Conv2d::random(3, 2, 3, 2, 1, true, rng);
    CHECK(max_abs_diff(strided.forward(a), naive_conv(a, strided)) < 1e-12);
  }
}

TEST_CASE("bev_occupancy sums counts above the height cut") {
  std::mt19937_64 rng(6);
  const VoxelGridSpec s = small_spec(8, 8, 5, 2, 2);
  const auto set = voxelize_points(random_points(rng, s, 200, 1), s, nn::Linear::random(4, 2, rng));
  const OccupancyMap occ = bev_occupancy(set, 0.8);
  std::vector<int> want(16, 0);
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (set.centroids[k].z() >= 0.8) want[std::size_t(set.indices[k].x / 2) * 4 + set.indices[k].y / 2] += set.counts[k];
  }
  CHECK(occ.counts == want);
}

TEST_CASE("BEV collapse is translation-equivariant at stride granularity") {
  std::mt19937_64 rng(7);
  const VoxelGridSpec s = small_spec(12, 12, 3, 2, 3);
  const nn::Linear lift = nn::Linear::random(4, 3, rng);
  PointCloud c = random_points(rng, s, 40, 1);
  for (auto& p : c.points) p.head<2>() = p.head<2>() * 0.5;  // keep room to shift
  PointCloud shifted = c;
  for (auto& p : shifted.points) p += Eigen::Vector3d(0.8 * 2, 0.8 * 1, 0);
  const Grid a = collapse_to_bev(voxelize_points(c, s, lift));
  const Grid b = collapse_to_bev(voxelize_points(shifted, s, lift));
  for (int r = 0; r < 4; ++r) {
    for (int col = 0; col < 5; ++col) {
      for (int k = 0; k < 3; ++k) CHECK(b.at(r + 2, col + 1, k) == doctest::Approx(a.at(r, col, k)).epsilon(1e-9));
    }
  }
}
