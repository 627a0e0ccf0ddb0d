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

#include <random>

#include "support.hpp"
#include "voxfuse/error.hpp"
#include "voxfuse/fusion.hpp"

using namespace voxfuse;
using voxfuse::testing::uniform;

namespace {

// Tent-kernel bilinear read: sum over every cell of
// max(0, 1 - |x - col|) * max(0, 1 - |y - row|) * value.
Eigen::VectorXd tent_sample(const Grid& g, double x, double y) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.channels());
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      const double w = std::max(0.0, 1.0 - std::abs(x - c)) * std::max(0.0, 1.0 - std::abs(y - r));
      if (w == 0.0) continue;
      for (int k = 0; k < g.channels(); ++k) out(k) += w * g.at(r, c, k);
    }
  }
  return out;
}

Grid random_grid(std::mt19937_64& rng, int rows, int cols, int ch) {
  Grid g(rows, cols, ch);
  for (auto& v : g.data()) v = uniform(rng, -1, 1);
  return g;
}

Eigen::VectorXd attention_oracle(const Eigen::VectorXd& q, const Eigen::MatrixXd& K,
                                 const Eigen::MatrixXd& V, const Eigen::VectorXd* prior) {
  const double scale = 1.0 / std::sqrt(double(q.size()));
  std::vector<double> s(std::size_t(K.rows()));
  double mx = -1e300;
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    double dot = 0.0;
    for (Eigen::Index k = 0; k < q.size(); ++k) dot += q(k) * K(i, k);
    s[std::size_t(i)] = dot * scale + (prior ? (*prior)(i) : 0.0);
    mx = std::max(mx, s[std::size_t(i)]);
  }
  double z = 0.0;
  for (auto& v : s) z += (v = std::exp(v - mx));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(V.cols());
  for (Eigen::Index i = 0; i < K.rows(); ++i) out += (s[std::size_t(i)] / z) * V.row(i).transpose();
  return out;
}

CameraModel forward_camera(int w, int h, double f) {
  CameraModel c;
  c.modality = ImageModality::kThermal;
  c.K << f, 0, w / 2.0, 0, f, h / 2.0, 0, 0, 1;
  c.R << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  c.width = w;
  c.height = h;
  return c;
}

}  // namespace

TEST_CASE("bilinear_sample equals a tent-kernel oracle, including borders") {
  std::mt19937_64 rng(1);
  const Grid g = random_grid(rng, 6, 8, 3);
  for (int i = 0; i < 2000; ++i) {
    const double x = uniform(rng, -2, 9);
    const double y = uniform(rng, -2, 7);
    CHECK((bilinear_sample(g, x, y) - tent_sample(g, x, y)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK((bilinear_sample(g, 3, 2) - Eigen::Map<const Eigen::VectorXd>(g.pixel(2, 3).data(), 3))
            .norm() < 1e-15);
}

TEST_CASE("deformable aggregation with zero offsets equals the bilinear oracle") {
  std::mt19937_64 rng(2);
  const int cv = 6, ci = 4, Q = 4;
  const CameraModel cam = forward_camera(64, 48, 32);
  const ProjectionMatrix M = projection_matrix(cam);
  for (int trial = 0; trial < 200; ++trial) {
    FusionWeights w = FusionWeights::random(cv, ci, {ImageModality::kThermal}, Q, rng());
    CameraBranchWeights& b = w.branches.at(ImageModality::kThermal);
    b.sampler.weight.setZero();
    for (int q = 0; q < Q; ++q) {
      b.sampler.bias(3 * q) = 0.0;
      b.sampler.bias(3 * q + 1) = 0.0;
    }
    ImageFeatureMap fmap{ImageModality::kThermal, random_grid(rng, 12, 16, ci), 4};
    const Eigen::Vector3d p(uniform(rng, 3, 20), uniform(rng, -4, 4), uniform(rng, -2, 2));
    const Eigen::VectorXd f = Eigen::VectorXd::Random(cv);
    const VoxelSampling s = sample_voxel(f, p, fmap, cam, M, b, w);
    if (!s.visible) continue;

    const Eigen::Vector3d pc = cam.R * p + cam.t;
    const double u = cam.K(0, 0) * pc.x() / pc.z() + cam.K(0, 2);
    const double v = cam.K(1, 1) * pc.y() / pc.z() + cam.K(1, 2);
    const Eigen::VectorXd want = tent_sample(fmap.features, u / 4.0, v / 4.0);
    CHECK((s.aggregated - want).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(s.sample_weights.sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("deformable samples read the tent oracle at every offset location") {
  std::mt19937_64 rng(3);
  const CameraModel cam = forward_camera(64, 48, 32);
  FusionWeights w = FusionWeights::random(5, 3, {ImageModality::kThermal}, 4, 17);
  ImageFeatureMap fmap{ImageModality::kThermal, random_grid(rng, 12, 16, 3), 4};
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector3d p(uniform(rng, 3, 20), uniform(rng, -4, 4), uniform(rng, -2, 2));
    const auto s = sample_voxel(Eigen::VectorXd::Random(5) * 3, p, fmap, cam, projection_matrix(cam),
                                w.branches.at(ImageModality::kThermal), w);
    if (!s.visible) continue;
    Eigen::VectorXd agg = Eigen::VectorXd::Zero(3);
    for (int q = 0; q < 4; ++q) {
      const auto& loc = s.locations[std::size_t(q)];
      const Eigen::VectorXd t = tent_sample(fmap.features, loc.x(), loc.y());
      CHECK((s.samples.row(q).transpose() - t).cwiseAbs().maxCoeff() < 1e-12);
      agg += s.sample_weights(q) * t;
    }
    CHECK((s.aggregated - agg).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("voxels outside the image keep their feature") {
  const CameraModel cam = forward_camera(64, 48, 32);
  FusionWeights w = FusionWeights::random(5, 3, {ImageModality::kThermal}, 4, 1);
  ImageFeatureMap fmap{ImageModality::kThermal, Grid(12, 16, 3, 1.0), 4};
  const Eigen::VectorXd f = Eigen::VectorXd::LinSpaced(5, -1, 1);
  const auto& b = w.branches.at(ImageModality::kThermal);
  const auto M = projection_matrix(cam);
  CHECK_FALSE(sample_voxel(f, {-5, 0, 0}, fmap, cam, M, b, w).visible);
  CHECK(sample_voxel(f, {-5, 0, 0}, fmap, cam, M, b, w).enhanced == f);
  CHECK(sample_voxel(f, {1, 30, 0}, fmap, cam, M, b, w).enhanced == f);
}

TEST_CASE("zero output projection makes enhancement an identity") {
  std::mt19937_64 rng(4);
  const CameraModel cam = forward_camera(64, 48, 32);
  FusionWeights w = FusionWeights::random(4, 3, {ImageModality::kThermal}, 4, 5);
  auto& b = w.branches.at(ImageModality::kThermal);
  b.output.weight.setZero();
  b.output.bias.setZero();
  SparseVoxelSet set;
  set.spec.voxel_channels = 4;
  for (int i = 0; i < 30; ++i) {
    set.indices.push_back({i + 10, 188, 5});
    set.centroids.push_back(set.spec.voxel_center(set.indices.back()));
    set.counts.push_back(1);
  }
  set.features = Eigen::MatrixXd::Random(30, 4);
  ImageFeatureMap fmap{ImageModality::kThermal, random_grid(rng, 12, 16, 3), 4};
  CHECK(enhance_voxels(set, fmap, cam, w) == set.features);
}

TEST_CASE("attention matches the softmax oracle; uniform prior is neutral") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 2 + int(rng() % 6), n = 1 + int(rng() % 6), dv = 1 + int(rng() % 5);
    const Eigen::VectorXd q = Eigen::VectorXd::Random(d) * 2;
    const Eigen::MatrixXd K = Eigen::MatrixXd::Random(n, d) * 2;
    const Eigen::MatrixXd V = Eigen::MatrixXd::Random(n, dv);
    const Eigen::VectorXd prior = Eigen::VectorXd::Random(n);
    const auto a = attention(q, K, V);
    const auto b = attention(q, K, V, &prior);
    CHECK((a.output - attention_oracle(q, K, V, nullptr)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((b.output - attention_oracle(q, K, V, &prior)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.weights.sum() == doctest::Approx(1.0));
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(n, -std::log(double(n)));
    CHECK((attention(q, K, V, &flat).output - a.output).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention query Jacobian matches central differences") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 150; ++trial) {
    const int d = 2 + int(rng() % 6), n = 2 + int(rng() % 5), dv = 1 + int(rng() % 5);
    const Eigen::VectorXd q = Eigen::VectorXd::Random(d);
    const Eigen::MatrixXd K = Eigen::MatrixXd::Random(n, d) * 2;
    const Eigen::MatrixXd V = Eigen::MatrixXd::Random(n, dv);
    const Eigen::VectorXd prior = Eigen::VectorXd::Random(n);
    const Eigen::VectorXd* pp = trial % 2 ? &prior : nullptr;
    const Eigen::MatrixXd J = attention_query_jacobian(q, K, V, pp);
    Eigen::MatrixXd num(dv, d);
    const double h = 1e-5;
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd qp = q, qm = q;
      qp(k) += h;
      qm(k) -= h;
      num.col(k) = (attention(qp, K, V, pp).output - attention(qm, K, V, pp).output) / (2 * h);
    }
    CHECK((J - num).norm() / std::max(num.norm(), 1e-12) < 1e-5);
  }
}

TEST_CASE("gates lie in (0,1), are monotone in the block mean and have the right gradient") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 150; ++trial) {
    const int nv = 1 + int(rng() % 8), cv = 1 + int(rng() % 5), k = 1 + int(rng() % 3);
    std::vector<Eigen::MatrixXd> blocks;
    for (int m = 0; m < k; ++m) blocks.push_back(Eigen::MatrixXd::Random(nv, cv) * 3);
    const GateResult r = gate_and_reweight(blocks);
    for (int m = 0; m < k; ++m) {
      const double g = r.gates[std::size_t(m)];
      CHECK(g > 0.0);
      CHECK(g < 1.0);
      CHECK(g == doctest::Approx(1.0 / (1.0 + std::exp(-blocks[std::size_t(m)].mean()))));
      CHECK((r.reweighted[std::size_t(m)] - g * blocks[std::size_t(m)]).norm() < 1e-12);
    }
    Eigen::MatrixXd up = blocks[0];
    up(0, 0) += uniform(rng, 0.0, 2.0);
    CHECK(gate_and_reweight({up}).gates[0] >= r.gates[0]);

    const double h = 1e-5;
    const int i = int(rng() % nv), j = int(rng() % cv);
    Eigen::MatrixXd bp = blocks[0], bm = blocks[0];
    bp(i, j) += h;
    bm(i, j) -= h;
    const double num = (gate_and_reweight({bp}).gates[0] - gate_and_reweight({bm}).gates[0]) / (2 * h);
    const double ana = gate_gradient(blocks[0]);
    CHECK(std::abs(ana - num) / std::max(std::abs(num), 1e-12) < 1e-5);
  }
  CHECK_THROWS_AS(gate_and_reweight({Eigen::MatrixXd(0, 3)}), Error);
}

TEST_CASE("fuse_final applies the FFN to the per-voxel concatenation") {
  std::mt19937_64 rng(8);
  const int nv = 7, cv = 3;
  std::vector<Eigen::MatrixXd> gated = {Eigen::MatrixXd::Random(nv, cv), Eigen::MatrixXd::Random(nv, cv)};
  const Eigen::MatrixXd orig = Eigen::MatrixXd::Random(nv, cv);
  nn::Mlp ffn{nn::Linear::random(3 * cv, 5, rng), nn::Linear::random(5, cv, rng)};
  const Eigen::MatrixXd got = fuse_final(gated, orig, ffn);
  for (int r = 0; r < nv; ++r) {
    Eigen::VectorXd cat(3 * cv);
    cat << gated[0].row(r).transpose(), gated[1].row(r).transpose(), orig.row(r).transpose();
    const Eigen::VectorXd hid = (ffn.hidden.weight * cat + ffn.hidden.bias).cwiseMax(0.0);
    const Eigen::VectorXd want = ffn.output.weight * hid + ffn.output.bias;
    CHECK((got.row(r).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("literal attention over one key returns the projected aggregate") {
  std::mt19937_64 rng(9);
  const CameraModel cam = forward_camera(64, 48, 32);
  FusionWeights w = FusionWeights::random(4, 3, {ImageModality::kThermal}, 4, 3);
  w.mode = AttentionMode::kLiteral;
  const auto& b = w.branches.at(ImageModality::kThermal);
  ImageFeatureMap fmap{ImageModality::kThermal, random_grid(rng, 12, 16, 3), 4};
  const Eigen::VectorXd f = Eigen::VectorXd::Random(4);
  const auto s = sample_voxel(f, {10, 0.5, 0.2}, fmap, cam, projection_matrix(cam), b, w);
  REQUIRE(s.visible);
  CHECK(s.attention_weights.size() == 1);
  const Eigen::VectorXd want = f + b.output(b.value(s.aggregated));
  CHECK((s.enhanced - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("image features: block-mean downsampling and backbone output size") {
  std::mt19937_64 rng(10);
  const Grid g = random_grid(rng, 9, 10, 2);
  const Grid d = downsample_mean(g, 2);
  REQUIRE(d.rows() == 4);
  REQUIRE(d.cols() == 5);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 5; ++c) {
      const double want = (g.at(2 * r, 2 * c, 1) + g.at(2 * r + 1, 2 * c, 1) +
                           g.at(2 * r, 2 * c + 1, 1) + g.at(2 * r + 1, 2 * c + 1, 1)) / 4;
      CHECK(d.at(r, c, 1) == doctest::Approx(want));
    }
  }
  CHECK(default_downsample(ImageModality::kRgb) == 4);
  CHECK(default_downsample(ImageModality::kThermal) == 1);
  CHECK(default_downsample(ImageModality::kEventGrid) == 2);

  const auto stub = ImageBackboneStub::random(ImageModality::kEventGrid, 8, rng);
  CameraImage img{ImageModality::kEventGrid, random_grid(rng, 240, 320, 5)};
  const ImageFeatureMap fm = extract_image_features(img, stub);
  CHECK(fm.stride == 8);
  CHECK(fm.features.rows() == 30);
  CHECK(fm.features.cols() == 40);
  CHECK(fm.features.channels() == 8);
}
