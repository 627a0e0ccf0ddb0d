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

#include "voxfuse/layers.hpp"

#include <algorithm>
#include <cmath>

#include "voxfuse/error.hpp"

namespace voxfuse::nn {

using nlohmann::json;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) return logits;
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

Eigen::VectorXd Linear::operator()(const Eigen::VectorXd& x) const {
  if (x.size() != weight.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "linear input has " + std::to_string(x.size()) +
                                               " features, expected " +
                                               std::to_string(weight.cols()));
  }
  return weight * x + bias;
}

Eigen::MatrixXd Linear::apply_rows(const Eigen::MatrixXd& X) const {
  if (X.cols() != weight.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "linear input width " + std::to_string(X.cols()) +
                                               " != " + std::to_string(weight.cols()));
  }
  Eigen::MatrixXd Y = X * weight.transpose();
  Y.rowwise() += bias.transpose();
  return Y;
}

Linear Linear::zeros(int in, int out) {
  return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

Linear Linear::random(int in, int out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  Linear l = zeros(in, out);
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) l.weight(r, c) = u(rng);
  for (int r = 0; r < out; ++r) l.bias(r) = u(rng);
  return l;
}

Eigen::VectorXd Mlp::operator()(const Eigen::VectorXd& x) const {
  return output(hidden(x).cwiseMax(0.0));
}

Eigen::MatrixXd Mlp::apply_rows(const Eigen::MatrixXd& X) const {
  return output.apply_rows(hidden.apply_rows(X).cwiseMax(0.0));
}

Grid Conv2d::forward(const Grid& input) const {
  if (input.channels() != in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "conv expects " + std::to_string(in_channels) +
                                               " channels, got " +
                                               std::to_string(input.channels()));
  }
  const int out_rows = output_size(input.rows());
  const int out_cols = output_size(input.cols());
  if (out_rows <= 0 || out_cols <= 0) {
    throw Error(ErrorCode::kShapeMismatch, "conv input smaller than its kernel");
  }
  Grid out(out_rows, out_cols, out_channels);
  for (int r = 0; r < out_rows; ++r)
    for (int c = 0; c < out_cols; ++c)
      for (int o = 0; o < out_channels; ++o) out.at(r, c, o) = bias[static_cast<std::size_t>(o)];

  // Scatter every non-zero input pixel into the outputs whose window covers it.
  for (int r = 0; r < input.rows(); ++r) {
    for (int c = 0; c < input.cols(); ++c) {
      const auto px = input.pixel(r, c);
      if (std::all_of(px.begin(), px.end(), [](double v) { return v == 0.0; })) continue;
      for (int ky = 0; ky < kernel; ++ky) {
        const int num_y = r + padding - ky;
        if (num_y < 0 || num_y % stride != 0) continue;
        const int oy = num_y / stride;
        if (oy >= out_rows) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int num_x = c + padding - kx;
          if (num_x < 0 || num_x % stride != 0) continue;
          const int ox = num_x / stride;
          if (ox >= out_cols) continue;
          auto dst = out.pixel(oy, ox);
          for (int o = 0; o < out_channels; ++o) {
            double acc = 0.0;
            for (int i = 0; i < in_channels; ++i) acc += w(o, i, ky, kx) * px[i];
            dst[o] += acc;
          }
        }
      }
    }
  }
  if (relu) {
    for (double& v : out.data()) v = std::max(v, 0.0);
  }
  return out;
}

Conv2d Conv2d::zeros(int in, int out, int kernel, int stride, int padding, bool relu) {
  if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0 || padding < 0) {
    throw Error(ErrorCode::kInvalidArgument, "bad conv geometry");
  }
  Conv2d c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel = kernel;
  c.stride = stride;
  c.padding = padding;
  c.relu = relu;
  c.weight.assign(static_cast<std::size_t>(out) * in * kernel * kernel, 0.0);
  c.bias.assign(static_cast<std::size_t>(out), 0.0);
  return c;
}

Conv2d Conv2d::random(int in, int out, int kernel, int stride, int padding, bool relu,
                      std::mt19937_64& rng) {
  Conv2d c = zeros(in, out, kernel, stride, padding, relu);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : c.weight) v = u(rng);
  for (double& v : c.bias) v = u(rng);
  return c;
}

Conv2d Conv2d::identity(int in, int out, int kernel) {
  Conv2d c = zeros(in, out, kernel, 1, kernel / 2, false);
  for (int k = 0; k < std::min(in, out); ++k) c.w(k, k, kernel / 2, kernel / 2) = 1.0;
  return c;
}

Grid forward(const std::vector<Conv2d>& stack, const Grid& input) {
  Grid x = input;
  for (const auto& layer : stack) x = layer.forward(x);
  return x;
}

void TensorFile::put_tensor(const std::string& name, std::vector<int> shape,
                            std::vector<double> data) {
  root_[name] = {{"shape", std::move(shape)}, {"data", std::move(data)}};
}

std::pair<std::vector<int>, std::vector<double>> TensorFile::get_tensor(
    const std::string& name) const {
  if (!root_.contains(name)) throw Error(ErrorCode::kMissingField, "tensor '" + name + "'");
  const json& t = root_.at(name);
  if (!t.contains("shape") || !t.contains("data")) {
    throw Error(ErrorCode::kMissingField, "tensor '" + name + "' needs shape and data");
  }
  auto shape = t.at("shape").get<std::vector<int>>();
  auto data = t.at("data").get<std::vector<double>>();
  std::size_t expected = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorCode::kShapeMismatch, "negative dimension in '" + name + "'");
    expected *= static_cast<std::size_t>(d);
  }
  if (expected != data.size()) {
    throw Error(ErrorCode::kShapeMismatch, "tensor '" + name + "' declares " +
                                               std::to_string(expected) + " values, holds " +
                                               std::to_string(data.size()));
  }
  return {std::move(shape), std::move(data)};
}

bool TensorFile::has(const std::string& name) const { return root_.contains(name + ".weight"); }

void TensorFile::put(const std::string& name, const Linear& layer) {
  std::vector<double> w(static_cast<std::size_t>(layer.weight.size()));
  for (int r = 0; r < layer.weight.rows(); ++r)
    for (int c = 0; c < layer.weight.cols(); ++c)
      w[static_cast<std::size_t>(r * layer.weight.cols() + c)] = layer.weight(r, c);
  put_tensor(name + ".weight", {layer.out_features(), layer.in_features()}, std::move(w));
  put_tensor(name + ".bias", {layer.out_features()},
             std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size()));
}

Linear TensorFile::get_linear(const std::string& name) const {
  auto [wshape, wdata] = get_tensor(name + ".weight");
  auto [bshape, bdata] = get_tensor(name + ".bias");
  if (wshape.size() != 2 || bshape.size() != 1 || bshape[0] != wshape[0]) {
    throw Error(ErrorCode::kShapeMismatch, "linear '" + name + "' has inconsistent shapes");
  }
  Linear l = Linear::zeros(wshape[1], wshape[0]);
  for (int r = 0; r < wshape[0]; ++r)
    for (int c = 0; c < wshape[1]; ++c)
      l.weight(r, c) = wdata[static_cast<std::size_t>(r * wshape[1] + c)];
  for (int r = 0; r < wshape[0]; ++r) l.bias(r) = bdata[static_cast<std::size_t>(r)];
  return l;
}

void TensorFile::put(const std::string& name, const Conv2d& layer) {
  put_tensor(name + ".weight", {layer.out_channels, layer.in_channels, layer.kernel, layer.kernel},
             layer.weight);
  put_tensor(name + ".bias", {layer.out_channels}, layer.bias);
  root_[name + ".weight"]["stride"] = layer.stride;
  root_[name + ".weight"]["padding"] = layer.padding;
  root_[name + ".weight"]["relu"] = layer.relu;
}

Conv2d TensorFile::get_conv(const std::string& name) const {
  auto [wshape, wdata] = get_tensor(name + ".weight");
  auto [bshape, bdata] = get_tensor(name + ".bias");
  if (wshape.size() != 4 || wshape[2] != wshape[3] || bshape.size() != 1 ||
      bshape[0] != wshape[0]) {
    throw Error(ErrorCode::kShapeMismatch, "conv '" + name + "' has inconsistent shapes");
  }
  const json& meta = root_.at(name + ".weight");
  Conv2d c = Conv2d::zeros(wshape[1], wshape[0], wshape[2], meta.value("stride", 1),
                           meta.value("padding", wshape[2] / 2), meta.value("relu", false));
  c.weight = std::move(wdata);
  c.bias = std::move(bdata);
  return c;
}

void TensorFile::put(const std::string& name, const Mlp& layer) {
  put(name + ".hidden", layer.hidden);
  put(name + ".output", layer.output);
}

Mlp TensorFile::get_mlp(const std::string& name) const {
  Mlp m{get_linear(name + ".hidden"), get_linear(name + ".output")};
  if (m.hidden.out_features() != m.output.in_features()) {
    throw Error(ErrorCode::kShapeMismatch, "mlp '" + name + "' layers do not chain");
  }
  return m;
}

TensorFile TensorFile::from_json(json j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "weight file must be an object");
  TensorFile f;
  f.root_ = std::move(j);
  return f;
}

}  // namespace voxfuse::nn
