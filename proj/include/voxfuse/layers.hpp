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

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxfuse/types.hpp"

namespace voxfuse::nn {

double sigmoid(double x);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// y = W x + b.
struct Linear {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  int in_features() const { return static_cast<int>(weight.cols()); }
  int out_features() const { return static_cast<int>(weight.rows()); }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
  // Applies the map to every row of X (N x in) -> N x out.
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& X) const;

  static Linear zeros(int in, int out);
  // Uniform in +-1/sqrt(in), drawn from `rng`.
  static Linear random(int in, int out, std::mt19937_64& rng);
};

/// Linear -> ReLU -> Linear.
struct Mlp {
  Linear hidden;
  Linear output;
  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& X) const;
};

/// 2D convolution over a Grid with zero padding. Weights are laid out
/// [out][in][ky][kx].
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool relu = false;
  std::vector<double> weight;
  std::vector<double> bias;

  double& w(int o, int i, int ky, int kx) {
    return weight[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx];
  }
  double w(int o, int i, int ky, int kx) const {
    return weight[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx];
  }

  int output_size(int input) const { return (input + 2 * padding - kernel) / stride + 1; }

  // Input pixels whose channels are all zero are skipped, so sparse BEV maps
  // convolve in time proportional to their occupancy.
  Grid forward(const Grid& input) const;

  static Conv2d zeros(int in, int out, int kernel, int stride, int padding, bool relu);
  static Conv2d random(int in, int out, int kernel, int stride, int padding, bool relu,
                       std::mt19937_64& rng);
  // Centre-tap identity from the first min(in, out) input channels.
  static Conv2d identity(int in, int out, int kernel = 3);
};

Grid forward(const std::vector<Conv2d>& stack, const Grid& input);

/// Named tensors persisted as {"name": {"shape": [...], "data": [...]}}.
class TensorFile {
 public:
  void put(const std::string& name, const Linear& layer);
  void put(const std::string& name, const Conv2d& layer);
  void put(const std::string& name, const Mlp& layer);

  Linear get_linear(const std::string& name) const;
  Conv2d get_conv(const std::string& name) const;
  Mlp get_mlp(const std::string& name) const;
  bool has(const std::string& name) const;

  nlohmann::json to_json() const { return root_; }
  static TensorFile from_json(nlohmann::json j);

 private:
  void put_tensor(const std::string& name, std::vector<int> shape, std::vector<double> data);
  std::pair<std::vector<int>, std::vector<double>> get_tensor(const std::string& name) const;

  nlohmann::json root_ = nlohmann::json::object();
};

}  // namespace voxfuse::nn
