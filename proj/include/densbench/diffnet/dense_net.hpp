// Copyright 2026 The densbench Authors.
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

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "densbench/diffnet/tape.hpp"
#include "densbench/rng.hpp"

namespace densbench::diffnet {

enum class InitScheme { kUniform, kXavier };
enum class Mode { kTrain, kEval };

std::string to_string(InitScheme scheme);
InitScheme init_scheme_from_string(const std::string& name);

/// Layer layout of a DenseNet.
///
/// `depth` counts affine layers: input -> width, (depth - 2) hidden
/// width -> width layers, width -> output. With `residual`, consecutive
/// pairs of hidden layers form blocks h + f2(f1(h)).
struct NetShape {
  Eigen::Index input_dim = 1;
  Eigen::Index width = 64;
  int depth = 3;
  Eigen::Index output_dim = 1;
  Activation activation = Activation::kLeakyRelu;
  bool residual = false;
  double dropout_rate = 0.0;
  bool batch_norm = false;
  bool spectral_norm = false;

  void validate() const;
};

/// Persistent power-iteration vectors for one weight matrix.
struct SpectralState {
  Vector u;  // left, length = rows
  Vector v;  // right, length = cols
};

/// Runs `iterations` warm-started power iterations and returns
/// weight / sigma_hat with sigma_hat = u^T W v floored at 1e-12.
Matrix spectral_normalize(const Matrix& weight, SpectralState& state, int iterations);

/// Top singular value estimate u^T W v for the current state.
double spectral_sigma(const Matrix& weight, const SpectralState& state);

struct AffineLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
  Activation activation = Activation::kIdentity;
  SpectralState spectral;
  bool has_batch_norm = false;
  Matrix bn_gamma;  // 1 x out
  Matrix bn_beta;   // 1 x out
  Eigen::RowVectorXd running_mean;
  Eigen::RowVectorXd running_var;
};

/// Gradient buffers aligned with DenseNet::parameters().
struct NetGradients {
  std::vector<Matrix> grads;

  void set_zero();
  bool all_finite() const;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

class DenseNet {
 public:
  DenseNet() = default;
  /// Weights from Uniform(+-1/sqrt(fan_in)) or Xavier Uniform(+-sqrt(6/(fan_in+fan_out)));
  /// biases zero. Deterministic per seed.
  DenseNet(NetShape shape, InitScheme scheme, std::uint64_t seed);

  const NetShape& shape() const { return shape_; }
  std::vector<AffineLayer>& layers() { return layers_; }
  const std::vector<AffineLayer>& layers() const { return layers_; }

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  NetGradients zero_gradients() const;

  /// Records the forward pass. Parameters become tape parameters feeding
  /// `grads` when non-null, constants otherwise. Train mode samples dropout
  /// masks from the net's RNG and updates batch-norm running statistics.
  Var forward(Tape& tape, Var input, Mode mode, NetGradients* grads);

  struct TangentOutput {
    Var output;
    /// d output / d input[k] per input coordinate, each batch x output_dim.
    std::vector<Var> input_gradient;
  };

  /// Forward pass that also carries input tangents as tape nodes, so the
  /// input gradient itself can be differentiated w.r.t. parameters.
  TangentOutput forward_with_input_gradient(Tape& tape, Var input, Mode mode, NetGradients* grads);

  /// Eval-mode forward without a tape.
  Matrix predict(const Matrix& input) const;

  /// One or more power iterations on every layer's spectral state.
  void power_iterate(int iterations);
  /// Effective (normalized when enabled) weight of layer i.
  Matrix effective_weight(std::size_t i) const;

  Rng& rng() { return rng_; }

  friend void to_json(nlohmann::json& j, const DenseNet& net);
  friend void from_json(const nlohmann::json& j, DenseNet& net);

 private:
  Var forward_with_input_gradient_impl(Tape& tape, Var input, Mode mode, NetGradients* grads,
                                       std::vector<Var>* tangents);
  Var layer_forward(Tape& tape, std::size_t index, Var h, Mode mode, NetGradients* grads,
                    std::size_t& param_cursor, std::vector<Var>* tangents);
  Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols);

  NetShape shape_;
  std::vector<AffineLayer> layers_;
  Rng rng_;
};

/// Mean over the batch of ||d c / d input||, differentiated w.r.t. the net
/// parameters through the tangent path (eval mode).
NetGradients grad_of_input_gradient(DenseNet& net, const Matrix& input);

void to_json(nlohmann::json& j, const NetShape& shape);
void from_json(const nlohmann::json& j, NetShape& shape);

}  // namespace densbench::diffnet
