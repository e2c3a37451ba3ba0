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

#include "densbench/diffnet/dense_net.hpp"

#include <cmath>

#include "densbench/error.hpp"
#include "densbench/json_util.hpp"

namespace densbench::diffnet {
namespace {

Vector normalized(const Vector& x) { return x / std::max(x.norm(), 1e-12); }

Vector random_unit(Eigen::Index n, Rng& rng) {
  Vector x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = rng.normal();
  return normalized(x);
}

std::size_t params_per_layer(const AffineLayer& layer) { return layer.has_batch_norm ? 4 : 2; }

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string to_string(InitScheme scheme) {
  return scheme == InitScheme::kXavier ? "xavier" : "uniform";
}

InitScheme init_scheme_from_string(const std::string& name) {
  if (name == "xavier") return InitScheme::kXavier;
  if (name == "uniform") return InitScheme::kUniform;
  throw ValidationError("unknown init scheme '" + name + "'");
}

void NetShape::validate() const {
  if (input_dim < 1 || output_dim < 1 || width < 1) throw ValidationError("net dimensions must be >= 1");
  if (depth < 2) throw ValidationError("net depth must be >= 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
}

namespace {
constexpr int kSpectralWarmup = 20;
}  // namespace

Matrix spectral_normalize(const Matrix& weight, SpectralState& state, int iterations) {
  if (iterations < 1) throw ValidationError("spectral_normalize: iterations must be >= 1");
  if (state.u.size() != weight.rows()) state.u = Vector::Ones(weight.rows()).normalized();
  if (state.v.size() != weight.cols()) state.v = Vector::Ones(weight.cols()).normalized();
  for (int i = 0; i < iterations; ++i) {
    state.v = normalized(weight.transpose() * state.u);
    state.u = normalized(weight * state.v);
  }
  return weight / spectral_sigma(weight, state);
}

double spectral_sigma(const Matrix& weight, const SpectralState& state) {
  return std::max(state.u.dot(weight * state.v), 1e-12);
}

void NetGradients::set_zero() {
  for (auto& g : grads) g.setZero();
}

bool NetGradients::all_finite() const {
  for (const auto& g : grads) {
    if (!g.allFinite()) return false;
  }
  return true;
}

DenseNet::DenseNet(NetShape shape, InitScheme scheme, std::uint64_t seed)
    : shape_(shape), rng_(mix_seed(seed, 0xD7)) {
  shape_.validate();
  Rng init_rng(seed);
  const int depth = shape_.depth;
  layers_.resize(static_cast<std::size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    const Eigen::Index fan_in = i == 0 ? shape_.input_dim : shape_.width;
    const Eigen::Index fan_out = i == depth - 1 ? shape_.output_dim : shape_.width;
    const double bound = scheme == InitScheme::kXavier
                             ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out))
                             : 1.0 / std::sqrt(static_cast<double>(fan_in));
    AffineLayer& layer = layers_[static_cast<std::size_t>(i)];
    layer.weight.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = init_rng.uniform(-bound, bound);
    }
    layer.bias = Matrix::Zero(1, fan_out);
    const bool last = i == depth - 1;
    layer.activation = last ? Activation::kIdentity : shape_.activation;
    layer.spectral.u = random_unit(fan_out, init_rng);
    layer.spectral.v = random_unit(fan_in, init_rng);
    if (shape_.spectral_norm) spectral_normalize(layer.weight, layer.spectral, kSpectralWarmup);
    layer.has_batch_norm = shape_.batch_norm && !last;
    if (layer.has_batch_norm) {
      layer.bn_gamma = Matrix::Ones(1, fan_out);
      layer.bn_beta = Matrix::Zero(1, fan_out);
      layer.running_mean = Eigen::RowVectorXd::Zero(fan_out);
      layer.running_var = Eigen::RowVectorXd::Ones(fan_out);
    }
  }
}

std::vector<Matrix*> DenseNet::parameters() {
  std::vector<Matrix*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.has_batch_norm) {
      out.push_back(&layer.bn_gamma);
      out.push_back(&layer.bn_beta);
    }
  }
  return out;
}

std::vector<const Matrix*> DenseNet::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto* p : const_cast<DenseNet*>(this)->parameters()) out.push_back(p);
  return out;
}

NetGradients DenseNet::zero_gradients() const {
  NetGradients g;
  for (const Matrix* p : parameters()) g.grads.push_back(Matrix::Zero(p->rows(), p->cols()));
  return g;
}

Matrix DenseNet::dropout_mask(Eigen::Index rows, Eigen::Index cols) {
  const double keep = 1.0 - shape_.dropout_rate;
  Matrix mask(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng_.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

Var DenseNet::layer_forward(Tape& tape, std::size_t index, Var h, Mode mode, NetGradients* grads,
                            std::size_t& param_cursor, std::vector<Var>* tangents) {
  AffineLayer& layer = layers_[index];
  auto sink = [&](std::size_t k) -> Matrix* {
    return grads ? &grads->grads[param_cursor + k] : nullptr;
  };
  Var w = tape.parameter(layer.weight, sink(0));
  Var b = tape.parameter(layer.bias, sink(1));
  Var gamma{};
  Var beta{};
  if (layer.has_batch_norm) {
    gamma = tape.parameter(layer.bn_gamma, sink(2));
    beta = tape.parameter(layer.bn_beta, sink(3));
  }
  param_cursor += params_per_layer(layer);

  if (shape_.spectral_norm) w = tape.spectral_scale(w, layer.spectral.u, layer.spectral.v);
  Var a = tape.add_row(tape.matmul_t(h, w), b);
  if (tangents) {
    for (Var& t : *tangents) t = tape.matmul_t(t, w);
  }
  if (index + 1 == layers_.size()) return a;

  if (layer.has_batch_norm) {
    if (tangents) throw ValidationError("batch_norm is not supported on the input-gradient path");
    if (mode == Mode::kTrain) {
      Eigen::RowVectorXd mu;
      Eigen::RowVectorXd var;
      a = tape.batch_norm(a, kBatchNormEps, &mu, &var);
      const double n = static_cast<double>(tape.value(a).rows());
      const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
      layer.running_mean = (1.0 - kBatchNormMomentum) * layer.running_mean + kBatchNormMomentum * mu;
      layer.running_var =
          (1.0 - kBatchNormMomentum) * layer.running_var + kBatchNormMomentum * unbias * var;
    } else {
      const Eigen::RowVectorXd inv = (layer.running_var.array() + kBatchNormEps).rsqrt();
      const Eigen::RowVectorXd shift = -layer.running_mean.cwiseProduct(inv);
      a = tape.add_row(tape.mul_row(a, tape.constant(inv)), tape.constant(shift));
    }
    a = tape.add_row(tape.mul_row(a, gamma), beta);
  }

  Var out = tape.activate(a, layer.activation);
  if (tangents) {
    Var slope = tape.activation_slope(a, layer.activation);
    for (Var& t : *tangents) t = tape.mul(t, slope);
  }
  if (mode == Mode::kTrain && shape_.dropout_rate > 0.0) {
    const Matrix mask = dropout_mask(tape.value(out).rows(), tape.value(out).cols());
    out = tape.mul_const(out, mask);
    if (tangents) {
      for (Var& t : *tangents) t = tape.mul_const(t, mask);
    }
  }
  return out;
}

Var DenseNet::forward(Tape& tape, Var input, Mode mode, NetGradients* grads) {
  return forward_with_input_gradient_impl(tape, input, mode, grads, nullptr);
}

DenseNet::TangentOutput DenseNet::forward_with_input_gradient(Tape& tape, Var input, Mode mode,
                                                              NetGradients* grads) {
  const auto rows = tape.value(input).rows();
  std::vector<Var> tangents;
  for (Eigen::Index k = 0; k < shape_.input_dim; ++k) {
    Matrix seed = Matrix::Zero(rows, shape_.input_dim);
    seed.col(k).setOnes();
    tangents.push_back(tape.constant(std::move(seed)));
  }
  Var out = forward_with_input_gradient_impl(tape, input, mode, grads, &tangents);
  return {out, std::move(tangents)};
}

Var DenseNet::forward_with_input_gradient_impl(Tape& tape, Var input, Mode mode,
                                               NetGradients* grads, std::vector<Var>* tangents) {
  if (tape.value(input).cols() != shape_.input_dim) {
    throw ValidationError("input has " + std::to_string(tape.value(input).cols()) +
                          " columns, net expects " + std::to_string(shape_.input_dim));
  }
  if (grads && grads->grads.size() != parameters().size()) {
    throw ValidationError("gradient buffer does not match the net");
  }
  std::size_t cursor = 0;
  const std::size_t last = layers_.size() - 1;
  Var h = layer_forward(tape, 0, input, mode, grads, cursor, tangents);
  std::size_t l = 1;
  while (l < last) {
    if (shape_.residual && l + 1 < last) {
      std::vector<Var> branch_tangents;
      if (tangents) branch_tangents = *tangents;
      Var branch = layer_forward(tape, l, h, mode, grads, cursor, tangents ? &branch_tangents : nullptr);
      branch = layer_forward(tape, l + 1, branch, mode, grads, cursor,
                             tangents ? &branch_tangents : nullptr);
      h = tape.add(h, branch);
      if (tangents) {
        for (std::size_t k = 0; k < tangents->size(); ++k) {
          (*tangents)[k] = tape.add((*tangents)[k], branch_tangents[k]);
        }
      }
      l += 2;
    } else {
      h = layer_forward(tape, l, h, mode, grads, cursor, tangents);
      ++l;
    }
  }
  return layer_forward(tape, last, h, mode, grads, cursor, tangents);
}

Matrix DenseNet::effective_weight(std::size_t i) const {
  const AffineLayer& layer = layers_[i];
  if (!shape_.spectral_norm) return layer.weight;
  return layer.weight / spectral_sigma(layer.weight, layer.spectral);
}

Matrix DenseNet::predict(const Matrix& input) const {
  if (input.cols() != shape_.input_dim) throw ValidationError("predict: input dimension mismatch");
  const std::size_t last = layers_.size() - 1;
  auto apply = [&](std::size_t i, const Matrix& h) -> Matrix {
    const AffineLayer& layer = layers_[i];
    Matrix a = h * effective_weight(i).transpose();
    a.rowwise() += layer.bias.row(0);
    if (i == last) return a;
    if (layer.has_batch_norm) {
      const Eigen::RowVectorXd inv = (layer.running_var.array() + kBatchNormEps).rsqrt();
      const Eigen::RowVectorXd shift = -layer.running_mean.cwiseProduct(inv);
      a = (a.array().rowwise() * inv.array()).matrix();
      a.rowwise() += shift;
      a = (a.array().rowwise() * layer.bn_gamma.row(0).array()).matrix();
      a.rowwise() += layer.bn_beta.row(0);
    }
    return apply_activation(a, layer.activation);
  };
  Matrix h = apply(0, input);
  std::size_t l = 1;
  while (l < last) {
    if (shape_.residual && l + 1 < last) {
      h += apply(l + 1, apply(l, h));
      l += 2;
    } else {
      h = apply(l, h);
      ++l;
    }
  }
  return apply(last, h);
}

void DenseNet::power_iterate(int iterations) {
  for (auto& layer : layers_) spectral_normalize(layer.weight, layer.spectral, iterations);
}

NetGradients grad_of_input_gradient(DenseNet& net, const Matrix& input) {
  NetGradients grads = net.zero_gradients();
  Tape tape;
  Var x = tape.constant(input);
  auto result = net.forward_with_input_gradient(tape, x, Mode::kEval, &grads);
  Var squared = tape.sum_cols(tape.square(result.input_gradient[0]));
  for (std::size_t k = 1; k < result.input_gradient.size(); ++k) {
    squared = tape.add(squared, tape.sum_cols(tape.square(result.input_gradient[k])));
  }
  Var norm = tape.mean(tape.sqrt(squared));
  tape.backward(norm);
  return grads;
}

void to_json(nlohmann::json& j, const NetShape& s) {
  j = {{"input_dim", s.input_dim},         {"width", s.width},
       {"depth", s.depth},                 {"output_dim", s.output_dim},
       {"activation", to_string(s.activation)}, {"residual", s.residual},
       {"dropout_rate", s.dropout_rate},   {"batch_norm", s.batch_norm},
       {"spectral_norm", s.spectral_norm}};
}

void from_json(const nlohmann::json& j, NetShape& s) {
  s.input_dim = j.at("input_dim").get<Eigen::Index>();
  s.width = j.at("width").get<Eigen::Index>();
  s.depth = j.at("depth").get<int>();
  s.output_dim = j.at("output_dim").get<Eigen::Index>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.residual = j.at("residual").get<bool>();
  s.dropout_rate = j.at("dropout_rate").get<double>();
  s.batch_norm = j.at("batch_norm").get<bool>();
  s.spectral_norm = j.at("spectral_norm").get<bool>();
  s.validate();
}

void to_json(nlohmann::json& j, const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers_) {
    nlohmann::json l = {{"weight", matrix_to_json(layer.weight)},
                        {"bias", matrix_to_json(layer.bias)},
                        {"activation", to_string(layer.activation)},
                        {"u", vector_to_json(layer.spectral.u)},
                        {"v", vector_to_json(layer.spectral.v)}};
    if (layer.has_batch_norm) {
      l["bn_gamma"] = matrix_to_json(layer.bn_gamma);
      l["bn_beta"] = matrix_to_json(layer.bn_beta);
      l["running_mean"] = vector_to_json(layer.running_mean.transpose());
      l["running_var"] = vector_to_json(layer.running_var.transpose());
    }
    layers.push_back(std::move(l));
  }
  j = {{"shape", net.shape_}, {"layers", std::move(layers)}, {"rng", net.rng_.state()}};
}

void from_json(const nlohmann::json& j, DenseNet& net) {
  net.shape_ = j.at("shape").get<NetShape>();
  const auto& layers = j.at("layers");
  if (layers.size() != static_cast<std::size_t>(net.shape_.depth)) {
    throw ValidationError("checkpoint layer count does not match depth");
  }
  net.layers_.clear();
  for (const auto& l : layers) {
    AffineLayer layer;
    layer.weight = matrix_from_json(l.at("weight"));
    layer.bias = matrix_from_json(l.at("bias"));
    layer.activation = activation_from_string(l.at("activation").get<std::string>());
    layer.spectral.u = vector_from_json(l.at("u"));
    layer.spectral.v = vector_from_json(l.at("v"));
    layer.has_batch_norm = l.contains("bn_gamma");
    if (layer.has_batch_norm) {
      layer.bn_gamma = matrix_from_json(l.at("bn_gamma"));
      layer.bn_beta = matrix_from_json(l.at("bn_beta"));
      layer.running_mean = vector_from_json(l.at("running_mean")).transpose();
      layer.running_var = vector_from_json(l.at("running_var")).transpose();
    }
    net.layers_.push_back(std::move(layer));
  }
  net.rng_.set_state(j.at("rng").get<std::string>());
}

}  // namespace densbench::diffnet
