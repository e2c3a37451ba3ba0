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

#include "densbench/diffnet/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "densbench/error.hpp"

namespace densbench::diffnet {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
  }
  return "unknown(" + std::to_string(static_cast<int>(act)) + ")";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ValidationError("unknown activation '" + name + "'");
}

Matrix apply_activation(const Matrix& a, Activation act) {
  switch (act) {
    case Activation::kIdentity: return a;
    case Activation::kRelu: return a.cwiseMax(0.0);
    case Activation::kLeakyRelu:
      return a.unaryExpr([](double x) { return x > 0.0 ? x : kLeakyReluSlope * x; });
    case Activation::kTanh: return a.array().tanh().matrix();
  }
  throw ValidationError("activation '" + to_string(act) + "' is not implemented");
}

Matrix activation_slope(const Matrix& a, Activation act) {
  switch (act) {
    case Activation::kIdentity: return Matrix::Ones(a.rows(), a.cols());
    case Activation::kRelu: return a.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case Activation::kLeakyRelu:
      return a.unaryExpr([](double x) { return x > 0.0 ? 1.0 : kLeakyReluSlope; });
    case Activation::kTanh:
      return a.unaryExpr([](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
  }
  throw ValidationError("activation '" + to_string(act) + "' is not implemented");
}

Matrix activation_curvature(const Matrix& a, Activation act) {
  switch (act) {
    case Activation::kIdentity:
    case Activation::kRelu:
    case Activation::kLeakyRelu: return Matrix::Zero(a.rows(), a.cols());
    case Activation::kTanh:
      return a.unaryExpr([](double x) {
        const double t = std::tanh(x);
        return -2.0 * t * (1.0 - t * t);
      });
  }
  throw ValidationError("activation '" + to_string(act) +
                        "' has no second-order rule for the input-gradient path");
}

bool Tape::Sink::wants(std::size_t input) const {
  return tape_.nodes_[tape_.nodes_[self_].inputs[input]].requires_grad;
}

void Tape::Sink::add(std::size_t input, const Matrix& grad) {
  tape_.accumulate(tape_.nodes_[self_].inputs[input], grad);
}

const Matrix& Tape::Sink::input(std::size_t input) const {
  return tape_.nodes_[tape_.nodes_[self_].inputs[input]].value;
}

const Matrix& Tape::Sink::output() const { return tape_.nodes_[self_].value; }

Var Tape::push(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (std::size_t in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::input(Matrix value) {
  Var v = push(std::move(value), {}, nullptr);
  nodes_[v.id].requires_grad = true;
  return v;
}

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
  Var v = push(value, {}, nullptr);
  nodes_[v.id].sink = grad_sink;
  nodes_[v.id].requires_grad = grad_sink != nullptr;
  return v;
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Var Tape::matmul_t(Var x, Var w) {
  if (value(x).cols() != value(w).cols()) {
    throw ValidationError("matmul: input has " + std::to_string(value(x).cols()) +
                          " columns, weight expects " + std::to_string(value(w).cols()));
  }
  Matrix out = value(x) * value(w).transpose();
  return push(std::move(out), {x.id, w.id}, [](const Matrix& g, Sink& s) {
    if (s.wants(0)) s.add(0, g * s.input(1));
    if (s.wants(1)) s.add(1, g.transpose() * s.input(0));
  });
}

Var Tape::add_row(Var x, Var row) {
  Matrix out = value(x).rowwise() + value(row).row(0);
  return push(std::move(out), {x.id, row.id}, [](const Matrix& g, Sink& s) {
    if (s.wants(0)) s.add(0, g);
    if (s.wants(1)) s.add(1, g.colwise().sum());
  });
}

Var Tape::mul_row(Var x, Var row) {
  Matrix out = (value(x).array().rowwise() * value(row).row(0).array()).matrix();
  return push(std::move(out), {x.id, row.id}, [](const Matrix& g, Sink& s) {
    if (s.wants(0)) s.add(0, (g.array().rowwise() * s.input(1).row(0).array()).matrix());
    if (s.wants(1)) s.add(1, g.cwiseProduct(s.input(0)).colwise().sum());
  });
}

Var Tape::add(Var a, Var b) {
  return push(value(a) + value(b), {a.id, b.id}, [](const Matrix& g, Sink& s) {
    s.add(0, g);
    s.add(1, g);
  });
}

Var Tape::sub(Var a, Var b) {
  return push(value(a) - value(b), {a.id, b.id}, [](const Matrix& g, Sink& s) {
    s.add(0, g);
    if (s.wants(1)) s.add(1, -g);
  });
}

Var Tape::mul(Var a, Var b) {
  return push(value(a).cwiseProduct(value(b)), {a.id, b.id}, [](const Matrix& g, Sink& s) {
    if (s.wants(0)) s.add(0, g.cwiseProduct(s.input(1)));
    if (s.wants(1)) s.add(1, g.cwiseProduct(s.input(0)));
  });
}

Var Tape::scale(Var a, double factor) {
  return push(value(a) * factor, {a.id}, [factor](const Matrix& g, Sink& s) { s.add(0, g * factor); });
}

Var Tape::add_scalar(Var a, double offset) {
  Matrix out = value(a).array() + offset;
  return push(std::move(out), {a.id}, [](const Matrix& g, Sink& s) { s.add(0, g); });
}

Var Tape::mul_const(Var a, const Matrix& factor) {
  return push(value(a).cwiseProduct(factor), {a.id},
              [factor](const Matrix& g, Sink& s) { s.add(0, g.cwiseProduct(factor)); });
}

Var Tape::activate(Var a, Activation act) {
  return push(apply_activation(value(a), act), {a.id}, [act](const Matrix& g, Sink& s) {
    s.add(0, g.cwiseProduct(diffnet::activation_slope(s.input(0), act)));
  });
}

Var Tape::activation_slope(Var a, Activation act) {
  // Validate eagerly so unsupported activations fail at construction.
  activation_curvature(value(a).topRows(0), act);
  return push(diffnet::activation_slope(value(a), act), {a.id}, [act](const Matrix& g, Sink& s) {
    s.add(0, g.cwiseProduct(activation_curvature(s.input(0), act)));
  });
}

Var Tape::batch_norm(Var x, double eps, Eigen::RowVectorXd* batch_mean,
                     Eigen::RowVectorXd* batch_var) {
  const Matrix& in = value(x);
  const auto n = static_cast<double>(in.rows());
  const Eigen::RowVectorXd mu = in.colwise().mean();
  const Matrix centred = in.rowwise() - mu;
  const Eigen::RowVectorXd var = centred.array().square().colwise().sum() / n;
  const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  Matrix out = (centred.array().rowwise() * inv_std.array()).matrix();
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return push(std::move(out), {x.id}, [inv_std, n](const Matrix& g, Sink& s) {
    const Matrix& xhat = s.output();
    const Eigen::RowVectorXd sum_g = g.colwise().sum();
    const Eigen::RowVectorXd sum_gx = g.cwiseProduct(xhat).colwise().sum();
    Matrix dx = (n * g.array()).matrix();
    dx.rowwise() -= sum_g;
    dx -= (xhat.array().rowwise() * sum_gx.array()).matrix();
    dx = (dx.array().rowwise() * (inv_std.array() / n)).matrix();
    s.add(0, dx);
  });
}

Var Tape::spectral_scale(Var w, const Vector& u, const Vector& v) {
  const double sigma = std::max(u.dot(value(w) * v), 1e-12);
  return push(value(w) / sigma, {w.id}, [u, v, sigma](const Matrix& g, Sink& s) {
    const double inner = g.cwiseProduct(s.output()).sum();
    s.add(0, (g - inner * (u * v.transpose())) / sigma);
  });
}

Var Tape::interpolate(Var a, Var b, const Matrix& eps) {
  Matrix out = eps.cwiseProduct(value(a)) + (1.0 - eps.array()).matrix().cwiseProduct(value(b));
  return push(std::move(out), {a.id, b.id}, [eps](const Matrix& g, Sink& s) {
    if (s.wants(0)) s.add(0, g.cwiseProduct(eps));
    if (s.wants(1)) s.add(1, (g.array() * (1.0 - eps.array())).matrix());
  });
}

Var Tape::square(Var a) {
  return push(value(a).array().square().matrix(), {a.id}, [](const Matrix& g, Sink& s) {
    s.add(0, 2.0 * g.cwiseProduct(s.input(0)));
  });
}

Var Tape::sqrt(Var a) {
  return push(value(a).array().sqrt().matrix(), {a.id}, [](const Matrix& g, Sink& s) {
    const Matrix& root = s.output();
    Matrix d = g.binaryExpr(root, [](double gi, double r) { return r > 0.0 ? gi / (2.0 * r) : 0.0; });
    s.add(0, d);
  });
}

Var Tape::sum_cols(Var a) {
  Matrix out = value(a).rowwise().sum();
  const auto cols = value(a).cols();
  return push(std::move(out), {a.id}, [cols](const Matrix& g, Sink& s) {
    s.add(0, g.replicate(1, cols));
  });
}

Var Tape::mean(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).mean();
  const auto rows = value(a).rows();
  const auto cols = value(a).cols();
  return push(std::move(out), {a.id}, [rows, cols](const Matrix& g, Sink& s) {
    s.add(0, Matrix::Constant(rows, cols, g(0, 0) / static_cast<double>(rows * cols)));
  });
}

Var Tape::col(Var a, Eigen::Index c) {
  Matrix out = value(a).col(c);
  const auto cols = value(a).cols();
  return push(std::move(out), {a.id}, [c, cols](const Matrix& g, Sink& s) {
    Matrix d = Matrix::Zero(g.rows(), cols);
    d.col(c) = g;
    s.add(0, d);
  });
}

Var Tape::custom(std::vector<Var> inputs, Matrix value, BackwardFn backward) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (Var v : inputs) ids.push_back(v.id);
  return push(std::move(value), std::move(ids), std::move(backward));
}

void Tape::backward(Var output) {
  const Matrix& out = value(output);
  backward(output, Matrix::Ones(out.rows(), out.cols()));
}

void Tape::backward(Var output, const Matrix& seed) {
  if (consumed_) throw std::logic_error("tape already consumed");
  consumed_ = true;
  if (seed.rows() != value(output).rows() || seed.cols() != value(output).cols()) {
    throw ValidationError("backward: seed shape does not match output");
  }
  accumulate(output.id, seed);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.backward) {
      Sink sink(*this, i);
      // Rules only accumulate into earlier nodes; node.grad stays put.
      node.backward(node.grad, sink);
    }
    if (node.sink) *node.sink += node.grad;
  }
}

}  // namespace densbench::diffnet
