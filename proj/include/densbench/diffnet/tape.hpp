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

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace densbench::diffnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Handle to a node on a Tape. Rows are batch entries, columns features.
struct Var {
  std::size_t id = 0;
};

enum class Activation { kIdentity, kRelu, kLeakyRelu, kTanh };

inline constexpr double kLeakyReluSlope = 0.2;

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

Matrix apply_activation(const Matrix& a, Activation act);
/// Elementwise first derivative of the activation at `a`.
Matrix activation_slope(const Matrix& a, Activation act);
/// Elementwise second derivative; throws for activations without a rule.
Matrix activation_curvature(const Matrix& a, Activation act);

/// Append-only record of primitive operations for reverse-mode replay.
///
/// Nodes are stored in creation order, which is a topological order. A tape
/// replays once; a second backward() throws. Backward rules reach values only
/// through their Sink, so a Tape may be moved freely.
class Tape {
 public:
  /// Passed to custom backward rules to route gradients to node inputs.
  class Sink {
   public:
    bool wants(std::size_t input) const;
    void add(std::size_t input, const Matrix& grad);
    const Matrix& input(std::size_t input) const;
    const Matrix& output() const;

   private:
    friend class Tape;
    Sink(Tape& tape, std::size_t self) : tape_(tape), self_(self) {}
    Tape& tape_;
    std::size_t self_;
  };

  using BackwardFn = std::function<void(const Matrix& grad_out, Sink& sink)>;

  Var constant(Matrix value);
  /// Leaf whose gradient is kept (network inputs).
  Var input(Matrix value);
  /// Leaf whose gradient is added into *grad_sink on backward. A null sink
  /// makes the parameter a constant.
  Var parameter(const Matrix& value, Matrix* grad_sink);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the seeded output with respect to `v`; zeros if unreached.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  Var matmul_t(Var x, Var w);   // x * w^T
  Var add_row(Var x, Var row);  // row broadcast over the batch
  Var mul_row(Var x, Var row);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var mul_const(Var a, const Matrix& factor);
  Var activate(Var a, Activation act);
  /// sigma'(a) as a differentiable node (needed for input-gradient paths).
  Var activation_slope(Var a, Activation act);
  /// Per-column standardization with batch statistics (biased variance).
  Var batch_norm(Var x, double eps, Eigen::RowVectorXd* batch_mean = nullptr,
                 Eigen::RowVectorXd* batch_var = nullptr);
  /// w / (u^T w v) with u, v held constant.
  Var spectral_scale(Var w, const Vector& u, const Vector& v);
  /// eps * a + (1 - eps) * b, eps a constant of the same shape.
  Var interpolate(Var a, Var b, const Matrix& eps);
  Var square(Var a);
  /// Elementwise sqrt; derivative taken as 0 at exactly 0.
  Var sqrt(Var a);
  Var sum_cols(Var a);  // n x c -> n x 1
  Var mean(Var a);      // -> 1 x 1
  Var col(Var a, Eigen::Index c);

  /// Extension point for fused primitives.
  Var custom(std::vector<Var> inputs, Matrix value, BackwardFn backward);

  /// Reverse sweep seeded with ones (scalar outputs) or with `seed`.
  void backward(Var output);
  void backward(Var output, const Matrix& seed);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Matrix* sink = nullptr;
    bool requires_grad = false;
  };

  Var push(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);
  void accumulate(std::size_t id, const Matrix& g);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace densbench::diffnet
