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
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "densbench/diffnet/adam.hpp"
#include "densbench/diffnet/tape.hpp"
#include "densbench/record.hpp"
#include "densbench/rng.hpp"
#include "densbench/synthdata.hpp"

namespace densbench::gaussflow {

using diffnet::Matrix;

/// CDF values are clamped to [kCdfClamp, 1 - kCdfClamp] before the probit.
inline constexpr double kCdfClamp = 1e-15;

/// x -> probit(sum_k pi_k * logistic((x - mu_k) / s_k)), pi = softmax(weights),
/// s = exp(log_scales). Parameters are stored as 1 x K rows.
struct GaussLayer {
  Matrix weights;
  Matrix means;
  Matrix log_scales;

  Eigen::Index components() const { return weights.cols(); }
  void validate() const;
};

struct LayerOutput {
  double z = 0.0;
  double log_pdf = 0.0;  // log of the mixture density at the layer input
  bool clamped = false;
};

LayerOutput layer_forward(const GaussLayer& layer, double x);

struct ForwardResult {
  double z = 0.0;
  double log_det = 0.0;
  int clamped = 0;
};

class GaussFlowModel {
 public:
  GaussFlowModel() = default;
  explicit GaussFlowModel(std::vector<GaussLayer> layers);

  /// Layers initialised by quantile matching on the pushforward of `pilot`.
  static GaussFlowModel from_pilot(int depth, int components, std::span<const double> pilot);

  const std::vector<GaussLayer>& layers() const { return layers_; }
  std::vector<GaussLayer>& layers() { return layers_; }
  int depth() const { return static_cast<int>(layers_.size()); }

  ForwardResult forward(double x) const;
  double log_density(double x) const;
  std::vector<double> log_density(std::span<const double> xs) const;
  /// Model CDF, normal_cdf(forward(x).z).
  double cdf(double x) const;
  /// Throws std::runtime_error("inversion bracket failure") when a layer
  /// cannot be bracketed inside [-1e6, 1e6].
  double invert(double z) const;
  std::vector<double> sample(std::size_t n, Rng& rng) const;

  std::vector<Matrix*> parameters();
  std::vector<Matrix> zero_gradients() const;

  /// Mean log-likelihood of `xs` on `tape`; gradients go to `grads` (which
  /// must come from zero_gradients) when non-null. Clamp events are added to
  /// `clamp_events` if given.
  diffnet::Var mean_log_likelihood(diffnet::Tape& tape, std::span<const double> xs,
                                   std::vector<Matrix>* grads, std::uint64_t* clamp_events = nullptr) const;

  void validate() const;

 private:
  std::vector<GaussLayer> layers_;
};

void to_json(nlohmann::json& j, const GaussLayer& l);
void from_json(const nlohmann::json& j, GaussLayer& l);
void to_json(nlohmann::json& j, const GaussFlowModel& m);
void from_json(const nlohmann::json& j, GaussFlowModel& m);

/// W1 between the model and the mixture computed from the two CDFs on a
/// fine grid over the padded support.
double density_w1(const GaussFlowModel& model, const synthdata::MixtureSpec& spec,
                  std::size_t grid = 200000);

struct GaussFlowConfig {
  int layers = 3;
  int components = 32;
  diffnet::AdamConfig optimizer;
  std::int64_t steps = 10000;
  int batch_size = 512;
  std::int64_t eval_every = 1000;
  std::size_t eval_samples = 100000;
  std::size_t pilot_samples = 10000;

  void validate() const;
  /// Defaults for a dataset: L=3, K=32 for unimodal data, L=4, K=64 otherwise.
  static GaussFlowConfig defaults_for(const synthdata::MixtureSpec& spec);
};

void to_json(nlohmann::json& j, const GaussFlowConfig& c);
void from_json(const nlohmann::json& j, GaussFlowConfig& c);

struct GaussFlowResult {
  GaussFlowModel best;   // lowest true W1 over eval points
  GaussFlowModel final;
  diffnet::AdamState optimizer;
  TrialRecord record;
  std::vector<double> log_likelihood_trace;  // minibatch mean per step
};

/// Called after every optimizer step; returning false stops training early.
using StepCallback = std::function<bool(std::int64_t step, double minibatch_log_likelihood)>;

/// Maximum-likelihood training on fresh minibatches. Data, pilot and eval
/// streams are derived from `seed`.
GaussFlowResult train(const GaussFlowConfig& config, const synthdata::MixtureSpec& spec, std::uint64_t seed,
                      const StepCallback& on_step = {});

/// Checkpoint document holding the model and optimizer state.
nlohmann::json checkpoint(const GaussFlowModel& model, const diffnet::AdamState& optimizer);
GaussFlowModel model_from_checkpoint(const nlohmann::json& j);

}  // namespace densbench::gaussflow
