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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "densbench/diffnet/adam.hpp"
#include "densbench/diffnet/dense_net.hpp"
#include "densbench/record.hpp"
#include "densbench/rng.hpp"
#include "densbench/synthdata.hpp"

namespace densbench::wgan {

using diffnet::DenseNet;
using diffnet::Matrix;

enum class PriorFamily { kGaussian, kUniform };  // uniform is U(-1, 1)^dim

struct Prior {
  PriorFamily family = PriorFamily::kGaussian;
  int dim = 1;
};

enum class LipschitzKind { kSpectralNorm, kGradientPenalty };

struct Lipschitz {
  LipschitzKind kind = LipschitzKind::kGradientPenalty;
  double lambda = 10.0;  // gradient penalty weight
};

/// Shape and regularisation of one network; input/output sizes are implied.
struct NetConfig {
  int width = 64;
  int depth = 3;
  diffnet::Activation activation = diffnet::Activation::kLeakyRelu;
  diffnet::InitScheme init = diffnet::InitScheme::kXavier;
  bool residual = false;
  double dropout = 0.0;
  bool batch_norm = false;
};

struct WganConfig {
  Prior prior;
  NetConfig generator;
  NetConfig critic;
  Lipschitz lipschitz{LipschitzKind::kSpectralNorm, 10.0};
  int n_critic = 5;
  int batch_size = 256;
  diffnet::AdamConfig generator_optimizer = default_optimizer();
  diffnet::AdamConfig critic_optimizer = default_optimizer();
  std::int64_t total_generator_steps = 20000;
  std::int64_t eval_every = 500;
  std::size_t eval_samples = 100000;
  /// Train both nets on data standardised by the mixture's mean and stddev.
  bool standardize = true;

  void validate() const;
  diffnet::NetShape generator_shape() const;
  diffnet::NetShape critic_shape() const;

  /// lr 1e-3, betas (0.5, 0.9).
  static diffnet::AdamConfig default_optimizer();
};

void to_json(nlohmann::json& j, const WganConfig& c);
void from_json(const nlohmann::json& j, WganConfig& c);
void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

/// Affine map between data units and the nets' working units.
struct Standardizer {
  double shift = 0.0;
  double scale = 1.0;
};

/// Generator and critic with everything needed to sample and score.
struct WganModel {
  Prior prior;
  Standardizer standardizer;
  DenseNet generator;
  DenseNet critic;

  Matrix draw_prior(std::size_t n, Rng& rng) const;
  /// Eval-mode samples in data units.
  std::vector<double> sample(std::size_t n, Rng& rng) const;
  /// Eval-mode critic values in data units, c(x) = scale * c~((x - shift) / scale).
  std::vector<double> critic_values(const std::vector<double>& xs) const;
};

struct WganState {
  WganModel model;
  diffnet::AdamState generator_optimizer;
  diffnet::AdamState critic_optimizer;
  std::int64_t generator_step = 0;
  std::int64_t critic_step = 0;
  Rng noise;  // prior draws and interpolation weights

  /// Fresh nets and optimizers for `config`; initialisation derived from `seed`.
  static WganState create(const WganConfig& config, const synthdata::MixtureSpec& spec, std::uint64_t seed);
};

struct CriticObjective {
  diffnet::Var loss;
  double wasserstein = 0.0;  // mean c(fake) - mean c(real), working units
  double penalty = 0.0;
};

/// Critic loss on working-unit batches (n x 1). `eps` holds one interpolation
/// weight per pair and is ignored for spectral normalisation.
CriticObjective critic_objective(diffnet::Tape& tape, DenseNet& critic, const Matrix& real, const Matrix& fake,
                                 const Lipschitz& lipschitz, const Matrix& eps, diffnet::NetGradients* grads);

/// One critic step on a real batch in data units; returns the loss.
double critic_update(WganState& state, const std::vector<double>& real, const WganConfig& config);
/// One generator step; returns -mean c(g(z)).
double generator_update(WganState& state, const WganConfig& config);
/// Generator loss on a fresh prior batch without updating anything but RNG
/// streams and batch-norm running statistics (train mode).
double generator_loss(WganState& state, const WganConfig& config, diffnet::Mode mode);

struct WganResult {
  WganModel best;
  WganState final;
  TrialRecord record;
};

struct TrainHooks {
  /// Called after every eval point; returning false stops training.
  std::function<bool(const EvalPoint&)> on_eval;
};

/// Alternates n_critic critic steps and one generator step on fresh data;
/// evaluates true and critic W1 every eval_every generator steps and at the
/// end, and keeps the best model by true W1.
WganResult train(const WganConfig& config, const synthdata::MixtureSpec& spec, std::uint64_t seed,
                 const TrainHooks& hooks = {});

/// Largest singular value over the critic's effective weights (SVD).
double critic_max_singular_value(const DenseNet& critic);

/// Model document; with `training` it also carries the final nets,
/// optimizer moments, step counters and noise RNG state.
nlohmann::json checkpoint(const WganModel& model, const WganState* training = nullptr);
WganState state_from_checkpoint(const nlohmann::json& j);
WganModel model_from_checkpoint(const nlohmann::json& j);

std::string to_string(PriorFamily f);
std::string to_string(LipschitzKind k);

}  // namespace densbench::wgan
