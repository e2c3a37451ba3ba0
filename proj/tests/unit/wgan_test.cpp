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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "densbench/error.hpp"
#include "densbench/metrics.hpp"
#include "densbench/wgan.hpp"

namespace densbench::wgan {
namespace {

using diffnet::Activation;
using diffnet::Mode;
using diffnet::NetShape;
using diffnet::Tape;

DenseNet linear_critic(double w, bool spectral) {
  NetShape shape;
  shape.width = 1;
  shape.depth = 2;
  shape.activation = Activation::kIdentity;
  shape.spectral_norm = spectral;
  DenseNet net(shape, diffnet::InitScheme::kXavier, 1);
  net.layers()[0].weight(0, 0) = w;
  net.layers()[1].weight(0, 0) = 1.0;
  net.power_iterate(1);
  return net;
}

WganConfig small_config() {
  WganConfig c;
  c.generator.width = 16;
  c.critic.width = 16;
  c.batch_size = 64;
  c.n_critic = 2;
  c.total_generator_steps = 40;
  c.eval_every = 20;
  c.eval_samples = 4000;
  return c;
}

std::vector<Matrix> snapshot(DenseNet& net) {
  std::vector<Matrix> out;
  for (const Matrix* p : net.parameters()) out.push_back(*p);
  return out;
}

TEST(CriticObjective, IdentityCriticWithoutPenalty) {
  DenseNet critic = linear_critic(1.0, true);
  Tape tape;
  const Lipschitz sn{LipschitzKind::kSpectralNorm, 0.0};
  const auto obj = critic_objective(tape, critic, Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1), sn,
                                    Matrix::Constant(1, 1, 0.5), nullptr);
  EXPECT_DOUBLE_EQ(tape.value(obj.loss)(0, 0), -1.0);
  EXPECT_EQ(obj.penalty, 0.0);
}

TEST(CriticObjective, EqualBatchesLeaveOnlyPenalty) {
  DenseNet critic(NetShape{}, diffnet::InitScheme::kXavier, 3);
  Rng rng(4);
  Matrix x(32, 1), eps(32, 1);
  for (Eigen::Index i = 0; i < 32; ++i) {
    x(i, 0) = rng.normal();
    eps(i, 0) = rng.uniform();
  }
  Tape tape;
  const auto obj = critic_objective(tape, critic, x, x, Lipschitz{}, eps, nullptr);
  EXPECT_EQ(obj.wasserstein, 0.0);
  EXPECT_GT(obj.penalty, 0.0);
  EXPECT_DOUBLE_EQ(tape.value(obj.loss)(0, 0), obj.penalty);
}

TEST(CriticObjective, UnitSlopeLinearCriticHasZeroPenalty) {
  DenseNet critic = linear_critic(1.0, false);
  Rng rng(5);
  Matrix real(16, 1), fake(16, 1), eps(16, 1);
  for (Eigen::Index i = 0; i < 16; ++i) {
    real(i, 0) = rng.normal();
    fake(i, 0) = rng.normal() + 2.0;
    eps(i, 0) = rng.uniform();
  }
  Tape tape;
  const auto obj =
      critic_objective(tape, critic, real, fake, Lipschitz{LipschitzKind::kGradientPenalty, 10.0}, eps, nullptr);
  EXPECT_EQ(obj.penalty, 0.0);
}

WganState state_with(const WganConfig& config, std::uint64_t seed = 1) {
  return WganState::create(config, synthdata::preset("unimodal"), seed);
}

TEST(GeneratorUpdate, ZeroCriticLeavesGeneratorUnchanged) {
  WganConfig config = small_config();
  WganState state = state_with(config);
  for (auto& l : state.model.critic.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const auto before = snapshot(state.model.generator);
  generator_update(state, config);
  EXPECT_EQ(snapshot(state.model.generator), before);
}

TEST(GeneratorUpdate, IdentityCriticPushesConstantGeneratorUp) {
  WganConfig config = small_config();
  config.standardize = false;
  config.critic.activation = Activation::kIdentity;
  config.critic.width = 1;
  config.critic.depth = 2;
  config.lipschitz.kind = LipschitzKind::kGradientPenalty;
  WganState state = state_with(config);
  state.model.critic = linear_critic(1.0, false);
  for (auto& l : state.model.generator.layers()) l.weight.setZero();
  const double theta = 0.3;
  state.model.generator.layers().back().bias(0, 0) = theta;
  // d(-mean c(g(z)))/d theta = -1, so Adam's first step moves theta up by lr.
  const double loss = generator_update(state, config);
  EXPECT_DOUBLE_EQ(loss, -theta);
  // Adam eps makes the step lr / (1 + 1e-8).
  EXPECT_NEAR(state.model.generator.layers().back().bias(0, 0), theta + config.generator_optimizer.lr, 1e-10);
}

TEST(GeneratorLoss, BatchNormModesDiffer) {
  WganConfig config = small_config();
  config.generator.batch_norm = true;
  WganState state = state_with(config);
  WganState copy = state;
  EXPECT_NE(generator_loss(state, config, Mode::kTrain), generator_loss(copy, config, Mode::kEval));
}

TEST(Updates, ParameterIsolation) {
  WganConfig config = small_config();
  WganState state = state_with(config);
  synthdata::DatasetHandle data(synthdata::preset("unimodal"), 2);
  const auto g0 = snapshot(state.model.generator);
  const auto c0 = snapshot(state.model.critic);
  critic_update(state, data.sample(64), config);
  EXPECT_EQ(snapshot(state.model.generator), g0);
  EXPECT_NE(snapshot(state.model.critic), c0);
  const auto c1 = snapshot(state.model.critic);
  generator_update(state, config);
  EXPECT_EQ(snapshot(state.model.critic), c1);
  EXPECT_NE(snapshot(state.model.generator), g0);
}

TEST(Updates, NonFiniteBatchIsDivergence) {
  WganConfig config = small_config();
  WganState state = state_with(config);
  std::vector<double> real(64, 5.0);
  real[3] = std::nan("");
  EXPECT_THROW(critic_update(state, real, config), DivergenceError);
  EXPECT_THROW(critic_update(state, {}, config), ValidationError);
}

TEST(Train, ZeroStepsRecordsInitialEvaluation) {
  WganConfig config = small_config();
  config.total_generator_steps = 0;
  const auto r = train(config, synthdata::preset("unimodal"), 1);
  ASSERT_EQ(r.record.history.size(), 1u);
  EXPECT_EQ(r.record.history[0].step, 0);
  EXPECT_TRUE(r.record.history[0].critic_w1.has_value());
}

TEST(Train, SpectralBoundAndCouplingBoundAtEveryEval) {
  WganConfig config = small_config();
  config.lipschitz.kind = LipschitzKind::kSpectralNorm;
  config.total_generator_steps = 60;
  const auto spec = synthdata::preset("unimodal");
  int evals = 0;
  const auto r = train(config, spec, 7, {[&](const EvalPoint&) {
                         ++evals;
                         return true;
                       }});
  EXPECT_EQ(evals, 4);
  ASSERT_FALSE(r.record.failed);
  EXPECT_LE(critic_max_singular_value(r.final.model.critic), 1.0 + 1e-3);
  EXPECT_LE(critic_max_singular_value(r.best.critic), 1.0 + 1e-3);

  // |critic W1| <= (secant slope along the sorted coupling) * W1 on the same samples.
  Rng rng(8);
  auto fake = r.final.model.sample(5000, rng);
  auto real = synthdata::DatasetHandle(spec, 9).sample(5000);
  std::sort(fake.begin(), fake.end());
  std::sort(real.begin(), real.end());
  const auto cf = r.final.model.critic_values(fake);
  const auto cr = r.final.model.critic_values(real);
  const double critic = metrics::w1_critic_values(cr, cf);
  const double bound = metrics::coupling_lipschitz(real, cr, fake, cf) * metrics::w1_direct_sorted(real, fake);
  EXPECT_LE(std::fabs(critic), bound + 1e-6);
}

TEST(Train, HistoryAndBestAreConsistent) {
  const auto r = train(small_config(), synthdata::preset("unimodal"), 3);
  ASSERT_EQ(r.record.history.size(), 3u);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.record.history.size(); ++i) {
    if (i > 0) EXPECT_GT(r.record.history[i].step, r.record.history[i - 1].step);
    EXPECT_TRUE(r.record.history[i].critic_w1.has_value());
    best = std::min(best, r.record.history[i].true_w1);
  }
  EXPECT_EQ(r.record.best_w1, best);
}

TEST(Train, DeterministicPerSeed) {
  const auto config = small_config();
  const auto spec = synthdata::preset("unimodal");
  auto a = train(config, spec, 11);
  auto b = train(config, spec, 11);
  a.record.wall_clock_seconds = b.record.wall_clock_seconds = 0.0;
  EXPECT_EQ(nlohmann::json(a.record).dump(), nlohmann::json(b.record).dump());
  Rng ra(1), rb(1);
  EXPECT_EQ(a.best.sample(100, ra), b.best.sample(100, rb));
  auto c = train(config, spec, 12);
  EXPECT_NE(a.record.history.back().true_w1, c.record.history.back().true_w1);
}

TEST(Train, ExplodingLearningRateIsRecordedAsFailure) {
  WganConfig config = small_config();
  config.generator_optimizer.lr = 1e200;
  config.critic_optimizer.lr = 1e200;
  const auto r = train(config, synthdata::preset("unimodal"), 1);
  EXPECT_TRUE(r.record.failed);
  EXPECT_NE(r.record.failure.find("divergence detected"), std::string::npos);
  ASSERT_TRUE(r.record.failure_step.has_value());
  EXPECT_FALSE(r.record.history.empty());
}

TEST(Config, ValidationAndRoundTrip) {
  EXPECT_THROW(nlohmann::json({{"n_critic", 0}}).get<WganConfig>(), ValidationError);
  EXPECT_THROW(nlohmann::json({{"lipschitz", {{"kind", "gradient_penalty"}, {"lambda", 0.0}}}}).get<WganConfig>(),
               ValidationError);
  EXPECT_THROW(nlohmann::json({{"lipschitz", {{"kind", "gradient_penalty"}}}, {"critic", {{"batch_norm", true}}}})
                   .get<WganConfig>(),
               ValidationError);
  EXPECT_THROW(nlohmann::json({{"prior", {{"family", "cauchy"}}}}).get<WganConfig>(), ValidationError);
  EXPECT_THROW(nlohmann::json::array().get<WganConfig>(), ValidationError);
  WganConfig c = small_config();
  c.prior = {PriorFamily::kUniform, 3};
  c.generator.residual = true;
  c.generator.depth = 4;
  c.critic_optimizer.cyclic = diffnet::CyclicSchedule{1e-4, 1e-3, 100};
  const nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<WganConfig>()).dump(), j.dump());
}

TEST(Model, UniformPriorStaysInBox) {
  WganModel m;
  m.prior = {PriorFamily::kUniform, 3};
  Rng rng(1);
  const Matrix z = m.draw_prior(1000, rng);
  EXPECT_EQ(z.cols(), 3);
  EXPECT_LE(z.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Model, CheckpointRoundTrip) {
  const auto r = train(small_config(), synthdata::preset("multimodal"), 5);
  const std::string text = checkpoint(r.best).dump();
  const WganModel back = model_from_checkpoint(nlohmann::json::parse(text));
  EXPECT_EQ(checkpoint(back).dump(), text);
  Rng a(2), b(2);
  EXPECT_EQ(back.sample(50, a), r.best.sample(50, b));
  EXPECT_THROW(model_from_checkpoint(nlohmann::json{{"kind", "gaussflow"}}), ValidationError);
}

TEST(Model, TrainingStateResumesIdentically) {
  const WganConfig config = small_config();
  auto r = train(config, synthdata::preset("unimodal"), 6);
  const auto j = nlohmann::json::parse(checkpoint(r.best, &r.final).dump());
  WganState restored = state_from_checkpoint(j);
  EXPECT_EQ(restored.generator_step, r.final.generator_step);
  const std::vector<double> real(64, 5.0);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(critic_update(restored, real, config), critic_update(r.final, real, config));
    EXPECT_EQ(generator_update(restored, config), generator_update(r.final, config));
  }
  EXPECT_THROW(state_from_checkpoint(checkpoint(r.best)), ValidationError);
}

}  // namespace
}  // namespace densbench::wgan
