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

#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "densbench/error.hpp"
#include "densbench/gaussflow.hpp"
#include "densbench/metrics.hpp"
#include "densbench/probit.hpp"

namespace densbench::gaussflow {
namespace {

GaussLayer single_logistic(double mu, double s) {
  GaussLayer l;
  l.weights = Matrix::Zero(1, 1);
  l.means = Matrix::Constant(1, 1, mu);
  l.log_scales = Matrix::Constant(1, 1, std::log(s));
  return l;
}

GaussFlowModel random_model(int depth, int k, Rng& rng) {
  std::vector<GaussLayer> layers;
  for (int l = 0; l < depth; ++l) {
    GaussLayer layer;
    layer.weights.resize(1, k);
    layer.means.resize(1, k);
    layer.log_scales.resize(1, k);
    for (int c = 0; c < k; ++c) {
      layer.weights(0, c) = rng.normal();
      // Deeper layers stay narrow: wide logistic tails would push mass past
      // the clamped range of the layer below, and the image must cover [-4, 4].
      layer.means(0, c) = l == 0 ? 3.0 * rng.normal() : rng.uniform(-1.0, 1.0);
      layer.log_scales(0, c) = l == 0 ? rng.uniform(-1.0, 0.5) : rng.uniform(-1.6, -1.0);
    }
    layers.push_back(layer);
  }
  return GaussFlowModel(layers);
}

double logistic_log_pdf(double x, double mu, double s) {
  const double t = (x - mu) / s;
  return -t - 2.0 * std::log1p(std::exp(-t)) - std::log(s);
}

double integrate_density(const GaussFlowModel& model, double lo, double hi, std::vector<double> cuts = {}) {
  using boost::math::quadrature::gauss_kronrod;
  cuts.insert(cuts.begin(), lo);
  cuts.push_back(hi);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += gauss_kronrod<double, 61>::integrate([&](double x) { return std::exp(model.log_density(x)); },
                                                 cuts[i], cuts[i + 1], 15, 1e-12);
  }
  return total;
}

TEST(GaussFlow, StandardLogisticAtZero) {
  const GaussFlowModel model({single_logistic(0.0, 1.0)});
  const auto r = model.forward(0.0);
  EXPECT_EQ(r.z, 0.0);
  EXPECT_NEAR(std::exp(model.log_density(0.0)), 0.25, 1e-15);
  EXPECT_EQ(model.invert(0.0), 0.0);
}

TEST(GaussFlow, SingleComponentDensityIsLogistic) {
  const GaussFlowModel model({single_logistic(1.5, 0.7)});
  for (int i = 0; i < 100; ++i) {
    const double x = -20.0 + 0.4 * i;
    EXPECT_NEAR(model.log_density(x), logistic_log_pdf(x, 1.5, 0.7), 1e-8) << x;
  }
}

TEST(GaussFlow, SingleLayerEqualsMixtureDensity) {
  Rng rng(1);
  const GaussFlowModel model = random_model(1, 5, rng);
  const GaussLayer& l = model.layers()[0];
  const double norm = l.weights.array().exp().sum();
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-10.0, 10.0);
    double p = 0.0;
    for (int c = 0; c < 5; ++c) {
      p += std::exp(l.weights(0, c)) / norm * std::exp(logistic_log_pdf(x, l.means(0, c), std::exp(l.log_scales(0, c))));
    }
    EXPECT_NEAR(std::exp(model.log_density(x)), p, 1e-8 * std::max(1.0, p));
  }
}

TEST(GaussFlow, ForwardIsStrictlyIncreasing) {
  Rng rng(2);
  for (int m = 0; m < 5; ++m) {
    const GaussFlowModel model = random_model(3, 6, rng);
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) {
      const double z = model.forward(-6.0 + 0.006 * i).z;
      EXPECT_GT(z, prev);
      prev = z;
    }
  }
}

TEST(GaussFlow, InversionRoundTrip) {
  Rng rng(3);
  const GaussFlowModel model = random_model(3, 8, rng);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double z = rng.uniform(-4.0, 4.0);
    const double err = std::fabs(model.forward(model.invert(z)).z - z);
    EXPECT_LE(err, 1e-10) << "z " << z << " x " << model.invert(z);
    worst = std::max(worst, err);
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(GaussFlow, SamplerMatchesExactInversion) {
  Rng rng(9);
  const GaussFlowModel model = random_model(3, 6, rng);
  Rng a(10), b(10);
  const auto xs = model.sample(500, a);
  for (double x : xs) {
    const double z = b.normal();
    EXPECT_NEAR(model.forward(x).z, z, 1e-10);
    EXPECT_NEAR(x, model.invert(z), 1e-8 * std::max(1.0, std::fabs(x)));
  }
}

TEST(GaussFlow, InversionBracketFailure) {
  // z = 7 needs t ~ 27.4, i.e. x ~ 2.7e6 at scale 1e5.
  const GaussFlowModel wide({single_logistic(0.0, 1e5)});
  EXPECT_THROW(wide.invert(7.0), std::runtime_error);
  EXPECT_NO_THROW(wide.invert(1.0));
}

TEST(GaussFlow, ClampingIsCountedNotFatal) {
  const GaussFlowModel model({single_logistic(0.0, 1.0)});
  const auto r = model.forward(-100.0);
  EXPECT_EQ(r.clamped, 1);
  EXPECT_NEAR(r.z, probit(kCdfClamp), 1e-12);
  EXPECT_TRUE(std::isfinite(model.log_density(-100.0)));
}

TEST(GaussFlow, TranslationEquivariance) {
  Rng rng(4);
  GaussFlowModel model = random_model(2, 4, rng);
  GaussFlowModel shifted = model;
  shifted.layers()[0].means.array() += 2.5;
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-8.0, 8.0);
    EXPECT_NEAR(shifted.log_density(x + 2.5), model.log_density(x), 1e-10);
  }
}

TEST(GaussFlow, RandomModelsNormalize) {
  Rng rng(5);
  for (int m = 0; m < 10; ++m) {
    const GaussFlowModel model = random_model(1 + m % 3, 4, rng);
    EXPECT_NEAR(integrate_density(model, -100.0, 100.0, {-10.0, 0.0, 10.0}), 1.0, 1e-3);
  }
}

TEST(GaussFlow, CdfMatchesDensityIntegral) {
  Rng rng(6);
  const GaussFlowModel model = random_model(2, 3, rng);
  for (double x : {-2.0, 0.0, 1.5}) {
    EXPECT_NEAR(model.cdf(x) - model.cdf(-100.0), integrate_density(model, -100.0, x, {-10.0}), 1e-7);
  }
}

TEST(GaussFlow, LogLikelihoodGradientMatchesFiniteDifferences) {
  Rng rng(7);
  GaussFlowModel model = random_model(3, 5, rng);
  std::vector<double> xs(40);
  for (auto& x : xs) x = 3.0 * rng.normal();
  auto loss = [&](GaussFlowModel& m) {
    diffnet::Tape tape;
    return tape.value(m.mean_log_likelihood(tape, xs, nullptr))(0, 0);
  };
  diffnet::Tape tape;
  auto grads = model.zero_gradients();
  tape.backward(model.mean_log_likelihood(tape, xs, &grads));
  const double mean_ll = loss(model);
  double direct = 0.0;
  for (double x : xs) direct += model.log_density(x);
  EXPECT_NEAR(mean_ll, direct / xs.size(), 1e-12);

  auto params = model.parameters();
  const double h = 1e-5;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (Eigen::Index c = 0; c < params[pi]->cols(); ++c) {
      double& p = (*params[pi])(0, c);
      const double saved = p;
      p = saved + h;
      const double up = loss(model);
      p = saved - h;
      const double down = loss(model);
      p = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[pi](0, c);
      EXPECT_LE(std::fabs(analytic - numeric), 1e-5 * std::max(std::fabs(analytic), std::fabs(numeric)) + 1e-8)
          << "param " << pi << "[" << c << "] analytic " << analytic << " numeric " << numeric;
    }
  }
}

TEST(GaussFlow, CheckpointRoundTripIsExact) {
  Rng rng(8);
  const GaussFlowModel model = random_model(2, 3, rng);
  diffnet::AdamState adam(diffnet::AdamConfig{});
  const std::string text = checkpoint(model, adam).dump();
  const GaussFlowModel back = model_from_checkpoint(nlohmann::json::parse(text));
  EXPECT_EQ(checkpoint(back, adam).dump(), text);
  EXPECT_THROW(model_from_checkpoint(nlohmann::json{{"kind", "dense"}}), ValidationError);
}

TEST(GaussFlow, PilotInitialisationSpreadsMeansOverQuantiles) {
  std::vector<double> pilot(10001);
  for (std::size_t i = 0; i < pilot.size(); ++i) pilot[i] = static_cast<double>(i) / 10000.0;
  const auto model = GaussFlowModel::from_pilot(2, 4, pilot);
  const GaussLayer& l = model.layers()[0];
  EXPECT_NEAR(l.means(0, 0), 0.125, 1e-12);
  EXPECT_NEAR(l.means(0, 3), 0.875, 1e-12);
  EXPECT_NEAR(std::exp(l.log_scales(0, 0)), 0.25, 1e-12);
  EXPECT_TRUE(l.weights.isZero());
}

TEST(GaussFlow, ZeroStepsRecordsOnlyInitialEvaluation) {
  GaussFlowConfig config;
  config.steps = 0;
  config.eval_samples = 2000;
  config.pilot_samples = 1000;
  const auto result = train(config, synthdata::preset("unimodal"), 3);
  ASSERT_EQ(result.record.history.size(), 1u);
  EXPECT_EQ(result.record.history[0].step, 0);
  EXPECT_FALSE(result.record.failed);
}

TEST(GaussFlow, ConfigValidation) {
  EXPECT_THROW(nlohmann::json({{"layers", 0}}).get<GaussFlowConfig>(), ValidationError);
  EXPECT_THROW(nlohmann::json({{"batch_size", 0}}).get<GaussFlowConfig>(), ValidationError);
  const GaussFlowConfig c = nlohmann::json({{"components", 7}}).get<GaussFlowConfig>();
  EXPECT_EQ(c.components, 7);
  EXPECT_EQ(nlohmann::json(c).get<GaussFlowConfig>().components, 7);
}

}  // namespace
}  // namespace densbench::gaussflow
