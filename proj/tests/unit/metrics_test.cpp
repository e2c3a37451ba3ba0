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
#include <numeric>

#include <gtest/gtest.h>

#include "densbench/error.hpp"
#include "densbench/metrics.hpp"
#include "densbench/synthdata.hpp"

namespace densbench::metrics {
namespace {

std::vector<double> uniform_samples(std::size_t n, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (double& x : out) x = rng.uniform(lo, hi);
  return out;
}

// Mean |x_(i) - y_(i)| over sorted pairs: the optimal coupling for equal sizes.
double sorted_pairing_oracle(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  long double total = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) total += std::fabs(x[i] - y[i]);
  return static_cast<double>(total / x.size());
}

// Band count by binary search per point, independent of the sweep.
double band_count_oracle(const std::vector<double>& sorted, double h) {
  double total = 0.0;
  for (double t : sorted) {
    total += std::upper_bound(sorted.begin(), sorted.end(), t + h) -
             std::lower_bound(sorted.begin(), sorted.end(), t - h);
  }
  return total / sorted.size();
}

TEST(W1Direct, SmallExamples) {
  EXPECT_EQ(w1_direct(std::vector{0.0, 1.0}, std::vector{0.0, 1.0}), 0.0);
  EXPECT_EQ(w1_direct(std::vector{0.0}, std::vector{3.0}), 3.0);
  EXPECT_EQ(w1_direct(std::vector{0.0, 1.0}, std::vector{2.0, 3.0}), 2.0);
  // Unequal sizes: point mass at 0 vs {0, 2}: half the mass moves 2.
  EXPECT_DOUBLE_EQ(w1_direct(std::vector{0.0}, std::vector{0.0, 2.0}), 1.0);
  EXPECT_THROW(w1_direct(std::vector<double>{}, std::vector{1.0}), ValidationError);
}

TEST(W1Direct, MatchesSortedPairingOnRandomPairs) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(1000);
    std::vector<double> y(1000);
    const double shift = rng.uniform(-1.0, 1.0);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = shift + 2.0 * rng.uniform();
    EXPECT_NEAR(w1_direct(x, y), sorted_pairing_oracle(x, y), 1e-12);
  }
}

TEST(W1Direct, UniformShift) {
  const auto x = uniform_samples(100000, 0.0, 1.0, 1);
  const auto y = uniform_samples(100000, 0.5, 1.5, 2);
  EXPECT_NEAR(w1_direct(x, y), 0.5, 0.01);
}

TEST(W1Direct, MetricAxiomsOnRandomTriples) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto make = [&] {
      std::vector<double> v(1 + rng.below(40));
      const double loc = rng.uniform(-2, 2);
      for (auto& x : v) x = loc + rng.normal();
      return v;
    };
    const auto a = make();
    const auto b = make();
    const auto c = make();
    const double ab = w1_direct(a, b);
    EXPECT_DOUBLE_EQ(ab, w1_direct(b, a));
    EXPECT_EQ(w1_direct(a, a), 0.0);
    EXPECT_LE(w1_direct(a, c), ab + w1_direct(b, c) + 1e-12);
  }
  // Same empirical law, different multiplicities.
  EXPECT_NEAR(w1_direct(std::vector{1.0, 2.0}, std::vector{1.0, 1.0, 2.0, 2.0}), 0.0, 1e-15);
}

TEST(W1Direct, FreshSamplesFromSameLawAreClose) {
  synthdata::DatasetHandle data(synthdata::preset("unimodal"), 4);
  const auto a = data.sample(100000);
  const auto b = data.sample(100000);
  EXPECT_LT(w1_direct(a, b), 0.005);
}

TEST(W1Critic, Examples) {
  auto identity = [](double x) { return x; };
  EXPECT_EQ(w1_critic(identity, std::vector{1.0, 1.0}, std::vector{0.0, 0.0}), 1.0);
  EXPECT_EQ(w1_critic([](double x) { return -x; }, std::vector{1.0}, std::vector{0.0}), -1.0);
  const std::vector<double> s = {0.3, -1.2, 4.0};
  const std::vector<double> shuffled = {4.0, 0.3, -1.2};
  EXPECT_NEAR(w1_critic([](double x) { return std::sin(3 * x); }, s, shuffled), 0.0, 1e-15);
  EXPECT_THROW(w1_critic(identity, std::vector<double>{}, s), ValidationError);
}

TEST(W1Critic, LipschitzCriticNeverExceedsDirect) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(500);
    std::vector<double> y(500);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = 0.3 + 1.5 * rng.normal();
    const double a = rng.uniform(-1, 1);
    const double direct = w1_direct(x, y);
    EXPECT_LE(std::fabs(w1_critic([](double t) { return t; }, x, y)), direct + 1e-12);
    EXPECT_LE(std::fabs(w1_critic([a](double t) { return std::fabs(t - a); }, x, y)), direct + 1e-12);
  }
}

TEST(W1Critic, CouplingLipschitzBoundsEstimate) {
  Rng rng(8);
  std::vector<double> x(300);
  std::vector<double> y(300);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = 1.0 + 0.5 * rng.normal();
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  auto critic = [](double t) { return 3.0 * std::tanh(t); };
  std::vector<double> cx(x.size());
  std::vector<double> cy(y.size());
  std::transform(x.begin(), x.end(), cx.begin(), critic);
  std::transform(y.begin(), y.end(), cy.begin(), critic);
  const double lip = coupling_lipschitz(x, cx, y, cy);
  EXPECT_LE(lip, 3.0 + 1e-12);
  EXPECT_LE(std::fabs(w1_critic_values(cx, cy)), lip * w1_direct_sorted(x, y) + 1e-12);
}

TEST(EmpiricalCdf, RightContinuousSteps) {
  EmpiricalCdf f({2.0, 1.0, 2.0, 3.0});
  EXPECT_EQ(f(0.5), 0.0);
  EXPECT_EQ(f(1.0), 0.25);
  EXPECT_EQ(f(2.0), 0.75);
  EXPECT_EQ(f(10.0), 1.0);
}

TEST(KdeBandwidth, EvenlySpacedUnitInterval) {
  std::vector<double> x(100000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) / (x.size() - 1);
  const double h = kde_bandwidth(x, {});
  EXPECT_NEAR(h, 0.0025, 0.0025 * 0.05);
  EXPECT_GE(band_count_oracle(x, h), 500.0);
  EXPECT_LT(band_count_oracle(x, h * (1 - 1e-6)), 500.0);
}

TEST(KdeBandwidth, FullTargetCoversRange) {
  const auto x = uniform_samples(2000, -3.0, 4.0, 12);
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  KdeConfig config;
  config.target_band_count = x.size();
  EXPECT_GE(kde_bandwidth(x, config), (*hi - *lo) * (1 - 1e-12));
}

TEST(KdeBandwidth, HalfDensityDoublesBandwidth) {
  const auto narrow = uniform_samples(100000, 0.0, 1.0, 21);
  const auto wide = uniform_samples(100000, 0.0, 2.0, 22);
  const double h_narrow = kde_bandwidth(narrow, {});
  const double h_wide = kde_bandwidth(wide, {});
  EXPECT_NEAR(h_wide, 0.005, 0.005 * 0.05);
  std::vector<double> sorted = wide;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_NEAR(band_count_oracle(sorted, h_wide), 500.0, 1.0);
  EXPECT_NEAR(h_wide / h_narrow, 2.0, 0.1);
}

TEST(KdeBandwidth, Errors) {
  EXPECT_THROW(kde_bandwidth(std::vector<double>(1000, 2.0), {}), ValidationError);
  EXPECT_THROW(kde_bandwidth(std::vector<double>{1.0, 2.0}, {}), ValidationError);
}

TEST(KdeEvaluate, SingleSamplePeak) {
  const auto f = kde_evaluate(std::vector{0.0}, 1.0, std::vector{0.0});
  EXPECT_NEAR(f[0], 0.3989422804014327, 1e-15);
}

TEST(KdeEvaluate, IntegratesToOne) {
  Rng rng(3);
  std::vector<double> s(200);
  for (auto& v : s) v = rng.normal() * (1 + rng.uniform());
  const double h = 0.3;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const auto grid = uniform_grid(*lo - 6 * h, *hi + 6 * h, 20001);
  const auto f = kde_evaluate(s, h, grid);
  EXPECT_NEAR(trapezoid(grid, f), 1.0, 1e-3);
  EXPECT_TRUE(std::all_of(f.begin(), f.end(), [](double v) { return v >= 0.0; }));
}

TEST(KdeEvaluate, UnimodalPeakMatchesClosedForm) {
  synthdata::DatasetHandle data(synthdata::preset("unimodal"), 31);
  const auto s = data.sample(100000);
  const double h = kde_bandwidth(s, {});
  const auto f = kde_evaluate(s, h, std::vector{5.0});
  const double truth = synthdata::pdf(data.spec(), 5.0);
  EXPECT_NEAR(f[0], truth, 0.06 * truth);
}

TEST(FindModes, CountsProminentPeaksOnly) {
  const auto grid = uniform_grid(0.0, 10.0, 1001);
  std::vector<double> f(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    f[i] = std::exp(-std::pow(t - 2.0, 2) / 0.1) + 0.8 * std::exp(-std::pow(t - 7.0, 2) / 0.1) +
           0.001 * std::sin(40 * t);
  }
  const auto modes = find_modes(grid, f, 0.05);
  ASSERT_EQ(modes.size(), 2u);
  EXPECT_NEAR(modes[0].location, 2.0, 0.02);
  EXPECT_NEAR(modes[1].location, 7.0, 0.02);
  EXPECT_GT(find_modes(grid, f, 0.0).size(), 2u);
}

TEST(FindModes, PlateauCountsOnceAndEdgesDoNot) {
  const std::vector<double> grid = {0, 1, 2, 3, 4, 5, 6};
  const std::vector<double> f = {5, 1, 3, 3, 3, 1, 2};
  const auto modes = find_modes(grid, f, 0.1);
  ASSERT_EQ(modes.size(), 1u);
  EXPECT_EQ(modes[0].location, 3.0);
}

}  // namespace
}  // namespace densbench::metrics
