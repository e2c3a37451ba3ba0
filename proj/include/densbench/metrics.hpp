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
#include <span>
#include <vector>

namespace densbench::metrics {

/// Right-continuous empirical CDF, F(t) = #{points <= t} / n.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> points);

  double operator()(double t) const;
  std::span<const double> sorted_points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<double> points_;
};

/// Wasserstein-1 distance between two empirical distributions: the exact
/// integral of |F_x - F_y| over the pooled order statistics.
double w1_direct(std::span<const double> x, std::span<const double> y);

/// Same as w1_direct for inputs already sorted ascending.
double w1_direct_sorted(std::span<const double> x, std::span<const double> y);

/// Critic-based estimate mean c(x) - mean c(y). Signed; never clamped.
double w1_critic(const std::function<double(double)>& critic, std::span<const double> x,
                 std::span<const double> y);

/// Overload taking critic values already evaluated on both sample sets.
double w1_critic_values(std::span<const double> critic_x, std::span<const double> critic_y);

/// Largest secant slope |c(x_i) - c(y_i)| / |x_i - y_i| over the sorted
/// (optimal) coupling of two equal-size samples. Bounds |w1_critic| by
/// this slope times w1_direct.
double coupling_lipschitz(std::span<const double> x_sorted, std::span<const double> cx,
                          std::span<const double> y_sorted, std::span<const double> cy);

enum class Kernel { kGaussian };

struct KdeConfig {
  std::size_t sample_size = 100000;
  std::size_t target_band_count = 500;
  Kernel kernel = Kernel::kGaussian;
  std::size_t eval_grid = 1000;
};

/// Smallest h for which the window [t - h, t + h] around each sample point
/// holds, on average, target_band_count samples (point itself included).
double kde_bandwidth(std::span<const double> samples, const KdeConfig& config = {});

/// Average in-window count at bandwidth h; `sorted` must be ascending.
double mean_band_count(std::span<const double> sorted, double h);

/// Gaussian-kernel density estimate on `grid`. Kernel sums are truncated at
/// 9h, far below double resolution of the peak.
std::vector<double> kde_evaluate(std::span<const double> samples, double h,
                                 std::span<const double> grid);

/// Mean log KDE density of `holdout` under `train` at bandwidth h.
double heldout_log_likelihood(std::span<const double> train, double h,
                              std::span<const double> holdout);

struct BandwidthCheck {
  double rule_h = 0.0;
  double rule_log_likelihood = 0.0;
  double best_grid_h = 0.0;
  double best_grid_log_likelihood = 0.0;
  std::vector<double> grid_h;
  std::vector<double> grid_log_likelihood;
};

/// Compares the count rule against a log-spaced grid of bandwidths spanning
/// [rule_h / 10, rule_h * 10] by held-out log-likelihood.
BandwidthCheck check_bandwidth_rule(std::span<const double> train, std::span<const double> holdout,
                                    const KdeConfig& config = {}, std::size_t grid_points = 20);

std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

struct Mode {
  double location = 0.0;
  double height = 0.0;
  double prominence = 0.0;
};

/// Local maxima of a sampled curve whose topographic prominence is at least
/// `min_relative_prominence` times the global maximum. Plateaus count once,
/// at their midpoint.
std::vector<Mode> find_modes(std::span<const double> grid, std::span<const double> density,
                             double min_relative_prominence = 0.05);

/// Trapezoid rule over a sampled curve.
double trapezoid(std::span<const double> grid, std::span<const double> values);

}  // namespace densbench::metrics
