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

#include "densbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "densbench/error.hpp"
#include "densbench/probit.hpp"

namespace densbench::metrics {
namespace {

// Neumaier-compensated running sum; fixed order, so results do not depend
// on how callers partition work.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

void require_nonempty(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw ValidationError("empty sample set");
}

constexpr double kKernelCutoff = 9.0;

}  // namespace

EmpiricalCdf::EmpiricalCdf(std::vector<double> points) : points_(std::move(points)) {
  if (points_.empty()) throw ValidationError("empty sample set");
  std::sort(points_.begin(), points_.end());
}

double EmpiricalCdf::operator()(double t) const {
  const auto it = std::upper_bound(points_.begin(), points_.end(), t);
  return static_cast<double>(it - points_.begin()) / static_cast<double>(points_.size());
}

double w1_direct(std::span<const double> x, std::span<const double> y) {
  require_nonempty(x, y);
  const auto xs = sorted_copy(x);
  const auto ys = sorted_copy(y);
  return w1_direct_sorted(xs, ys);
}

double w1_direct_sorted(std::span<const double> x, std::span<const double> y) {
  require_nonempty(x, y);
  const auto n = static_cast<std::int64_t>(x.size());
  const auto m = static_cast<std::int64_t>(y.size());
  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(m));
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::int64_t i = 0;
  std::int64_t j = 0;
  double t = std::min(x[0], y[0]);
  CompensatedSum total;
  while (true) {
    while (i < n && x[static_cast<std::size_t>(i)] <= t) ++i;
    while (j < m && y[static_cast<std::size_t>(j)] <= t) ++j;
    if (i == n && j == m) break;
    const double next = std::min(i < n ? x[static_cast<std::size_t>(i)] : inf,
                                 j < m ? y[static_cast<std::size_t>(j)] : inf);
    // |i/n - j/m| evaluated exactly in integers before the single rounding.
    const auto gap = static_cast<double>(std::llabs(i * m - j * n)) * scale;
    total.add(gap * (next - t));
    t = next;
  }
  return total.value();
}

double w1_critic(const std::function<double(double)>& critic, std::span<const double> x,
                 std::span<const double> y) {
  require_nonempty(x, y);
  std::vector<double> cx(x.size());
  std::vector<double> cy(y.size());
  std::transform(x.begin(), x.end(), cx.begin(), critic);
  std::transform(y.begin(), y.end(), cy.begin(), critic);
  return w1_critic_values(cx, cy);
}

double w1_critic_values(std::span<const double> critic_x, std::span<const double> critic_y) {
  require_nonempty(critic_x, critic_y);
  CompensatedSum sx;
  CompensatedSum sy;
  for (double v : critic_x) sx.add(v);
  for (double v : critic_y) sy.add(v);
  return sx.value() / static_cast<double>(critic_x.size()) -
         sy.value() / static_cast<double>(critic_y.size());
}

double coupling_lipschitz(std::span<const double> x_sorted, std::span<const double> cx,
                          std::span<const double> y_sorted, std::span<const double> cy) {
  if (x_sorted.size() != y_sorted.size() || cx.size() != x_sorted.size() ||
      cy.size() != y_sorted.size()) {
    throw ValidationError("coupling_lipschitz: size mismatch");
  }
  double best = 0.0;
  for (std::size_t i = 0; i < x_sorted.size(); ++i) {
    const double dx = std::fabs(x_sorted[i] - y_sorted[i]);
    const double dc = std::fabs(cx[i] - cy[i]);
    if (dx > 0.0) {
      best = std::max(best, dc / dx);
    } else if (dc > 0.0) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return best;
}

double mean_band_count(std::span<const double> sorted, double h) {
  const std::size_t n = sorted.size();
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double left = sorted[i] - h;
    const double right = sorted[i] + h;
    while (sorted[lo] < left) ++lo;
    while (hi < n && sorted[hi] <= right) ++hi;
    total += hi - lo;
  }
  return static_cast<double>(total) / static_cast<double>(n);
}

double kde_bandwidth(std::span<const double> samples, const KdeConfig& config) {
  if (config.target_band_count < 1) throw ValidationError("target_band_count must be >= 1");
  if (samples.size() < config.target_band_count) {
    throw ValidationError("sample count below target_band_count");
  }
  const auto sorted = sorted_copy(samples);
  const double range = sorted.back() - sorted.front();
  if (!(range > 0.0)) throw ValidationError("zero-variance sample");

  const auto target = static_cast<double>(config.target_band_count);
  double lo = 0.0;
  double hi = range;
  for (int iter = 0; iter < 200 && hi - lo > 1e-13 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mean_band_count(sorted, mid) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

std::vector<double> kde_evaluate(std::span<const double> samples, double h,
                                 std::span<const double> grid) {
  if (!(h > 0.0)) throw ValidationError("bandwidth must be > 0");
  if (samples.empty()) throw ValidationError("empty sample set");
  const auto sorted = sorted_copy(samples);
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * h) * std::exp(-kLogSqrt2Pi);
  const double reach = kKernelCutoff * h;
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double t = grid[g];
    auto first = std::lower_bound(sorted.begin(), sorted.end(), t - reach);
    auto last = std::upper_bound(first, sorted.end(), t + reach);
    double sum = 0.0;
    for (auto it = first; it != last; ++it) {
      const double u = (t - *it) / h;
      sum += std::exp(-0.5 * u * u);
    }
    out[g] = sum * norm;
  }
  return out;
}

double heldout_log_likelihood(std::span<const double> train, double h,
                              std::span<const double> holdout) {
  const auto density = kde_evaluate(train, h, holdout);
  CompensatedSum total;
  for (double d : density) total.add(std::log(std::max(d, std::numeric_limits<double>::min())));
  return total.value() / static_cast<double>(density.size());
}

BandwidthCheck check_bandwidth_rule(std::span<const double> train, std::span<const double> holdout,
                                    const KdeConfig& config, std::size_t grid_points) {
  if (grid_points < 2) throw ValidationError("bandwidth grid needs >= 2 points");
  BandwidthCheck out;
  out.rule_h = kde_bandwidth(train, config);
  out.rule_log_likelihood = heldout_log_likelihood(train, out.rule_h, holdout);
  out.best_grid_log_likelihood = -std::numeric_limits<double>::infinity();
  const double log_lo = std::log(out.rule_h / 10.0);
  const double log_hi = std::log(out.rule_h * 10.0);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double h = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) /
                                           static_cast<double>(grid_points - 1));
    const double ll = heldout_log_likelihood(train, h, holdout);
    out.grid_h.push_back(h);
    out.grid_log_likelihood.push_back(ll);
    if (ll > out.best_grid_log_likelihood) {
      out.best_grid_log_likelihood = ll;
      out.best_grid_h = h;
    }
  }
  return out;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {0.5 * (lo + hi)};
  std::vector<double> out(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

std::vector<Mode> find_modes(std::span<const double> grid, std::span<const double> density,
                             double min_relative_prominence) {
  if (grid.size() != density.size()) throw ValidationError("find_modes: size mismatch");
  const std::size_t n = density.size();
  std::vector<Mode> modes;
  if (n == 0) return modes;
  const double peak = *std::max_element(density.begin(), density.end());
  const double threshold = min_relative_prominence * peak;

  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && density[j + 1] == density[i]) ++j;
    const double v = density[i];
    const bool left_lower = i == 0 || density[i - 1] < v;
    const bool right_lower = j + 1 == n || density[j + 1] < v;
    if (left_lower && right_lower && !(i == 0 && j + 1 == n)) {
      double left_min = v;
      for (std::size_t k = i; k-- > 0;) {
        if (density[k] > v) break;
        left_min = std::min(left_min, density[k]);
      }
      double right_min = v;
      for (std::size_t k = j + 1; k < n; ++k) {
        if (density[k] > v) break;
        right_min = std::min(right_min, density[k]);
      }
      const double prominence = v - std::max(left_min, right_min);
      if (prominence >= threshold && prominence > 0.0) {
        modes.push_back({0.5 * (grid[i] + grid[j]), v, prominence});
      }
    }
    i = j + 1;
  }
  return modes;
}

double trapezoid(std::span<const double> grid, std::span<const double> values) {
  if (grid.size() != values.size()) throw ValidationError("trapezoid: size mismatch");
  CompensatedSum total;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    total.add(0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]));
  }
  return total.value();
}

}  // namespace densbench::metrics
