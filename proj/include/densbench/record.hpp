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

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace densbench {

/// One evaluation point of a training run.
struct EvalPoint {
  std::int64_t step = 0;
  double true_w1 = 0.0;
  std::optional<double> critic_w1;       // WGAN only
  double loss = 0.0;                     // critic loss (WGAN) or negative log-likelihood (flow)
  std::optional<double> generator_loss;  // WGAN only
};

/// Result of one training run. Paths are relative to the record's directory.
struct TrialRecord {
  std::string model;  // "wgan" or "gf"
  nlohmann::json config;
  nlohmann::json dataset;
  std::uint64_t seed = 0;
  std::vector<EvalPoint> history;
  double best_w1 = std::numeric_limits<double>::infinity();
  std::int64_t best_step = -1;
  double final_w1 = std::numeric_limits<double>::infinity();
  double wall_clock_seconds = 0.0;
  bool failed = false;
  std::string failure;
  std::optional<std::int64_t> failure_step;
  std::uint64_t clamp_events = 0;  // flow CDF clamping count
  std::string checkpoint_path;
  std::string density_path;

  /// Appends an eval point and refreshes best/final W1.
  void add_eval(const EvalPoint& point);
};

void to_json(nlohmann::json& j, const EvalPoint& p);
void from_json(const nlohmann::json& j, EvalPoint& p);
void to_json(nlohmann::json& j, const TrialRecord& r);
void from_json(const nlohmann::json& j, TrialRecord& r);

/// Non-finite doubles are written as the strings "inf", "-inf", "nan".
nlohmann::json number_to_json(double v);
double number_from_json(const nlohmann::json& j);

}  // namespace densbench
