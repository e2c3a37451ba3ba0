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
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "densbench/diffnet/tape.hpp"

namespace densbench::diffnet {

/// Triangular cyclic learning rate: base_lr at multiples of `period`,
/// max_lr half-way between.
struct CyclicSchedule {
  double base_lr = 1e-4;
  double max_lr = 1e-3;
  std::int64_t period = 2000;

  double lr_at(std::int64_t step) const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW-style)
  std::optional<CyclicSchedule> cyclic;

  void validate() const;
};

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step to match the parameter shapes.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig config);

  /// Learning rate that the step with index `step() + 1` will use.
  double current_lr() const;
  std::int64_t step() const { return step_; }
  const AdamConfig& config() const { return config_; }

  /// Throws DivergenceError("divergence detected") on a non-finite gradient;
  /// parameters are left untouched in that case.
  void update(std::span<Matrix* const> params, std::span<const Matrix> grads);

  friend void to_json(nlohmann::json& j, const AdamState& s);
  friend void from_json(const nlohmann::json& j, AdamState& s);

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t step_ = 0;
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

}  // namespace densbench::diffnet
