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

#include "densbench/diffnet/adam.hpp"

#include <cmath>

#include "densbench/error.hpp"
#include "densbench/json_util.hpp"

namespace densbench::diffnet {

double CyclicSchedule::lr_at(std::int64_t step) const {
  const double phase = static_cast<double>(step % period) / static_cast<double>(period);
  const double height = 1.0 - std::fabs(2.0 * phase - 1.0);
  return base_lr + (max_lr - base_lr) * height;
}

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("adam: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValidationError("adam: eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("adam: weight_decay must be >= 0");
  if (cyclic) {
    if (!(cyclic->base_lr > 0.0) || !(cyclic->max_lr >= cyclic->base_lr)) {
      throw ValidationError("adam: cyclic schedule needs 0 < base_lr <= max_lr");
    }
    if (cyclic->period < 2) throw ValidationError("adam: cyclic period must be >= 2");
  }
}

AdamState::AdamState(AdamConfig config) : config_(std::move(config)) { config_.validate(); }

double AdamState::current_lr() const {
  return config_.cyclic ? config_.cyclic->lr_at(step_ + 1) : config_.lr;
}

void AdamState::update(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw ValidationError("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw ValidationError("adam: parameter/gradient shape mismatch");
    }
    if (!grads[i].allFinite()) throw DivergenceError(step_ + 1, "divergence detected");
  }
  if (m_.empty()) {
    for (Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  } else if (m_.size() != params.size()) {
    throw ValidationError("adam: parameter list changed between steps");
  }

  const double lr = current_lr();
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseAbs2();
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    Matrix& p = *params[i];
    p.array() -= lr * (m_hat / (v_hat.sqrt() + config_.eps) + config_.weight_decay * p.array());
  }
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
       {"weight_decay", c.weight_decay}};
  if (c.cyclic) {
    j["cyclic"] = {{"base_lr", c.cyclic->base_lr}, {"max_lr", c.cyclic->max_lr},
                   {"period", c.cyclic->period}};
  } else {
    j["cyclic"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  c = AdamConfig{};
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("cyclic") && !j.at("cyclic").is_null()) {
    const auto& cy = j.at("cyclic");
    c.cyclic = CyclicSchedule{cy.at("base_lr").get<double>(), cy.at("max_lr").get<double>(),
                              cy.at("period").get<std::int64_t>()};
  }
  c.validate();
}

void to_json(nlohmann::json& j, const AdamState& s) {
  nlohmann::json m = nlohmann::json::array();
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : s.m_) m.push_back(matrix_to_json(x));
  for (const auto& x : s.v_) v.push_back(matrix_to_json(x));
  j = {{"config", s.config_}, {"step", s.step_}, {"m", std::move(m)}, {"v", std::move(v)}};
}

void from_json(const nlohmann::json& j, AdamState& s) {
  s.config_ = j.at("config").get<AdamConfig>();
  s.step_ = j.at("step").get<std::int64_t>();
  s.m_.clear();
  s.v_.clear();
  for (const auto& x : j.at("m")) s.m_.push_back(matrix_from_json(x));
  for (const auto& x : j.at("v")) s.v_.push_back(matrix_from_json(x));
  if (s.m_.size() != s.v_.size()) throw ValidationError("adam checkpoint: moment count mismatch");
}

}  // namespace densbench::diffnet
