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

#include "densbench/record.hpp"

#include <cmath>

#include "densbench/error.hpp"
#include "densbench/json_util.hpp"

namespace densbench {

void TrialRecord::add_eval(const EvalPoint& point) {
  history.push_back(point);
  final_w1 = point.true_w1;
  if (std::isfinite(point.true_w1) && !(point.true_w1 >= best_w1)) {
    best_w1 = point.true_w1;
    best_step = point.step;
  }
}

nlohmann::json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError("expected a number, got " + j.dump());
}

void to_json(nlohmann::json& j, const EvalPoint& p) {
  j = {{"step", p.step}, {"true_w1", number_to_json(p.true_w1)}, {"loss", number_to_json(p.loss)}};
  if (p.critic_w1) j["critic_w1"] = number_to_json(*p.critic_w1);
  if (p.generator_loss) j["generator_loss"] = number_to_json(*p.generator_loss);
}

void from_json(const nlohmann::json& j, EvalPoint& p) {
  p.step = j.at("step").get<std::int64_t>();
  p.true_w1 = number_from_json(j.at("true_w1"));
  p.loss = number_from_json(j.at("loss"));
  p.critic_w1.reset();
  p.generator_loss.reset();
  if (j.contains("critic_w1")) p.critic_w1 = number_from_json(j["critic_w1"]);
  if (j.contains("generator_loss")) p.generator_loss = number_from_json(j["generator_loss"]);
}

void to_json(nlohmann::json& j, const TrialRecord& r) {
  j = {{"schema_version", kSchemaVersion},
       {"model", r.model},
       {"config", r.config},
       {"dataset", r.dataset},
       {"seed", r.seed},
       {"history", r.history},
       {"best_w1", number_to_json(r.best_w1)},
       {"best_step", r.best_step},
       {"final_w1", number_to_json(r.final_w1)},
       {"wall_clock_seconds", r.wall_clock_seconds},
       {"status", r.failed ? "failed" : "ok"},
       {"failure", r.failure},
       {"failure_step", r.failure_step ? nlohmann::json(*r.failure_step) : nlohmann::json(nullptr)},
       {"clamp_events", r.clamp_events},
       {"checkpoint", r.checkpoint_path},
       {"density_curve", r.density_path}};
}

void from_json(const nlohmann::json& j, TrialRecord& r) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw ValidationError("record: unsupported schema_version");
  r.model = j.at("model").get<std::string>();
  r.config = j.at("config");
  r.dataset = j.at("dataset");
  r.seed = j.at("seed").get<std::uint64_t>();
  r.history = j.at("history").get<std::vector<EvalPoint>>();
  r.best_w1 = number_from_json(j.at("best_w1"));
  r.best_step = j.at("best_step").get<std::int64_t>();
  r.final_w1 = number_from_json(j.at("final_w1"));
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  r.failed = j.at("status").get<std::string>() == "failed";
  r.failure = j.value("failure", "");
  r.failure_step.reset();
  if (j.contains("failure_step") && !j["failure_step"].is_null()) r.failure_step = j["failure_step"].get<std::int64_t>();
  r.clamp_events = j.value("clamp_events", std::uint64_t{0});
  r.checkpoint_path = j.value("checkpoint", "");
  r.density_path = j.value("density_curve", "");
}

}  // namespace densbench
