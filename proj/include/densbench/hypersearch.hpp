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
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "densbench/rng.hpp"
#include "densbench/synthdata.hpp"

namespace densbench::hypersearch {

struct Choice {
  std::vector<nlohmann::json> values;
};
struct LogUniform {
  double lo = 0.0;
  double hi = 0.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 0.0;
};
struct IntUniform {  // inclusive
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

using Distribution = std::variant<Choice, LogUniform, Uniform, IntUniform>;

/// One searched field. `paths` are dotted locations inside the config JSON;
/// a dimension with several paths writes the same draw to all of them.
struct Dimension {
  std::string name;
  std::vector<std::string> paths;
  Distribution distribution;
};

/// Random-search space over WGAN configurations.
///
/// `base` is a partial config; dimensions are drawn in name order. The pseudo
/// path "cyclic_lr" (boolean) adds a triangular schedule to both optimizers
/// with max_lr = lr, base_lr = lr / 10 and the period below.
struct SearchSpace {
  nlohmann::json base = nlohmann::json::object();
  std::vector<Dimension> dimensions;
  std::int64_t cyclic_period = 1000;

  void validate() const;
  /// Activations, widths 64..512, depths 2..5, init, prior family and dim
  /// 1..16, Lipschitz mechanism and lambda, n_critic, lr, betas, weight
  /// decay, dropout, batch norm, residual, cyclic lr.
  static SearchSpace defaults();
};

void to_json(nlohmann::json& j, const SearchSpace& s);
void from_json(const nlohmann::json& j, SearchSpace& s);

/// One draw per dimension, then cross-field fixes (gradient penalty turns
/// off critic batch norm). The result always parses as a WganConfig.
nlohmann::json sample_config(const SearchSpace& space, Rng& rng);

/// Config of trial `trial` in a search seeded with `seed`.
nlohmann::json trial_config(const SearchSpace& space, std::uint64_t seed, std::size_t trial);

struct AshaSchedule {
  std::int64_t min_budget = 500;
  std::int64_t max_budget = 20000;
  int eta = 3;

  void validate() const;
  /// min_budget * eta^i while below max_budget, then max_budget.
  std::vector<std::int64_t> rungs() const;
};

void to_json(nlohmann::json& j, const AshaSchedule& s);
void from_json(const nlohmann::json& j, AshaSchedule& s);

struct RungResult {
  int rung = 0;
  std::int64_t budget = 0;
  double score = std::numeric_limits<double>::infinity();
};

struct TrialResult {
  std::size_t trial = 0;
  nlohmann::json config;
  std::vector<RungResult> rungs;  // in rung order
  bool failed = false;
  std::string failure;

  int rung_reached() const { return rungs.empty() ? -1 : rungs.back().rung; }
  double final_score() const {
    return rungs.empty() ? std::numeric_limits<double>::infinity() : rungs.back().score;
  }
};

/// Score of `config` after `budget` generator steps; lower is better.
/// Exceptions and non-finite scores mark the trial failed. Throwing
/// StopSearch aborts the whole search instead (used to simulate crashes).
using Objective = std::function<double(const nlohmann::json& config, std::int64_t budget, std::size_t trial, int rung)>;

class StopSearch : public std::runtime_error {
 public:
  StopSearch() : std::runtime_error("search stopped") {}
};

struct SearchOptions {
  std::size_t trials = 200;
  int workers = 1;
  std::uint64_t seed = 0;
  /// Directory for journal.ndjson; empty keeps the search in memory.
  std::filesystem::path dir;
};

/// Asynchronous successive halving. A free worker first takes the best
/// promotable result (top floor(n/eta) of a rung, n = results recorded
/// there; at least one once the rung can receive no more results), highest
/// rung first, and otherwise samples a new trial. Returns all trials ranked
/// by (rung reached desc, final score asc, id).
std::vector<TrialResult> asha_run(const SearchSpace& space, const AshaSchedule& schedule,
                                  const SearchOptions& options, const Objective& objective);

/// Continues the search journaled in `dir`. Jobs started but never scored are
/// re-run; everything already scored is kept. `workers` <= 0 keeps the
/// original worker count.
std::vector<TrialResult> resume(const std::filesystem::path& dir, const Objective& objective, int workers = 0);

/// Trials reconstructed from a journal without running anything.
std::vector<TrialResult> load_results(const std::filesystem::path& dir);

/// Worker count after applying the DENSBENCH_WORKERS cap (minimum 1).
int effective_workers(int requested);

inline constexpr const char* kJournalName = "journal.ndjson";

}  // namespace densbench::hypersearch
