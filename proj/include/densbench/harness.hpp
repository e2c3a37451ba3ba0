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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "densbench/hypersearch.hpp"
#include "densbench/record.hpp"
#include "densbench/synthdata.hpp"

namespace densbench::harness {

struct DatasetEntry {
  std::string name;
  synthdata::MixtureSpec spec;
};

/// One row of the summary table. `config` is a patch over the model
/// defaults for the dataset; `per_dataset` adds a further patch per dataset
/// name.
struct ModelEntry {
  std::string name;
  std::string kind;  // "wgan" or "gf"
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, nlohmann::json> per_dataset;
};

struct ExperimentPlan {
  std::vector<DatasetEntry> datasets;
  std::vector<ModelEntry> models;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output;
  std::size_t eval_samples = 100000;
  int workers = 1;

  /// Builds and validates every cell config.
  void validate() const;
};

/// Plan document:
///   {"datasets": ["unimodal", "spec.json", {...}],
///    "models": [{"name": .., "kind": "wgan"|"gf",
///                "config": {..} | "file.json", "search": "dir",
///                "extends": "other model", "per_dataset": {"unimodal": {..}}}],
///    "seeds": [..], "output": "dir", "eval_samples": n, "workers": n}
/// Relative paths resolve against `base_dir`. "search" takes the best
/// config of a finished search; "extends" starts from an earlier entry,
/// and the entry's own "search" and "config" patches then override both the
/// inherited config and every inherited per_dataset patch.
ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
ExperimentPlan load_plan(const std::filesystem::path& path);

DatasetEntry dataset_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");

/// Full, validated training config for a model on a dataset.
nlohmann::json cell_config(const ModelEntry& model, const DatasetEntry& dataset, std::size_t eval_samples);

/// Trains one model and writes record.json, checkpoint.json and density.csv
/// into `dir`. Training failures end up in the record, not as exceptions.
TrialRecord run_cell(const std::string& kind, const nlohmann::json& config, const synthdata::MixtureSpec& spec,
                     std::uint64_t seed, const std::filesystem::path& dir);

struct CellResult {
  std::string model;
  std::string dataset;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  TrialRecord record;
};

struct SummaryCell {
  std::string model;
  std::string dataset;
  std::vector<double> best_w1;  // successful seeds only
  std::size_t failed = 0;

  bool all_failed() const { return best_w1.empty(); }
  double median() const;
  double min() const;
  double max() const;
};

struct Summary {
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  std::vector<SummaryCell> cells;  // row-major: model, then dataset

  const SummaryCell& cell(const std::string& model, const std::string& dataset) const;
  bool any_failed() const;
  std::string csv() const;
  /// Aligned table, cells "median [min, max]" or FAILED.
  std::string text() const;
};

Summary summarize(const std::vector<std::string>& models, const std::vector<std::string>& datasets,
                  const std::vector<CellResult>& results);

/// Runs every (dataset, model, seed) cell into output/<dataset>/<model>/seed_<s>
/// and writes summary.csv and summary.txt.
Summary run(const ExperimentPlan& plan);

double median(std::vector<double> values);

/// Uniform grid over the dataset support padded by 10% on each side.
std::vector<double> density_grid(const synthdata::MixtureSpec& spec, std::size_t count);

/// KDE of `samples` with the bandwidth rule, evaluated on `grid`.
std::vector<double> kde_curve(const std::vector<double>& samples, const std::vector<double>& grid);

void write_curve(const std::filesystem::path& path, const std::vector<double>& grid,
                 const std::vector<double>& density);
std::pair<std::vector<double>, std::vector<double>> read_curve(const std::filesystem::path& path);

/// Density of a trained model (KDE of samples for WGAN, exact for flows).
std::vector<double> model_curve(const TrialRecord& record, const nlohmann::json& checkpoint,
                                 const std::vector<double>& grid, std::size_t kde_samples = 100000);

/// Rewrites density.csv next to every record.json under `records`, and
/// writes truth_<dataset>.csv for each dataset seen. Returns written files.
std::vector<std::filesystem::path> export_density_curves(const std::filesystem::path& records, std::size_t grid);

struct CriticRow {
  std::int64_t step = 0;
  double true_w1 = 0.0;
  double critic_w1 = 0.0;
  double ratio = 0.0;  // critic / true; NaN when true W1 is 0
  int sign = 0;
  std::vector<std::string> flags;
};

struct CriticReport {
  std::vector<CriticRow> rows;
  std::size_t flagged = 0;
  std::optional<double> median_ratio;

  nlohmann::json to_json() const;
  std::string text() const;
};

inline constexpr const char* kNegativeFlag = "negative critic estimate";
inline constexpr const char* kUnderFlag = "critic estimate below 0.1 x true W1";

CriticReport diagnose_critic(const TrialRecord& record);
/// Pooled report over several WGAN records (for example a whole search).
CriticReport diagnose_critic(const std::vector<TrialRecord>& records);

/// Records written under a directory tree, sorted by path.
std::vector<std::pair<std::filesystem::path, TrialRecord>> find_records(const std::filesystem::path& root);

/// Objective for hypersearch on a dataset: trains the WGAN at the rung
/// budget, stores the record under dir/trial_<i>/rung_<r>, and returns best
/// true W1. Failed training throws so the search records the failure.
hypersearch::Objective search_objective(const synthdata::MixtureSpec& spec, std::filesystem::path dir,
                                        std::uint64_t seed, std::optional<std::size_t> eval_samples = std::nullopt);

}  // namespace densbench::harness
