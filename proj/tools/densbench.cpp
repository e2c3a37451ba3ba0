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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "densbench/error.hpp"
#include "densbench/harness.hpp"
#include "densbench/hypersearch.hpp"
#include "densbench/json_util.hpp"
#include "densbench/metrics.hpp"
#include "densbench/synthdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace densbench;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

std::vector<double> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<double> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || line.find_first_not_of(" \t\r", used) != std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(n) + ": not a number");
    }
    out.push_back(v);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}

json load_config(const std::string& path) { return path.empty() ? json::object() : read_json_file(path); }

harness::DatasetEntry dataset(const std::string& ref) { return harness::dataset_from_json(json(ref)); }

void print_trial(const hypersearch::TrialResult& t) {
  std::cout << "trial " << t.trial << "  rung " << t.rung_reached() << "  score "
            << (t.failed ? std::string("FAILED (") + t.failure + ")" : num(t.final_score())) << "\n  "
            << t.config.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density estimation benchmark: synthetic mixtures, WGAN and flow trainers, ASHA search"};
  app.require_subcommand(1);

  // data
  auto* data = app.add_subcommand("data", "Draw samples from a dataset");
  std::string data_spec, data_out;
  std::size_t data_n = 0;
  std::uint64_t data_seed = 0;
  data->add_option("--spec", data_spec, "preset name or spec JSON file")->required();
  data->add_option("--n", data_n, "sample count")->required();
  data->add_option("--seed", data_seed, "RNG seed")->required();
  data->add_option("--out", data_out, "output file (stdout if omitted)");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Sample metrics");
  metrics_cmd->require_subcommand(1);
  auto* w1 = metrics_cmd->add_subcommand("w1", "Wasserstein-1 distance between two sample files");
  std::string w1_a, w1_b;
  w1->add_option("--a", w1_a, "first sample file")->required();
  w1->add_option("--b", w1_b, "second sample file")->required();
  auto* kde = metrics_cmd->add_subcommand("kde", "KDE curve with the bandwidth rule");
  std::string kde_in, kde_out;
  std::size_t kde_grid = 1000;
  kde->add_option("--in", kde_in, "sample file")->required();
  kde->add_option("--grid", kde_grid, "grid points over the sample range padded by 10%");
  kde->add_option("--out", kde_out, "output CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one model");
  train->require_subcommand(1);
  std::string train_config, train_data = "unimodal", train_out;
  std::uint64_t train_seed = 0;
  std::vector<CLI::App*> trainers;
  for (const char* kind : {"wgan", "gf"}) {
    auto* t = train->add_subcommand(kind, std::string("Train a ") + (kind == std::string("wgan") ? "WGAN" : "Gaussianization flow"));
    t->add_option("--config", train_config, "config JSON (patch over defaults)");
    t->add_option("--data", train_data, "preset name or spec JSON file");
    t->add_option("--seed", train_seed, "RNG seed")->capture_default_str();
    t->add_option("--out", train_out, "output directory")->required();
    trainers.push_back(t);
  }

  // search
  auto* search = app.add_subcommand("search", "ASHA random search over WGAN configs");
  std::string search_space, search_data = "unimodal", search_out;
  std::size_t search_trials = 200;
  int search_workers = 1;
  std::uint64_t search_seed = 0;
  hypersearch::AshaSchedule schedule;
  std::size_t search_eval = 0;
  bool search_resume = false;
  search->add_option("--space", search_space, "search space JSON (defaults if omitted)");
  search->add_option("--data", search_data, "preset name or spec JSON file")->capture_default_str();
  search->add_option("--trials", search_trials, "number of trials")->capture_default_str();
  search->add_option("--workers", search_workers, "concurrent trials, capped by DENSBENCH_WORKERS")->capture_default_str();
  search->add_option("--seed", search_seed, "search seed")->capture_default_str();
  search->add_option("--min-budget", schedule.min_budget, "generator steps at the lowest rung")->capture_default_str();
  search->add_option("--max-budget", schedule.max_budget, "generator steps at the top rung")->capture_default_str();
  search->add_option("--eta", schedule.eta, "reduction factor")->capture_default_str();
  search->add_option("--eval-samples", search_eval, "override eval sample count");
  search->add_flag("--resume", search_resume, "continue the journal in --out");
  search->add_option("--out", search_out, "search directory")->capture_default_str();
  auto* top = search->add_subcommand("top", "Best configs of a search");
  std::string top_out;
  std::size_t top_k = 5;
  top->add_option("--out", top_out, "search directory")->required();
  top->add_option("--k", top_k, "number of configs")->capture_default_str();

  // run / export / diagnose
  auto* run = app.add_subcommand("run", "Run an experiment plan");
  std::string plan_path;
  run->add_option("--plan", plan_path, "plan JSON file")->required();
  auto* exp = app.add_subcommand("export", "Write density curves for trained records");
  std::string export_dir;
  std::size_t export_grid = 1000;
  exp->add_option("--records", export_dir, "directory searched for record.json files")->required();
  exp->add_option("--grid", export_grid, "grid points")->capture_default_str();
  auto* diag = app.add_subcommand("diagnose", "Compare critic and true W1 estimates");
  std::string diag_record;
  bool diag_json = false;
  diag->add_option("--record", diag_record, "record.json, or a directory to pool")->required();
  diag->add_flag("--json", diag_json, "print the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (data->parsed()) {
      synthdata::DatasetHandle handle(synthdata::load_spec(data_spec), data_seed);
      std::ostringstream out;
      out << std::setprecision(std::numeric_limits<double>::max_digits10);
      for (double x : handle.sample(data_n)) out << x << '\n';
      if (data_out.empty()) {
        std::cout << out.str();
      } else {
        write_text_file(data_out, out.str());
      }
    } else if (w1->parsed()) {
      std::cout << num(metrics::w1_direct(read_samples(w1_a), read_samples(w1_b))) << '\n';
    } else if (kde->parsed()) {
      const auto xs = read_samples(kde_in);
      if (xs.size() < 2) throw ValidationError("kde needs at least 2 samples");
      if (kde_grid < 2) throw ValidationError("kde grid needs at least 2 points");
      const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
      const double pad = 0.1 * (*hi - *lo);
      const auto grid = metrics::uniform_grid(*lo - pad, *hi + pad, kde_grid);
      harness::write_curve(kde_out, grid, harness::kde_curve(xs, grid));
      std::cout << "bandwidth " << num(metrics::kde_bandwidth(xs)) << '\n';
    } else if (train->parsed()) {
      const std::string kind = trainers[0]->parsed() ? "wgan" : "gf";
      const auto ds = dataset(train_data);
      const json patch = load_config(train_config);
      const harness::ModelEntry model{kind, kind, patch, {}};
      const std::size_t eval = patch.value("eval_samples", std::size_t{100000});
      const auto record = harness::run_cell(kind, harness::cell_config(model, ds, eval), ds.spec, train_seed, train_out);
      std::cout << (record.failed ? "FAILED: " + record.failure : "best W1 " + num(record.best_w1)) << '\n';
      return record.failed ? kRuntime : kOk;
    } else if (top->parsed()) {
      const auto results = hypersearch::load_results(top_out);
      for (std::size_t i = 0; i < std::min(top_k, results.size()); ++i) print_trial(results[i]);
    } else if (search->parsed()) {
      if (search_out.empty()) throw ValidationError("search needs --out");
      const auto ds = dataset(search_data);
      std::optional<std::size_t> eval;
      if (search_eval > 0) eval = search_eval;
      const auto objective = harness::search_objective(ds.spec, fs::path(search_out) / "trials", search_seed, eval);
      std::vector<hypersearch::TrialResult> results;
      if (search_resume) {
        results = hypersearch::resume(search_out, objective, search_workers);
      } else {
        if (fs::exists(fs::path(search_out) / hypersearch::kJournalName)) {
          throw ValidationError("journal exists in '" + search_out + "'; pass --resume to continue it");
        }
        hypersearch::SearchSpace space = search_space.empty() ? hypersearch::SearchSpace::defaults()
                                                              : read_json_file(search_space).get<hypersearch::SearchSpace>();
        hypersearch::SearchOptions options;
        options.trials = search_trials;
        options.workers = search_workers;
        options.seed = search_seed;
        options.dir = search_out;
        results = hypersearch::asha_run(space, schedule, options, objective);
      }
      for (std::size_t i = 0; i < std::min<std::size_t>(5, results.size()); ++i) print_trial(results[i]);
      const bool all_failed = std::all_of(results.begin(), results.end(), [](const auto& t) { return t.failed; });
      return all_failed ? kRuntime : kOk;
    } else if (run->parsed()) {
      const auto summary = harness::run(harness::load_plan(plan_path));
      std::cout << summary.text();
      return summary.any_failed() ? kRuntime : kOk;
    } else if (exp->parsed()) {
      for (const auto& p : harness::export_density_curves(export_dir, export_grid)) std::cout << p.string() << '\n';
    } else if (diag->parsed()) {
      std::vector<TrialRecord> records;
      if (fs::is_directory(diag_record)) {
        for (auto& [path, r] : harness::find_records(diag_record)) {
          if (r.model == "wgan") records.push_back(std::move(r));
        }
      } else {
        records.push_back(read_json_file(diag_record).get<TrialRecord>());
      }
      const auto report = harness::diagnose_critic(records);
      if (diag_json) {
        std::cout << report.to_json().dump(2) << '\n';
      } else {
        std::cout << report.text();
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "densbench: " << e.what() << '\n';
    return kInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "densbench: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "densbench: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
