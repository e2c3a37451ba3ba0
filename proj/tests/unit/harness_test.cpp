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
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <unistd.h>

#include "densbench/error.hpp"
#include "densbench/harness.hpp"
#include "densbench/json_util.hpp"
#include "densbench/metrics.hpp"

namespace densbench::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("densbench_h_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

json small_gf() {
  return {{"layers", 2}, {"components", 8}, {"steps", 30}, {"eval_every", 15}, {"batch_size", 128},
          {"pilot_samples", 2000}};
}

json small_wgan() {
  return {{"generator", {{"width", 8}}}, {"critic", {{"width", 8}}}, {"n_critic", 1},
          {"batch_size", 32}, {"total_generator_steps", 10}, {"eval_every", 5}};
}

json gf_plan(const fs::path& out) {
  return {{"datasets", {"unimodal"}},
          {"models", {{{"name", "gf"}, {"kind", "gf"}, {"config", small_gf()}}}},
          {"seeds", {1, 2, 3}},
          {"output", out.string()},
          {"eval_samples", 3000}};
}

TEST(Plan, ZeroModelsGivesEmptyTable) {
  const fs::path out = fresh_dir("empty");
  const auto plan = plan_from_json({{"datasets", {"unimodal"}}, {"models", json::array()}, {"output", out.string()}});
  const Summary s = run(plan);
  EXPECT_TRUE(s.cells.empty());
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_TRUE(fs::exists(out / "summary.txt"));
  fs::remove_all(out);
}

TEST(Plan, InvalidConfigRejectedBeforeTraining) {
  const fs::path out = fresh_dir("invalid");
  json j = gf_plan(out);
  j["models"].push_back({{"name", "bad"}, {"kind", "wgan"}, {"config", {{"n_critic", 0}}}});
  EXPECT_THROW(plan_from_json(j), ValidationError);
  j["models"][1] = {{"name", "missing"}, {"kind", "wgan"}, {"config", "/nonexistent/config.json"}};
  EXPECT_THROW(plan_from_json(j), ValidationError);
  j["models"][1] = {{"name", "odd"}, {"kind", "vae"}};
  EXPECT_THROW(plan_from_json(j), ValidationError);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Plan, ExtendsAndPerDatasetPatches) {
  const json j = {{"datasets", {"unimodal", "multimodal"}},
                  {"models",
                   {{{"name", "base"}, {"kind", "wgan"}, {"config", {{"n_critic", 3}, {"critic", {{"width", 32}}}}}},
                    {{"name", "dropout"},
                     {"extends", "base"},
                     {"config", {{"generator", {{"dropout", 0.1}}}}},
                     {"per_dataset", {{"multimodal", {{"n_critic", 7}}}}}}}}};
  const auto plan = plan_from_json(j);
  const json uni = cell_config(plan.models[1], plan.datasets[0], 100);
  const json multi = cell_config(plan.models[1], plan.datasets[1], 100);
  EXPECT_EQ(uni["n_critic"], 3);
  EXPECT_EQ(multi["n_critic"], 7);
  EXPECT_EQ(uni["critic"]["width"], 32);
  EXPECT_EQ(uni["generator"]["dropout"], 0.1);
  EXPECT_EQ(uni["eval_samples"], 100);
  EXPECT_EQ(cell_config(plan.models[0], plan.datasets[0], 100)["generator"]["dropout"], 0.0);
}

TEST(Plan, ExtendingEntryOverridesInheritedPerDatasetPatch) {
  const json j = {{"datasets", {"unimodal", "multimodal"}},
                  {"models",
                   {{{"name", "base"},
                     {"kind", "wgan"},
                     {"per_dataset", {{"multimodal", {{"prior", {{"family", "gaussian"}, {"dim", 4}}}}}}}},
                    {{"name", "uniform"}, {"extends", "base"}, {"config", {{"prior", {{"family", "uniform"}}}}}}}}};
  const auto plan = plan_from_json(j);
  const json multi = cell_config(plan.models[1], plan.datasets[1], 100);
  EXPECT_EQ(multi["prior"]["family"], "uniform");
  EXPECT_EQ(multi["prior"]["dim"], 4);
  EXPECT_EQ(cell_config(plan.models[1], plan.datasets[0], 100)["prior"]["family"], "uniform");
  EXPECT_EQ(cell_config(plan.models[0], plan.datasets[1], 100)["prior"]["family"], "gaussian");
}

TEST(Run, SummaryCellIsMedianOfRecords) {
  const fs::path out = fresh_dir("median");
  const Summary s = run(plan_from_json(gf_plan(out)));
  ASSERT_EQ(s.cells.size(), 1u);
  std::vector<double> best;
  for (const auto& [path, record] : find_records(out)) {
    EXPECT_EQ(record.model, "gf");
    EXPECT_TRUE(fs::exists(path.parent_path() / record.checkpoint_path));
    EXPECT_TRUE(fs::exists(path.parent_path() / record.density_path));
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : record.history) m = std::min(m, p.true_w1);
    EXPECT_EQ(record.best_w1, m);
    best.push_back(record.best_w1);
  }
  ASSERT_EQ(best.size(), 3u);
  std::sort(best.begin(), best.end());
  const auto& c = s.cell("gf", "unimodal");
  EXPECT_EQ(c.median(), best[1]);
  EXPECT_EQ(c.min(), best[0]);
  EXPECT_EQ(c.max(), best[2]);
  std::ifstream csv(out / "summary.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(row.substr(0, 13), "gf,unimodal,0");
  fs::remove_all(out);
}

TEST(Run, DeterministicRecordsModuloWallClock) {
  const fs::path a = fresh_dir("det_a");
  const fs::path b = fresh_dir("det_b");
  auto plan_for = [](const fs::path& out) {
    json j = gf_plan(out);
    j["datasets"].push_back("multimodal");
    j["seeds"] = {4};
    j["models"].push_back({{"name", "wgan"}, {"kind", "wgan"}, {"config", small_wgan()}});
    return plan_from_json(j);
  };
  run(plan_for(a));
  run(plan_for(b));
  const auto ra = find_records(a);
  const auto rb = find_records(b);
  ASSERT_EQ(ra.size(), 4u);
  ASSERT_EQ(rb.size(), 4u);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    json ja = ra[i].second, jb = rb[i].second;
    ja.erase("wall_clock_seconds");
    jb.erase("wall_clock_seconds");
    EXPECT_EQ(ja.dump(), jb.dump()) << ra[i].first;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Summary, FailedCellsAndMedian) {
  TrialRecord ok, bad;
  ok.best_w1 = 0.5;
  bad.failed = true;
  std::vector<CellResult> results = {{"m", "d", 0, {}, ok}, {"m", "d", 1, {}, bad}, {"n", "d", 0, {}, bad}};
  results[0].record.best_w1 = 0.5;
  CellResult more{"m", "d", 2, {}, ok};
  more.record.best_w1 = 0.1;
  results.push_back(more);
  const Summary s = summarize({"m", "n"}, {"d"}, results);
  EXPECT_DOUBLE_EQ(s.cell("m", "d").median(), 0.3);
  EXPECT_EQ(s.cell("m", "d").failed, 1u);
  EXPECT_TRUE(s.cell("n", "d").all_failed());
  EXPECT_TRUE(s.any_failed());
  EXPECT_NE(s.text().find("FAILED"), std::string::npos);
  EXPECT_NE(s.csv().find("n,d,FAILED,,,0,1"), std::string::npos);
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
}

TEST(Export, CurvesAndTruth) {
  const fs::path out = fresh_dir("export");
  json j = gf_plan(out);
  j["seeds"] = {7};
  run(plan_from_json(j));

  const auto two = export_density_curves(out, 2);
  const auto spec = synthdata::preset("unimodal");
  const auto [lo, hi] = synthdata::support(spec);
  for (const auto& p : two) {
    const auto [t, d] = read_curve(p);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_DOUBLE_EQ(t[0], lo - 0.1 * (hi - lo));
    EXPECT_DOUBLE_EQ(t[1], hi + 0.1 * (hi - lo));
  }

  const auto files = export_density_curves(out, 2001);
  ASSERT_EQ(files.size(), 2u);
  for (const auto& p : files) {
    const auto [t, d] = read_curve(p);
    ASSERT_EQ(t.size(), 2001u);
    for (std::size_t i = 1; i < t.size(); ++i) EXPECT_GT(t[i], t[i - 1]);
    EXPECT_NEAR(metrics::trapezoid(t, d), 1.0, 1e-2) << p;
    if (p.filename() == "truth_unimodal.csv") {
      const auto peak = std::max_element(d.begin(), d.end()) - d.begin();
      EXPECT_NEAR(t[peak], 5.0, 1e-9);
      EXPECT_NEAR(d[peak], synthdata::pdf(spec, 5.0), 1e-12);
    }
  }

  const auto records = find_records(out);
  fs::remove(records[0].first.parent_path() / records[0].second.checkpoint_path);
  try {
    export_density_curves(out, 10);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(records[0].first.string()), std::string::npos) << e.what();
  }
  fs::remove_all(out);
}

TrialRecord wgan_record(const std::vector<std::pair<double, double>>& points) {
  TrialRecord r;
  r.model = "wgan";
  std::int64_t step = 0;
  for (auto [t, c] : points) {
    EvalPoint p;
    p.step = step++;
    p.true_w1 = t;
    p.critic_w1 = c;
    r.add_eval(p);
  }
  return r;
}

TEST(Diagnose, AgreementGivesNoFlags) {
  const auto report = diagnose_critic(wgan_record({{0.3, 0.3}, {0.2, 0.2}, {0.1, 0.1}}));
  EXPECT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.flagged, 0u);
  EXPECT_DOUBLE_EQ(*report.median_ratio, 1.0);
}

TEST(Diagnose, FlagsNegativeAndSmallEstimates) {
  const auto report = diagnose_critic(wgan_record({{0.3, -0.02}, {0.2, 0.01}, {0.1, 0.05}, {0.4, 0.4}}));
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.rows[0].flags, std::vector<std::string>{kNegativeFlag});
  EXPECT_EQ(report.rows[0].sign, -1);
  EXPECT_EQ(report.rows[1].flags, std::vector<std::string>{kUnderFlag});
  EXPECT_TRUE(report.rows[2].flags.empty());
  EXPECT_EQ(report.flagged, 2u);
  // Ratios -0.0667, 0.05, 0.5, 1.0.
  EXPECT_DOUBLE_EQ(*report.median_ratio, (0.01 / 0.2 + 0.05 / 0.1) / 2);
  EXPECT_NE(report.text().find("negative critic estimate"), std::string::npos);
  EXPECT_EQ(report.to_json()["flagged"], 2);
}

TEST(Diagnose, EmptyHistoryAndWrongModel) {
  const auto report = diagnose_critic(wgan_record({}));
  EXPECT_TRUE(report.rows.empty());
  EXPECT_FALSE(report.median_ratio);
  TrialRecord gf;
  gf.model = "gf";
  EXPECT_THROW(diagnose_critic(gf), ValidationError);
}

TEST(Diagnose, PooledAcrossRecords) {
  const auto report = diagnose_critic(std::vector<TrialRecord>{wgan_record({{1, 2}}), wgan_record({{1, 4}, {1, 6}})});
  EXPECT_EQ(report.rows.size(), 3u);
  EXPECT_DOUBLE_EQ(*report.median_ratio, 4.0);
}

TEST(SearchObjective, WritesRecordsAndScoresBestW1) {
  const fs::path out = fresh_dir("objective");
  const auto objective = search_objective(synthdata::preset("unimodal"), out, 3, 2000);
  json config = small_wgan();
  const double score = objective(config, 6, 2, 1);
  const auto records = find_records(out);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].first.parent_path(), out / "trial_2" / "rung_1");
  EXPECT_EQ(records[0].second.best_w1, score);
  EXPECT_EQ(records[0].second.history.back().step, 6);
  EXPECT_FALSE(diagnose_critic(records[0].second).rows.empty());
  config["generator_optimizer"] = {{"lr", 1e200}};
  config["critic_optimizer"] = {{"lr", 1e200}};
  EXPECT_THROW(objective(config, 6, 3, 0), std::runtime_error);
  fs::remove_all(out);
}

}  // namespace
}  // namespace densbench::harness
