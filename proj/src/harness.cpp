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

#include "densbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "densbench/error.hpp"
#include "densbench/gaussflow.hpp"
#include "densbench/json_util.hpp"
#include "densbench/metrics.hpp"
#include "densbench/wgan.hpp"

namespace densbench::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRecordFile = "record.json";
constexpr const char* kCheckpointFile = "checkpoint.json";
constexpr const char* kCurveFile = "density.csv";
constexpr std::size_t kTrainGrid = 1000;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string cell_dir_name(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string full(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}

std::uint64_t kde_stream(std::uint64_t seed) { return mix_seed(seed, 8); }

json model_defaults(const std::string& kind, const synthdata::MixtureSpec& spec) {
  if (kind == "wgan") return wgan::WganConfig{};
  if (kind == "gf") return gaussflow::GaussFlowConfig::defaults_for(spec);
  throw ValidationError("unknown model kind '" + kind + "'");
}

}  // namespace

DatasetEntry dataset_from_json(const json& j, const fs::path& base_dir) {
  DatasetEntry d;
  if (j.is_string()) {
    const auto ref = j.get<std::string>();
    if (ref == "unimodal" || ref == "multimodal") {
      d.spec = synthdata::preset(ref);
      d.name = ref;
    } else {
      const fs::path path = resolve(base_dir, ref);
      d.spec = read_json_file(path).get<synthdata::MixtureSpec>();
      d.name = path.stem().string();
    }
  } else if (j.is_object()) {
    json spec = j;
    d.name = spec.value("name", "");
    spec.erase("name");
    d.spec = spec.get<synthdata::MixtureSpec>();
    if (d.name.empty()) d.name = synthdata::spec_name(d.spec);
  } else {
    throw ValidationError("dataset entry must be a name, a path or an object");
  }
  synthdata::validate(d.spec);
  return d;
}

ExperimentPlan plan_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("plan must be a JSON object");
  ExperimentPlan plan;
  try {
    std::set<std::string> names;
    json datasets = j.contains("datasets") ? j.at("datasets") : json::array();
    if (j.contains("dataset")) datasets.push_back(j.at("dataset"));
    for (const auto& d : datasets) {
      plan.datasets.push_back(dataset_from_json(d, base_dir));
      if (!names.insert(plan.datasets.back().name).second)
        throw ValidationError("duplicate dataset '" + plan.datasets.back().name + "'");
    }
    names.clear();
    for (const auto& m : j.value("models", json::array())) {
      ModelEntry e;
      e.name = m.at("name").get<std::string>();
      if (!names.insert(e.name).second) throw ValidationError("duplicate model '" + e.name + "'");
      if (m.contains("extends")) {
        const auto parent = m.at("extends").get<std::string>();
        auto it = std::find_if(plan.models.begin(), plan.models.end(),
                               [&](const ModelEntry& x) { return x.name == parent; });
        if (it == plan.models.end()) throw ValidationError("model '" + e.name + "' extends unknown '" + parent + "'");
        e.kind = it->kind;
        e.config = it->config;
        e.per_dataset = it->per_dataset;
      }
      if (m.contains("kind")) e.kind = m.at("kind").get<std::string>();
      if (e.kind != "wgan" && e.kind != "gf") throw ValidationError("model '" + e.name + "': kind must be wgan or gf");
      json own = json::object();
      if (m.contains("search")) {
        if (e.kind != "wgan") throw ValidationError("model '" + e.name + "': search results are WGAN configs");
        const fs::path dir = resolve(base_dir, m.at("search").get<std::string>());
        const auto results = hypersearch::load_results(dir);
        if (results.empty() || results.front().failed)
          throw ValidationError("search '" + dir.string() + "' has no successful trial");
        own.merge_patch(results.front().config);
      }
      if (m.contains("config")) {
        const auto& c = m.at("config");
        own.merge_patch(c.is_string() ? read_json_file(resolve(base_dir, c.get<std::string>())) : c);
      }
      // The entry's own patch also overrides what it inherited per dataset.
      e.config.merge_patch(own);
      for (auto& [ds, patch] : e.per_dataset) patch.merge_patch(own);
      const json per_dataset = m.value("per_dataset", json::object());
      for (const auto& [ds, patch] : per_dataset.items()) {
        e.per_dataset[ds].merge_patch(patch.is_string() ? read_json_file(resolve(base_dir, patch.get<std::string>()))
                                                        : patch);
      }
      plan.models.push_back(std::move(e));
    }
    if (j.contains("seeds")) plan.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    plan.output = resolve(base_dir, j.value("output", std::string("results")));
    plan.eval_samples = j.value("eval_samples", plan.eval_samples);
    plan.workers = j.value("workers", plan.workers);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

ExperimentPlan load_plan(const fs::path& path) {
  return plan_from_json(read_json_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

json cell_config(const ModelEntry& model, const DatasetEntry& dataset, std::size_t eval_samples) {
  json c = model_defaults(model.kind, dataset.spec);
  c.merge_patch(model.config);
  if (auto it = model.per_dataset.find(dataset.name); it != model.per_dataset.end()) c.merge_patch(it->second);
  c["eval_samples"] = eval_samples;
  try {
    if (model.kind == "wgan") {
      const auto parsed = c.get<wgan::WganConfig>();
      parsed.validate();
      return parsed;
    }
    const auto parsed = c.get<gaussflow::GaussFlowConfig>();
    parsed.validate();
    return parsed;
  } catch (const ValidationError& e) {
    throw ValidationError("model '" + model.name + "' on '" + dataset.name + "': " + e.what());
  } catch (const json::exception& e) {
    throw ValidationError("model '" + model.name + "' on '" + dataset.name + "': " + e.what());
  }
}

void ExperimentPlan::validate() const {
  if (eval_samples < 2) throw ValidationError("plan: eval_samples must be >= 2");
  if (workers < 1) throw ValidationError("plan: workers must be >= 1");
  if (!models.empty() && datasets.empty()) throw ValidationError("plan: models given but no dataset");
  if (!models.empty() && seeds.empty()) throw ValidationError("plan: no seeds");
  std::set<std::string> names;
  for (const auto& d : datasets) names.insert(d.name);
  for (const auto& m : models) {
    for (const auto& [ds, patch] : m.per_dataset) {
      if (!names.count(ds)) throw ValidationError("model '" + m.name + "': per_dataset names unknown dataset '" + ds + "'");
    }
    for (const auto& d : datasets) cell_config(m, d, eval_samples);
  }
}

std::vector<double> density_grid(const synthdata::MixtureSpec& spec, std::size_t count) {
  if (count < 2) throw ValidationError("density grid needs at least 2 points");
  const auto [lo, hi] = synthdata::support(spec);
  const double pad = 0.1 * (hi - lo);
  return metrics::uniform_grid(lo - pad, hi + pad, count);
}

std::vector<double> kde_curve(const std::vector<double>& samples, const std::vector<double>& grid) {
  const double h = metrics::kde_bandwidth(samples);
  return metrics::kde_evaluate(samples, h, grid);
}

void write_curve(const fs::path& path, const std::vector<double>& grid, const std::vector<double>& density) {
  std::ostringstream out;
  out << "t,density\n";
  for (std::size_t i = 0; i < grid.size(); ++i) out << full(grid[i]) << ',' << full(density[i]) << '\n';
  write_text_file(path, out.str());
}

std::pair<std::vector<double>, std::vector<double>> read_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "t,density") throw ValidationError("'" + path.string() + "' is not a density curve");
  std::vector<double> t, d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError("bad curve row in '" + path.string() + "'");
    t.push_back(std::stod(line.substr(0, comma)));
    d.push_back(std::stod(line.substr(comma + 1)));
  }
  return {t, d};
}

std::vector<double> model_curve(const TrialRecord& record, const json& checkpoint, const std::vector<double>& grid,
                                std::size_t kde_samples) {
  if (record.model == "wgan") {
    const auto model = wgan::model_from_checkpoint(checkpoint);
    Rng rng(kde_stream(record.seed));
    return kde_curve(model.sample(kde_samples, rng), grid);
  }
  if (record.model == "gf") {
    const auto model = gaussflow::model_from_checkpoint(checkpoint);
    auto out = model.log_density(grid);
    for (double& v : out) v = std::exp(v);
    return out;
  }
  throw ValidationError("unknown record model '" + record.model + "'");
}

TrialRecord run_cell(const std::string& kind, const json& config, const synthdata::MixtureSpec& spec,
                     std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  TrialRecord record;
  json ckpt;
  if (kind == "wgan") {
    const auto c = config.get<wgan::WganConfig>();
    c.validate();
    auto r = wgan::train(c, spec, seed);
    record = std::move(r.record);
    ckpt = wgan::checkpoint(r.best, &r.final);
  } else if (kind == "gf") {
    const auto c = config.get<gaussflow::GaussFlowConfig>();
    c.validate();
    auto r = gaussflow::train(c, spec, seed);
    record = std::move(r.record);
    ckpt = gaussflow::checkpoint(r.best, r.optimizer);
  } else {
    throw ValidationError("unknown model kind '" + kind + "'");
  }
  write_json_file(dir / kCheckpointFile, ckpt);
  record.checkpoint_path = kCheckpointFile;
  try {
    const auto grid = density_grid(spec, kTrainGrid);
    const auto curve = model_curve(record, ckpt, grid);
    if (std::all_of(curve.begin(), curve.end(), [](double v) { return std::isfinite(v); })) {
      write_curve(dir / kCurveFile, grid, curve);
      record.density_path = kCurveFile;
    }
  } catch (const std::exception&) {
    // A diverged model may not produce a usable curve; the record says so.
  }
  write_json_file(dir / kRecordFile, record);
  return record;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double SummaryCell::median() const { return harness::median(best_w1); }
double SummaryCell::min() const {
  return all_failed() ? std::numeric_limits<double>::quiet_NaN() : *std::min_element(best_w1.begin(), best_w1.end());
}
double SummaryCell::max() const {
  return all_failed() ? std::numeric_limits<double>::quiet_NaN() : *std::max_element(best_w1.begin(), best_w1.end());
}

const SummaryCell& Summary::cell(const std::string& model, const std::string& dataset) const {
  for (const auto& c : cells) {
    if (c.model == model && c.dataset == dataset) return c;
  }
  throw std::out_of_range("no summary cell " + model + "/" + dataset);
}

bool Summary::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const SummaryCell& c) { return c.failed > 0; });
}

std::string Summary::csv() const {
  std::ostringstream out;
  out << "model,dataset,median_best_w1,min_best_w1,max_best_w1,seeds_ok,seeds_failed\n";
  for (const auto& c : cells) {
    out << c.model << ',' << c.dataset << ',';
    if (c.all_failed()) {
      out << "FAILED,,";
    } else {
      out << full(c.median()) << ',' << full(c.min()) << ',' << full(c.max());
    }
    out << ',' << c.best_w1.size() << ',' << c.failed << '\n';
  }
  return out.str();
}

std::string Summary::text() const {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"model"});
  for (const auto& d : datasets) rows[0].push_back(d);
  for (const auto& m : models) {
    std::vector<std::string> row{m};
    for (const auto& d : datasets) {
      const auto& c = cell(m, d);
      std::string s = c.all_failed() ? "FAILED" : fmt(c.median()) + " [" + fmt(c.min()) + ", " + fmt(c.max()) + "]";
      if (c.failed > 0 && !c.all_failed()) s += " (" + std::to_string(c.failed) + " failed)";
      row.push_back(s);
    }
    rows.push_back(row);
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line += r[i];
      if (i + 1 < r.size()) line += std::string(width[i] - r[i].size() + 2, ' ');
    }
    out << line << '\n';
  }
  return out.str();
}

Summary summarize(const std::vector<std::string>& models, const std::vector<std::string>& datasets,
                  const std::vector<CellResult>& results) {
  Summary s{models, datasets, {}};
  for (const auto& m : models) {
    for (const auto& d : datasets) {
      SummaryCell c{m, d, {}, 0};
      for (const auto& r : results) {
        if (r.model != m || r.dataset != d) continue;
        if (r.record.failed || !std::isfinite(r.record.best_w1)) {
          ++c.failed;
        } else {
          c.best_w1.push_back(r.record.best_w1);
        }
      }
      s.cells.push_back(std::move(c));
    }
  }
  return s;
}

Summary run(const ExperimentPlan& plan) {
  plan.validate();
  struct Cell {
    const ModelEntry* model;
    const DatasetEntry* dataset;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& d : plan.datasets) {
    for (const auto& m : plan.models) {
      for (auto seed : plan.seeds) cells.push_back({&m, &d, seed});
    }
  }
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      const Cell& c = cells[i];
      CellResult& r = results[i];
      r.model = c.model->name;
      r.dataset = c.dataset->name;
      r.seed = c.seed;
      r.dir = plan.output / cell_dir_name(r.dataset) / cell_dir_name(r.model) / ("seed_" + std::to_string(c.seed));
      try {
        r.record = run_cell(c.model->kind, cell_config(*c.model, *c.dataset, plan.eval_samples), c.dataset->spec,
                            c.seed, r.dir);
      } catch (const std::exception& e) {
        r.record.model = c.model->kind;
        r.record.seed = c.seed;
        r.record.failed = true;
        r.record.failure = e.what();
        try {
          write_json_file(r.dir / kRecordFile, r.record);
        } catch (const std::exception&) {
        }
      }
    }
  };
  const int workers = std::min<int>(hypersearch::effective_workers(plan.workers), std::max<int>(1, cells.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  std::vector<std::string> models, datasets;
  for (const auto& m : plan.models) models.push_back(m.name);
  if (!plan.models.empty()) {
    for (const auto& d : plan.datasets) datasets.push_back(d.name);
  }
  Summary s = summarize(models, datasets, results);
  write_text_file(plan.output / "summary.csv", s.csv());
  write_text_file(plan.output / "summary.txt", s.text());
  return s;
}

std::vector<std::pair<fs::path, TrialRecord>> find_records(const fs::path& root) {
  if (!fs::is_directory(root)) throw ValidationError("'" + root.string() + "' is not a directory");
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == kRecordFile) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<std::pair<fs::path, TrialRecord>> out;
  for (const auto& p : paths) {
    try {
      out.emplace_back(p, read_json_file(p).get<TrialRecord>());
    } catch (const json::exception& e) {
      throw ValidationError("record '" + p.string() + "': " + e.what());
    }
  }
  return out;
}

std::vector<fs::path> export_density_curves(const fs::path& records, std::size_t grid) {
  std::vector<fs::path> written;
  std::map<std::string, std::string> truths;  // spec document -> name
  std::set<std::string> used;
  for (const auto& [path, record] : find_records(records)) {
    if (record.checkpoint_path.empty()) throw ValidationError("record '" + path.string() + "' has no checkpoint");
    const fs::path ckpt = path.parent_path() / record.checkpoint_path;
    if (!fs::exists(ckpt)) {
      throw ValidationError("record '" + path.string() + "': missing checkpoint '" + ckpt.string() + "'");
    }
    const auto spec = record.dataset.get<synthdata::MixtureSpec>();
    const auto g = density_grid(spec, grid);
    const fs::path out = path.parent_path() / (record.density_path.empty() ? kCurveFile : record.density_path);
    write_curve(out, g, model_curve(record, read_json_file(ckpt), g));
    written.push_back(out);

    const std::string key = record.dataset.dump();
    if (!truths.count(key)) {
      std::string name = synthdata::spec_name(spec);
      for (int k = 2; used.count(name); ++k) name = synthdata::spec_name(spec) + "_" + std::to_string(k);
      used.insert(name);
      truths[key] = name;
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = synthdata::pdf(spec, g[i]);
      const fs::path t = records / ("truth_" + name + ".csv");
      write_curve(t, g, d);
      written.push_back(t);
    }
  }
  return written;
}

namespace {

void add_rows(const TrialRecord& record, CriticReport& report) {
  if (record.model != "wgan") throw ValidationError("critic diagnosis needs a WGAN record, got '" + record.model + "'");
  for (const auto& p : record.history) {
    if (!p.critic_w1) continue;
    CriticRow row;
    row.step = p.step;
    row.true_w1 = p.true_w1;
    row.critic_w1 = *p.critic_w1;
    row.ratio = p.true_w1 != 0.0 ? row.critic_w1 / p.true_w1 : std::numeric_limits<double>::quiet_NaN();
    row.sign = (row.critic_w1 > 0) - (row.critic_w1 < 0);
    if (row.critic_w1 < 0) {
      row.flags.push_back(kNegativeFlag);
    } else if (row.critic_w1 < 0.1 * p.true_w1) {
      row.flags.push_back(kUnderFlag);
    }
    if (!row.flags.empty()) ++report.flagged;
    report.rows.push_back(std::move(row));
  }
}

void finish(CriticReport& report) {
  std::vector<double> ratios;
  for (const auto& r : report.rows) {
    if (std::isfinite(r.ratio)) ratios.push_back(r.ratio);
  }
  if (!ratios.empty()) report.median_ratio = median(ratios);
}

}  // namespace

CriticReport diagnose_critic(const TrialRecord& record) { return diagnose_critic(std::vector<TrialRecord>{record}); }

CriticReport diagnose_critic(const std::vector<TrialRecord>& records) {
  CriticReport report;
  for (const auto& r : records) add_rows(r, report);
  finish(report);
  return report;
}

json CriticReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"step", r.step},
                      {"true_w1", number_to_json(r.true_w1)},
                      {"critic_w1", number_to_json(r.critic_w1)},
                      {"ratio", number_to_json(r.ratio)},
                      {"sign", r.sign},
                      {"flags", r.flags}});
  }
  return {{"schema_version", kSchemaVersion},
          {"eval_points", rows.size()},
          {"flagged", flagged},
          {"median_ratio", median_ratio ? number_to_json(*median_ratio) : json(nullptr)},
          {"rows", rows_j}};
}

std::string CriticReport::text() const {
  std::ostringstream out;
  out << "step,true_w1,critic_w1,ratio,sign,flags\n";
  for (const auto& r : rows) {
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
    out << r.step << ',' << fmt(r.true_w1, 6) << ',' << fmt(r.critic_w1, 6) << ',' << fmt(r.ratio, 6) << ','
        << r.sign << ',' << flags << '\n';
  }
  out << "eval points: " << rows.size() << ", flagged: " << flagged << ", median critic/true ratio: "
      << (median_ratio ? fmt(*median_ratio, 6) : std::string("n/a")) << '\n';
  return out.str();
}

hypersearch::Objective search_objective(const synthdata::MixtureSpec& spec, fs::path dir, std::uint64_t seed,
                                        std::optional<std::size_t> eval_samples) {
  return [spec, dir = std::move(dir), seed, eval_samples](const json& config, std::int64_t budget, std::size_t trial,
                                                          int rung) -> double {
    auto c = config.get<wgan::WganConfig>();
    c.total_generator_steps = budget;
    if (eval_samples) c.eval_samples = *eval_samples;
    c.validate();
    auto r = wgan::train(c, spec, mix_seed(seed, trial));
    if (!dir.empty()) {
      const fs::path cell = dir / ("trial_" + std::to_string(trial)) / ("rung_" + std::to_string(rung));
      write_json_file(cell / kCheckpointFile, wgan::checkpoint(r.best));
      r.record.checkpoint_path = kCheckpointFile;
      write_json_file(cell / kRecordFile, r.record);
    }
    if (r.record.failed) throw std::runtime_error(r.record.failure);
    return r.record.best_w1;
  };
}

}  // namespace densbench::harness
