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

#include "densbench/hypersearch.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "densbench/error.hpp"
#include "densbench/json_util.hpp"
#include "densbench/wgan.hpp"

namespace densbench::hypersearch {

using nlohmann::json;

namespace {

constexpr const char* kCyclicPath = "cyclic_lr";

json::json_pointer pointer_of(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) p += "/" + part;
  return json::json_pointer(p);
}

json draw(const Distribution& d, Rng& rng) {
  return std::visit(
      [&rng](const auto& dist) -> json {
        using T = std::decay_t<decltype(dist)>;
        if constexpr (std::is_same_v<T, Choice>) {
          return dist.values[rng.below(dist.values.size())];
        } else if constexpr (std::is_same_v<T, LogUniform>) {
          return std::exp(rng.uniform(std::log(dist.lo), std::log(dist.hi)));
        } else if constexpr (std::is_same_v<T, Uniform>) {
          return rng.uniform(dist.lo, dist.hi);
        } else {
          const auto span = static_cast<std::uint64_t>(dist.hi - dist.lo) + 1;
          return dist.lo + static_cast<std::int64_t>(rng.below(span));
        }
      },
      d);
}

json distribution_to_json(const Distribution& d) {
  return std::visit(
      [](const auto& dist) -> json {
        using T = std::decay_t<decltype(dist)>;
        if constexpr (std::is_same_v<T, Choice>) return {{"choice", dist.values}};
        else if constexpr (std::is_same_v<T, LogUniform>) return {{"log_uniform", {dist.lo, dist.hi}}};
        else if constexpr (std::is_same_v<T, Uniform>) return {{"uniform", {dist.lo, dist.hi}}};
        else return {{"int_uniform", {dist.lo, dist.hi}}};
      },
      d);
}

Distribution distribution_from_json(const std::string& name, const json& j) {
  auto pair = [&](const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw ValidationError("dimension '" + name + "': " + key + " needs [lo, hi]");
    return v;
  };
  if (j.contains("choice")) {
    Choice c;
    for (const auto& v : j.at("choice")) c.values.push_back(v);
    return c;
  }
  if (j.contains("log_uniform")) {
    const auto v = pair("log_uniform");
    return LogUniform{v[0].get<double>(), v[1].get<double>()};
  }
  if (j.contains("uniform")) {
    const auto v = pair("uniform");
    return Uniform{v[0].get<double>(), v[1].get<double>()};
  }
  if (j.contains("int_uniform")) {
    const auto v = pair("int_uniform");
    return IntUniform{v[0].get<std::int64_t>(), v[1].get<std::int64_t>()};
  }
  throw ValidationError("dimension '" + name + "' has no distribution");
}

void enforce_constraints(json& config, const SearchSpace& space, bool cyclic) {
  if (cyclic) {
    for (const char* opt : {"generator_optimizer", "critic_optimizer"}) {
      const double lr = config[opt].value("lr", diffnet::AdamConfig{}.lr);
      config[opt]["cyclic"] = {{"base_lr", lr / 10.0}, {"max_lr", lr}, {"period", space.cyclic_period}};
    }
  }
  if (config.contains("lipschitz") && config["lipschitz"].value("kind", "") == "gradient_penalty" &&
      config.contains("critic")) {
    config["critic"]["batch_norm"] = false;
  }
}

}  // namespace

void SearchSpace::validate() const {
  if (!base.is_object()) throw ValidationError("search space base must be an object");
  if (cyclic_period < 1) throw ValidationError("search space cyclic_period must be >= 1");
  std::set<std::string> names;
  for (const auto& d : dimensions) {
    if (!names.insert(d.name).second) throw ValidationError("duplicate dimension '" + d.name + "'");
    if (d.paths.empty()) throw ValidationError("dimension '" + d.name + "' has no paths");
    std::visit(
        [&d](const auto& dist) {
          using T = std::decay_t<decltype(dist)>;
          if constexpr (std::is_same_v<T, Choice>) {
            if (dist.values.empty()) throw ValidationError("dimension '" + d.name + "': empty choice");
          } else if constexpr (std::is_same_v<T, LogUniform>) {
            if (!(dist.lo > 0.0 && dist.lo <= dist.hi))
              throw ValidationError("dimension '" + d.name + "': log_uniform needs 0 < lo <= hi");
          } else {
            if (!(dist.lo <= dist.hi)) throw ValidationError("dimension '" + d.name + "': lo > hi");
          }
        },
        d.distribution);
  }
}

SearchSpace SearchSpace::defaults() {
  SearchSpace s;
  s.base = {{"critic", {{"batch_norm", false}}}};
  auto add = [&s](std::string name, std::vector<std::string> paths, Distribution d) {
    s.dimensions.push_back({std::move(name), std::move(paths), std::move(d)});
  };
  const Choice activations{{"relu", "leaky_relu", "tanh"}};
  const Choice widths{{64, 128, 256, 512}};
  add("generator.activation", {"generator.activation"}, activations);
  add("critic.activation", {"critic.activation"}, activations);
  add("generator.width", {"generator.width"}, widths);
  add("critic.width", {"critic.width"}, widths);
  add("generator.depth", {"generator.depth"}, IntUniform{2, 5});
  add("critic.depth", {"critic.depth"}, IntUniform{2, 5});
  add("init", {"generator.init", "critic.init"}, Choice{{"xavier", "uniform"}});
  add("prior.family", {"prior.family"}, Choice{{"gaussian", "uniform"}});
  add("prior.dim", {"prior.dim"}, IntUniform{1, 16});
  add("lipschitz.kind", {"lipschitz.kind"}, Choice{{"spectral_norm", "gradient_penalty"}});
  add("lipschitz.lambda", {"lipschitz.lambda"}, LogUniform{0.1, 100.0});
  add("n_critic", {"n_critic"}, Choice{{1, 5, 25, 100}});
  add("lr", {"generator_optimizer.lr", "critic_optimizer.lr"}, LogUniform{1e-5, 1e-2});
  add("beta1", {"generator_optimizer.beta1", "critic_optimizer.beta1"}, Choice{{0.0, 0.5, 0.9}});
  add("beta2", {"generator_optimizer.beta2", "critic_optimizer.beta2"}, Choice{{0.9, 0.99, 0.999}});
  add("weight_decay", {"generator_optimizer.weight_decay", "critic_optimizer.weight_decay"},
      Choice{{0.0, 1e-5, 1e-4}});
  add("generator.dropout", {"generator.dropout"}, Choice{{0.0, 0.1, 0.2}});
  add("critic.dropout", {"critic.dropout"}, Choice{{0.0, 0.1, 0.2}});
  add("generator.batch_norm", {"generator.batch_norm"}, Choice{{false, true}});
  add("generator.residual", {"generator.residual"}, Choice{{false, true}});
  add("critic.residual", {"critic.residual"}, Choice{{false, true}});
  add(kCyclicPath, {kCyclicPath}, Choice{{false, true}});
  std::sort(s.dimensions.begin(), s.dimensions.end(),
            [](const Dimension& a, const Dimension& b) { return a.name < b.name; });
  return s;
}

void to_json(json& j, const SearchSpace& s) {
  json dims = json::object();
  for (const auto& d : s.dimensions) {
    json e = distribution_to_json(d.distribution);
    if (d.paths.size() != 1 || d.paths[0] != d.name) e["paths"] = d.paths;
    dims[d.name] = std::move(e);
  }
  j = {{"schema_version", kSchemaVersion}, {"base", s.base}, {"dimensions", dims}, {"cyclic_period", s.cyclic_period}};
}

void from_json(const json& j, SearchSpace& s) {
  if (!j.is_object()) throw ValidationError("search space must be a JSON object");
  s = SearchSpace{};
  s.base = j.value("base", json::object());
  s.cyclic_period = j.value("cyclic_period", s.cyclic_period);
  // Object keys come back sorted, which fixes the draw order.
  const json dims = j.value("dimensions", json::object());
  for (const auto& [name, e] : dims.items()) {
    Dimension d;
    d.name = name;
    if (e.contains("paths")) {
      d.paths = e.at("paths").get<std::vector<std::string>>();
    } else {
      d.paths = {name};
    }
    d.distribution = distribution_from_json(name, e);
    s.dimensions.push_back(std::move(d));
  }
  s.validate();
}

json sample_config(const SearchSpace& space, Rng& rng) {
  json config = space.base;
  bool cyclic = false;
  for (const auto& d : space.dimensions) {
    const json value = draw(d.distribution, rng);
    for (const auto& path : d.paths) {
      if (path == kCyclicPath) {
        cyclic = value.get<bool>();
      } else {
        config[pointer_of(path)] = value;
      }
    }
  }
  enforce_constraints(config, space, cyclic);
  // Parsing validates every field the space may have touched.
  config.get<wgan::WganConfig>().validate();
  return config;
}

json trial_config(const SearchSpace& space, std::uint64_t seed, std::size_t trial) {
  Rng rng(mix_seed(seed, trial));
  return sample_config(space, rng);
}

void AshaSchedule::validate() const {
  if (min_budget < 1) throw ValidationError("asha: min_budget must be >= 1");
  if (max_budget < min_budget) throw ValidationError("asha: max_budget must be >= min_budget");
  if (eta < 2) throw ValidationError("asha: eta must be >= 2");
}

std::vector<std::int64_t> AshaSchedule::rungs() const {
  validate();
  std::vector<std::int64_t> out;
  std::int64_t b = min_budget;
  while (b < max_budget) {
    out.push_back(b);
    if (b > max_budget / eta) break;
    b *= eta;
  }
  out.push_back(max_budget);
  return out;
}

void to_json(json& j, const AshaSchedule& s) {
  j = {{"min_budget", s.min_budget}, {"max_budget", s.max_budget}, {"eta", s.eta}};
}

void from_json(const json& j, AshaSchedule& s) {
  const AshaSchedule d;
  s.min_budget = j.value("min_budget", d.min_budget);
  s.max_budget = j.value("max_budget", d.max_budget);
  s.eta = j.value("eta", d.eta);
  s.validate();
}

int effective_workers(int requested) {
  int n = std::max(1, requested);
  if (const char* env = std::getenv("DENSBENCH_WORKERS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) n = std::min<long>(n, cap);
  }
  return n;
}

namespace {

struct Job {
  std::size_t trial = 0;
  int rung = 0;
};

class Scheduler {
 public:
  Scheduler(SearchSpace space, AshaSchedule schedule, SearchOptions options)
      : space_(std::move(space)), schedule_(schedule), options_(std::move(options)), budgets_(schedule_.rungs()) {
    boards_.resize(budgets_.size());
    promoted_.resize(budgets_.size());
    running_.assign(budgets_.size(), 0);
  }

  static json header(const SearchSpace& space, const AshaSchedule& schedule, const SearchOptions& options) {
    return {{"event", "search"},
            {"schema_version", kSchemaVersion},
            {"space", space},
            {"schedule", schedule},
            {"trials", options.trials},
            {"workers", options.workers},
            {"seed", options.seed}};
  }

  void open_journal(bool fresh) {
    if (options_.dir.empty()) return;
    std::filesystem::create_directories(options_.dir);
    const auto path = options_.dir / kJournalName;
    journal_.open(path, fresh ? std::ios::out | std::ios::trunc : std::ios::out | std::ios::app);
    if (!journal_) throw std::runtime_error("cannot open journal " + path.string());
    if (fresh) log(header(space_, schedule_, options_));
  }

  // Journal replay; `line` is 1-based and only used for error messages.
  void replay(const json& e, std::size_t line) {
    const std::string event = e.at("event").get<std::string>();
    if (event == "sampled") {
      const auto id = e.at("trial").get<std::size_t>();
      if (id != trials_.size()) throw std::out_of_range("trial ids out of order");
      TrialResult t;
      t.trial = id;
      t.config = e.at("config");
      trials_.push_back(std::move(t));
    } else if (event == "started") {
      const Job j = job_of(e);
      started_.push_back(j);
    } else if (event == "scored" || event == "failed") {
      const Job j = job_of(e);
      auto it = std::find_if(started_.begin(), started_.end(),
                             [&](const Job& s) { return s.trial == j.trial && s.rung == j.rung; });
      if (it == started_.end()) throw std::out_of_range("result without a started job");
      started_.erase(it);
      if (event == "scored") {
        record_score(j, e.at("score").get<double>());
      } else {
        record_failure(j, e.at("error").get<std::string>());
      }
    } else if (event == "promoted") {
      const auto id = e.at("trial").get<std::size_t>();
      const int from = e.at("from_rung").get<int>();
      check_rung(from + 1);
      if (id >= trials_.size()) throw std::out_of_range("unknown trial");
      promoted_[from].insert(id);
    } else if (event == "search") {
      throw std::out_of_range("second header at line " + std::to_string(line));
    } else {
      throw std::out_of_range("unknown event '" + event + "'");
    }
  }

  void finish_replay() {
    pending_.assign(started_.begin(), started_.end());
    started_.clear();
  }

  void run(const Objective& objective) {
    const int workers = effective_workers(options_.workers);
    if (workers == 1) {
      worker(objective);
    } else {
      std::vector<std::thread> threads;
      for (int w = 0; w < workers; ++w) threads.emplace_back([this, &objective] { worker(objective); });
      for (auto& t : threads) t.join();
    }
    if (error_) std::rethrow_exception(error_);
  }

  std::vector<TrialResult> ranked() const {
    std::vector<TrialResult> out = trials_;
    std::stable_sort(out.begin(), out.end(), [](const TrialResult& a, const TrialResult& b) {
      if (a.rung_reached() != b.rung_reached()) return a.rung_reached() > b.rung_reached();
      if (a.final_score() != b.final_score()) return a.final_score() < b.final_score();
      return a.trial < b.trial;
    });
    return out;
  }

  const SearchOptions& options() const { return options_; }

 private:
  enum class Claim { kJob, kWait, kDone };

  Job job_of(const json& e) const {
    Job j{e.at("trial").get<std::size_t>(), e.at("rung").get<int>()};
    check_rung(j.rung);
    if (j.trial >= trials_.size()) throw std::out_of_range("unknown trial");
    if (e.at("budget").get<std::int64_t>() != budgets_[j.rung]) throw std::out_of_range("budget does not match rung");
    return j;
  }

  void check_rung(int r) const {
    if (r < 0 || r >= static_cast<int>(budgets_.size())) throw std::out_of_range("rung out of range");
  }

  void log(const json& e) {
    if (!journal_.is_open()) return;
    journal_ << e.dump() << '\n';
    journal_.flush();
    if (!journal_) throw std::runtime_error("journal write failed");
  }

  void record_score(const Job& j, double score) {
    boards_[j.rung].push_back({score, j.trial});
    trials_[j.trial].rungs.push_back({j.rung, budgets_[j.rung], score});
  }

  void record_failure(const Job& j, const std::string& what) {
    const double inf = std::numeric_limits<double>::infinity();
    boards_[j.rung].push_back({inf, j.trial});
    auto& t = trials_[j.trial];
    t.rungs.push_back({j.rung, budgets_[j.rung], inf});
    t.failed = true;
    t.failure = what;
  }

  // Best trial at rung r that may move up now, if any.
  std::optional<std::size_t> promotable(std::size_t r, bool closed) const {
    auto board = boards_[r];
    std::sort(board.begin(), board.end());
    std::size_t quota = board.size() / static_cast<std::size_t>(schedule_.eta);
    if (closed) quota = std::max<std::size_t>(quota, 1);
    quota = std::min(quota, board.size());
    for (std::size_t k = 0; k < quota; ++k) {
      const std::size_t id = board[k].second;
      if (!trials_[id].failed && promoted_[r].count(id) == 0) return id;
    }
    return std::nullopt;
  }

  Claim claim(Job& out) {
    if (!pending_.empty()) {
      out = pending_.front();
      pending_.pop_front();
      ++running_[out.rung];
      return Claim::kJob;
    }
    const std::size_t top = budgets_.size() - 1;
    // A rung is closed once nothing can still arrive there.
    std::vector<bool> closed(budgets_.size(), false);
    std::vector<std::optional<std::size_t>> best(budgets_.size());
    bool below_closed = trials_.size() >= options_.trials;
    for (std::size_t r = 0; r < top; ++r) {
      closed[r] = below_closed && running_[r] == 0;
      best[r] = promotable(r, closed[r]);
      below_closed = closed[r] && !best[r];
    }
    for (std::size_t r = top; r-- > 0;) {
      if (!best[r]) continue;
      const std::size_t id = *best[r];
      promoted_[r].insert(id);
      out = {id, static_cast<int>(r + 1)};
      log({{"event", "promoted"}, {"trial", id}, {"from_rung", r}, {"to_rung", r + 1}});
      start(out);
      return Claim::kJob;
    }
    if (trials_.size() < options_.trials) {
      TrialResult t;
      t.trial = trials_.size();
      t.config = trial_config(space_, options_.seed, t.trial);
      log({{"event", "sampled"}, {"trial", t.trial}, {"config", t.config}});
      out = {t.trial, 0};
      trials_.push_back(std::move(t));
      start(out);
      return Claim::kJob;
    }
    for (int n : running_) {
      if (n > 0) return Claim::kWait;
    }
    return Claim::kDone;
  }

  void start(const Job& j) {
    ++running_[j.rung];
    log({{"event", "started"}, {"trial", j.trial}, {"rung", j.rung}, {"budget", budgets_[j.rung]}});
  }

  void worker(const Objective& objective) {
    std::unique_lock lock(mutex_);
    while (true) {
      if (error_) return;
      Job job;
      Claim c;
      try {
        c = claim(job);
      } catch (...) {
        fail_search(std::current_exception());
        return;
      }
      if (c == Claim::kDone) {
        cv_.notify_all();
        return;
      }
      if (c == Claim::kWait) {
        cv_.wait(lock);
        continue;
      }
      const json config = trials_[job.trial].config;
      const std::int64_t budget = budgets_[job.rung];
      lock.unlock();
      double score = 0.0;
      std::string failure;
      bool ok = true;
      try {
        score = objective(config, budget, job.trial, job.rung);
        if (!std::isfinite(score)) {
          ok = false;
          failure = "non-finite score";
        }
      } catch (const StopSearch&) {
        lock.lock();
        fail_search(std::current_exception());
        return;
      } catch (const std::exception& e) {
        ok = false;
        failure = e.what();
      } catch (...) {
        ok = false;
        failure = "unknown error";
      }
      lock.lock();
      try {
        --running_[job.rung];
        if (ok) {
          record_score(job, score);
          log({{"event", "scored"}, {"trial", job.trial}, {"rung", job.rung}, {"budget", budget}, {"score", score}});
        } else {
          record_failure(job, failure);
          log({{"event", "failed"}, {"trial", job.trial}, {"rung", job.rung}, {"budget", budget}, {"error", failure}});
        }
      } catch (...) {
        fail_search(std::current_exception());
        return;
      }
      cv_.notify_all();
    }
  }

  void fail_search(std::exception_ptr e) {
    if (!error_) error_ = e;
    cv_.notify_all();
  }

  SearchSpace space_;
  AshaSchedule schedule_;
  SearchOptions options_;
  std::vector<std::int64_t> budgets_;

  std::vector<TrialResult> trials_;
  std::vector<std::vector<std::pair<double, std::size_t>>> boards_;
  std::vector<std::set<std::size_t>> promoted_;
  std::vector<int> running_;
  std::vector<Job> started_;
  std::deque<Job> pending_;

  std::ofstream journal_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::exception_ptr error_;
};

std::unique_ptr<Scheduler> load(const std::filesystem::path& dir, int workers) {
  const auto path = dir / kJournalName;
  std::ifstream in(path);
  if (!in) throw ValidationError("no search journal at " + path.string());
  std::unique_ptr<Scheduler> s;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    try {
      const json e = json::parse(text);
      if (!s) {
        if (e.at("event").get<std::string>() != "search") throw std::out_of_range("missing search header");
        SearchOptions o;
        o.trials = e.at("trials").get<std::size_t>();
        o.workers = workers > 0 ? workers : e.at("workers").get<int>();
        o.seed = e.at("seed").get<std::uint64_t>();
        o.dir = dir;
        s = std::make_unique<Scheduler>(e.at("space").get<SearchSpace>(), e.at("schedule").get<AshaSchedule>(), o);
      } else {
        s->replay(e, line);
      }
    } catch (const std::exception& err) {
      throw ValidationError("corrupt journal entry at line " + std::to_string(line) + ": " + err.what() +
                            "\n  " + text);
    }
  }
  if (!s) throw ValidationError("empty search journal " + path.string());
  s->finish_replay();
  return s;
}

}  // namespace

std::vector<TrialResult> asha_run(const SearchSpace& space, const AshaSchedule& schedule,
                                  const SearchOptions& options, const Objective& objective) {
  space.validate();
  schedule.validate();
  if (options.trials < 1) throw ValidationError("asha: trial count must be >= 1");
  Scheduler s(space, schedule, options);
  s.open_journal(true);
  s.run(objective);
  return s.ranked();
}

std::vector<TrialResult> resume(const std::filesystem::path& dir, const Objective& objective, int workers) {
  auto s = load(dir, workers);
  s->open_journal(false);
  s->run(objective);
  return s->ranked();
}

std::vector<TrialResult> load_results(const std::filesystem::path& dir) { return load(dir, 0)->ranked(); }

}  // namespace densbench::hypersearch
