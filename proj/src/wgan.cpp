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

#include "densbench/wgan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "densbench/error.hpp"
#include "densbench/json_util.hpp"
#include "densbench/metrics.hpp"

namespace densbench::wgan {

using diffnet::Mode;
using diffnet::NetGradients;
using diffnet::Tape;
using diffnet::Var;

namespace {

Matrix column(const std::vector<double>& xs, const Standardizer& st) {
  Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = (xs[i] - st.shift) / st.scale;
  return m;
}

void check_finite(double v, std::int64_t step, const char* what) {
  if (!std::isfinite(v)) throw DivergenceError(step, std::string("divergence detected: non-finite ") + what);
}

PriorFamily prior_from_string(const std::string& s) {
  if (s == "gaussian") return PriorFamily::kGaussian;
  if (s == "uniform") return PriorFamily::kUniform;
  throw ValidationError("unknown prior family '" + s + "'");
}

LipschitzKind lipschitz_from_string(const std::string& s) {
  if (s == "spectral_norm") return LipschitzKind::kSpectralNorm;
  if (s == "gradient_penalty") return LipschitzKind::kGradientPenalty;
  throw ValidationError("unknown lipschitz kind '" + s + "'");
}

diffnet::NetShape shape_of(const NetConfig& c, int input_dim, bool spectral) {
  diffnet::NetShape s;
  s.input_dim = input_dim;
  s.width = c.width;
  s.depth = c.depth;
  s.output_dim = 1;
  s.activation = c.activation;
  s.residual = c.residual;
  s.dropout_rate = c.dropout;
  s.batch_norm = c.batch_norm;
  s.spectral_norm = spectral;
  return s;
}

}  // namespace

std::string to_string(PriorFamily f) { return f == PriorFamily::kGaussian ? "gaussian" : "uniform"; }

std::string to_string(LipschitzKind k) {
  return k == LipschitzKind::kSpectralNorm ? "spectral_norm" : "gradient_penalty";
}

diffnet::AdamConfig WganConfig::default_optimizer() {
  diffnet::AdamConfig c;
  c.lr = 1e-3;
  c.beta1 = 0.5;
  c.beta2 = 0.9;
  return c;
}

void WganConfig::validate() const {
  if (prior.dim < 1) throw ValidationError("wgan config: prior dim must be >= 1");
  if (n_critic < 1) throw ValidationError("wgan config: n_critic must be >= 1");
  if (batch_size < 1) throw ValidationError("wgan config: batch_size must be >= 1");
  if (total_generator_steps < 0) throw ValidationError("wgan config: total_generator_steps must be >= 0");
  if (eval_every < 1) throw ValidationError("wgan config: eval_every must be >= 1");
  if (eval_samples < 2) throw ValidationError("wgan config: eval_samples must be >= 2");
  if (lipschitz.kind == LipschitzKind::kGradientPenalty) {
    if (!(lipschitz.lambda > 0.0)) throw ValidationError("wgan config: gradient penalty lambda must be > 0");
    if (critic.batch_norm) throw ValidationError("wgan config: gradient penalty cannot be combined with critic batch_norm");
  }
  generator_shape().validate();
  critic_shape().validate();
  generator_optimizer.validate();
  critic_optimizer.validate();
}

diffnet::NetShape WganConfig::generator_shape() const { return shape_of(generator, prior.dim, false); }

diffnet::NetShape WganConfig::critic_shape() const {
  return shape_of(critic, 1, lipschitz.kind == LipschitzKind::kSpectralNorm);
}

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"width", c.width},
       {"depth", c.depth},
       {"activation", diffnet::to_string(c.activation)},
       {"init", diffnet::to_string(c.init)},
       {"residual", c.residual},
       {"dropout", c.dropout},
       {"batch_norm", c.batch_norm}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  const NetConfig d;
  c.width = j.value("width", d.width);
  c.depth = j.value("depth", d.depth);
  c.activation = diffnet::activation_from_string(j.value("activation", diffnet::to_string(d.activation)));
  c.init = diffnet::init_scheme_from_string(j.value("init", diffnet::to_string(d.init)));
  c.residual = j.value("residual", d.residual);
  c.dropout = j.value("dropout", d.dropout);
  c.batch_norm = j.value("batch_norm", d.batch_norm);
}

void to_json(nlohmann::json& j, const WganConfig& c) {
  j = {{"prior", {{"family", to_string(c.prior.family)}, {"dim", c.prior.dim}}},
       {"generator", c.generator},
       {"critic", c.critic},
       {"lipschitz", {{"kind", to_string(c.lipschitz.kind)}, {"lambda", c.lipschitz.lambda}}},
       {"n_critic", c.n_critic},
       {"batch_size", c.batch_size},
       {"generator_optimizer", c.generator_optimizer},
       {"critic_optimizer", c.critic_optimizer},
       {"total_generator_steps", c.total_generator_steps},
       {"eval_every", c.eval_every},
       {"eval_samples", c.eval_samples},
       {"standardize", c.standardize}};
}

void from_json(const nlohmann::json& j, WganConfig& c) {
  if (!j.is_object()) throw ValidationError("wgan config must be a JSON object");
  const WganConfig d;
  c = d;
  if (j.contains("prior")) {
    const auto& p = j["prior"];
    c.prior.family = prior_from_string(p.value("family", to_string(d.prior.family)));
    c.prior.dim = p.value("dim", d.prior.dim);
  }
  if (j.contains("generator")) c.generator = j["generator"].get<NetConfig>();
  if (j.contains("critic")) c.critic = j["critic"].get<NetConfig>();
  if (j.contains("lipschitz")) {
    const auto& l = j["lipschitz"];
    c.lipschitz.kind = lipschitz_from_string(l.value("kind", to_string(d.lipschitz.kind)));
    c.lipschitz.lambda = l.value("lambda", d.lipschitz.lambda);
  }
  c.n_critic = j.value("n_critic", d.n_critic);
  c.batch_size = j.value("batch_size", d.batch_size);
  if (j.contains("generator_optimizer")) c.generator_optimizer = j["generator_optimizer"].get<diffnet::AdamConfig>();
  if (j.contains("critic_optimizer")) c.critic_optimizer = j["critic_optimizer"].get<diffnet::AdamConfig>();
  c.total_generator_steps = j.value("total_generator_steps", d.total_generator_steps);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_samples = j.value("eval_samples", d.eval_samples);
  c.standardize = j.value("standardize", d.standardize);
  c.validate();
}

Matrix WganModel::draw_prior(std::size_t n, Rng& rng) const {
  Matrix z(static_cast<Eigen::Index>(n), prior.dim);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      z(r, c) = prior.family == PriorFamily::kGaussian ? rng.normal() : rng.uniform(-1.0, 1.0);
    }
  }
  return z;
}

std::vector<double> WganModel::sample(std::size_t n, Rng& rng) const {
  const Matrix out = generator.predict(draw_prior(n, rng));
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = standardizer.shift + standardizer.scale * out(static_cast<Eigen::Index>(i), 0);
  }
  return xs;
}

std::vector<double> WganModel::critic_values(const std::vector<double>& xs) const {
  const Matrix out = critic.predict(column(xs, standardizer));
  std::vector<double> cs(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) cs[i] = standardizer.scale * out(static_cast<Eigen::Index>(i), 0);
  return cs;
}

WganState WganState::create(const WganConfig& config, const synthdata::MixtureSpec& spec, std::uint64_t seed) {
  config.validate();
  WganState s;
  s.model.prior = config.prior;
  if (config.standardize) s.model.standardizer = {synthdata::mean(spec), synthdata::stddev(spec)};
  s.model.generator = DenseNet(config.generator_shape(), config.generator.init, mix_seed(seed, 6));
  s.model.critic = DenseNet(config.critic_shape(), config.critic.init, mix_seed(seed, 7));
  s.generator_optimizer = diffnet::AdamState(config.generator_optimizer);
  s.critic_optimizer = diffnet::AdamState(config.critic_optimizer);
  s.noise = Rng(mix_seed(seed, 5));
  return s;
}

CriticObjective critic_objective(Tape& tape, DenseNet& critic, const Matrix& real, const Matrix& fake,
                                 const Lipschitz& lipschitz, const Matrix& eps, NetGradients* grads) {
  if (real.rows() == 0 || real.rows() != fake.rows()) throw ValidationError("critic batches must be nonempty and equal");
  CriticObjective out;
  Var c_real = critic.forward(tape, tape.constant(real), Mode::kTrain, grads);
  Var c_fake = critic.forward(tape, tape.constant(fake), Mode::kTrain, grads);
  Var wass = tape.sub(tape.mean(c_fake), tape.mean(c_real));
  out.wasserstein = tape.value(wass)(0, 0);
  out.loss = wass;
  if (lipschitz.kind == LipschitzKind::kGradientPenalty) {
    Matrix hat = eps.cwiseProduct(real) + (1.0 - eps.array()).matrix().cwiseProduct(fake);
    auto tangent = critic.forward_with_input_gradient(tape, tape.constant(std::move(hat)), Mode::kTrain, grads);
    Var sq = tape.square(tangent.input_gradient[0]);
    for (std::size_t k = 1; k < tangent.input_gradient.size(); ++k) {
      sq = tape.add(sq, tape.square(tangent.input_gradient[k]));
    }
    Var norm = tape.sqrt(tape.sum_cols(sq));
    Var penalty = tape.scale(tape.mean(tape.square(tape.add_scalar(norm, -1.0))), lipschitz.lambda);
    out.penalty = tape.value(penalty)(0, 0);
    out.loss = tape.add(wass, penalty);
  }
  return out;
}

double critic_update(WganState& state, const std::vector<double>& real, const WganConfig& config) {
  if (real.empty()) throw ValidationError("critic_update: empty real batch");
  WganModel& m = state.model;
  const auto n = real.size();
  const Matrix z = m.draw_prior(n, state.noise);
  Matrix fake;
  {
    Tape gen_tape;
    fake = gen_tape.value(m.generator.forward(gen_tape, gen_tape.constant(z), Mode::kTrain, nullptr));
  }
  Matrix eps(static_cast<Eigen::Index>(n), 1);
  if (config.lipschitz.kind == LipschitzKind::kGradientPenalty) {
    for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, 0) = state.noise.uniform();
  }
  if (config.lipschitz.kind == LipschitzKind::kSpectralNorm) m.critic.power_iterate(1);

  Tape tape;
  NetGradients grads = m.critic.zero_gradients();
  const CriticObjective obj =
      critic_objective(tape, m.critic, column(real, m.standardizer), fake, config.lipschitz, eps, &grads);
  const double loss = tape.value(obj.loss)(0, 0);
  ++state.critic_step;
  check_finite(loss, state.generator_step + 1, "critic loss");
  tape.backward(obj.loss);
  state.critic_optimizer.update(m.critic.parameters(), grads.grads);
  return loss;
}

namespace {

Var generator_objective(WganState& state, Tape& tape, Mode mode, NetGradients* grads, std::size_t n) {
  WganModel& m = state.model;
  const Matrix z = m.draw_prior(n, state.noise);
  Var fake = m.generator.forward(tape, tape.constant(z), mode, grads);
  Var c = m.critic.forward(tape, fake, mode, nullptr);
  return tape.scale(tape.mean(c), -1.0);
}

}  // namespace

double generator_update(WganState& state, const WganConfig& config) {
  Tape tape;
  NetGradients grads = state.model.generator.zero_gradients();
  Var loss = generator_objective(state, tape, Mode::kTrain, &grads, static_cast<std::size_t>(config.batch_size));
  const double value = tape.value(loss)(0, 0);
  ++state.generator_step;
  check_finite(value, state.generator_step, "generator loss");
  tape.backward(loss);
  state.generator_optimizer.update(state.model.generator.parameters(), grads.grads);
  return value;
}

double generator_loss(WganState& state, const WganConfig& config, Mode mode) {
  Tape tape;
  return tape.value(generator_objective(state, tape, mode, nullptr, static_cast<std::size_t>(config.batch_size)))(0, 0);
}

double critic_max_singular_value(const DenseNet& critic) {
  double top = 0.0;
  for (std::size_t i = 0; i < critic.layers().size(); ++i) {
    top = std::max(top, Eigen::JacobiSVD<Matrix>(critic.effective_weight(i)).singularValues()(0));
  }
  return top;
}

WganResult train(const WganConfig& config, const synthdata::MixtureSpec& spec, std::uint64_t seed,
                 const TrainHooks& hooks) {
  config.validate();
  synthdata::validate(spec);
  const auto start = std::chrono::steady_clock::now();
  WganResult result;
  WganState state = WganState::create(config, spec, seed);
  synthdata::DatasetHandle data(spec, mix_seed(seed, 1));
  TrialRecord& record = result.record;
  record.model = "wgan";
  record.config = config;
  record.dataset = spec;
  record.seed = seed;
  result.best = state.model;

  double last_critic_loss = std::numeric_limits<double>::quiet_NaN();
  double last_generator_loss = std::numeric_limits<double>::quiet_NaN();
  auto evaluate_at = [&](std::int64_t step) {
    WganModel& m = state.model;
    // Tighten the spectral estimates so the normalised weights are accurate.
    if (config.lipschitz.kind == LipschitzKind::kSpectralNorm) m.critic.power_iterate(20);
    Rng rng(mix_seed(mix_seed(seed, 2), static_cast<std::uint64_t>(step)));
    const auto fake = m.sample(config.eval_samples, rng);
    synthdata::DatasetHandle fresh_stream(spec, mix_seed(mix_seed(seed, 4), static_cast<std::uint64_t>(step)));
    const auto real = fresh_stream.sample(config.eval_samples);
    EvalPoint point;
    point.step = step;
    point.true_w1 = metrics::w1_direct(fake, real);
    point.critic_w1 = metrics::w1_critic_values(m.critic_values(real), m.critic_values(fake));
    point.loss = last_critic_loss;
    point.generator_loss = last_generator_loss;
    const double before = record.best_w1;
    record.add_eval(point);
    if (record.best_w1 != before) result.best = m;
    return point;
  };

  try {
    bool keep_going = true;
    const EvalPoint first = evaluate_at(0);
    if (hooks.on_eval) keep_going = hooks.on_eval(first);
    std::vector<double> real(static_cast<std::size_t>(config.batch_size));
    while (keep_going && state.generator_step < config.total_generator_steps) {
      for (int i = 0; i < config.n_critic; ++i) {
        data.sample_into(real);
        last_critic_loss = critic_update(state, real, config);
      }
      last_generator_loss = generator_update(state, config);
      const std::int64_t step = state.generator_step;
      if (step % config.eval_every == 0 || step == config.total_generator_steps) {
        const EvalPoint p = evaluate_at(step);
        if (hooks.on_eval) keep_going = hooks.on_eval(p);
      }
    }
  } catch (const DivergenceError& e) {
    record.failed = true;
    record.failure = e.what();
    record.failure_step = e.step();
  }
  result.final = std::move(state);
  record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

nlohmann::json checkpoint(const WganModel& model, const WganState* training) {
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"kind", "wgan"},
                      {"prior", {{"family", to_string(model.prior.family)}, {"dim", model.prior.dim}}},
                      {"standardizer", {{"shift", model.standardizer.shift}, {"scale", model.standardizer.scale}}},
                      {"generator", model.generator},
                      {"critic", model.critic}};
  if (training != nullptr) {
    nlohmann::json t = checkpoint(training->model);
    t.erase("schema_version");
    t.erase("kind");
    t["generator_optimizer"] = training->generator_optimizer;
    t["critic_optimizer"] = training->critic_optimizer;
    t["generator_step"] = training->generator_step;
    t["critic_step"] = training->critic_step;
    t["noise_rng"] = training->noise.state();
    j["training"] = std::move(t);
  }
  return j;
}

WganState state_from_checkpoint(const nlohmann::json& j) {
  if (!j.contains("training")) throw ValidationError("checkpoint has no training state");
  const auto& t = j.at("training");
  nlohmann::json model = t;
  model["kind"] = "wgan";
  WganState s;
  s.model = model_from_checkpoint(model);
  s.generator_optimizer = t.at("generator_optimizer").get<diffnet::AdamState>();
  s.critic_optimizer = t.at("critic_optimizer").get<diffnet::AdamState>();
  s.generator_step = t.at("generator_step").get<std::int64_t>();
  s.critic_step = t.at("critic_step").get<std::int64_t>();
  s.noise.set_state(t.at("noise_rng").get<std::string>());
  return s;
}

WganModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("kind", "") != "wgan") throw ValidationError("checkpoint is not a wgan model");
  WganModel m;
  m.prior.family = prior_from_string(j.at("prior").at("family").get<std::string>());
  m.prior.dim = j.at("prior").at("dim").get<int>();
  m.standardizer.shift = j.at("standardizer").at("shift").get<double>();
  m.standardizer.scale = j.at("standardizer").at("scale").get<double>();
  m.generator = j.at("generator").get<DenseNet>();
  m.critic = j.at("critic").get<DenseNet>();
  return m;
}

}  // namespace densbench::wgan
