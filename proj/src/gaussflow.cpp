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

#include "densbench/gaussflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "densbench/error.hpp"
#include "densbench/json_util.hpp"
#include "densbench/metrics.hpp"
#include "densbench/probit.hpp"

namespace densbench::gaussflow {

using diffnet::Tape;
using diffnet::Var;

namespace {

double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::fabs(u))); }

// Layer parameters unpacked for scalar evaluation.
struct Prepared {
  std::vector<double> log_pi, pi, mu, log_s, s;

  Prepared(const Matrix& w, const Matrix& m, const Matrix& ls) {
    const auto k = static_cast<std::size_t>(w.cols());
    const double wmax = w.maxCoeff();
    double z = 0.0;
    for (Eigen::Index i = 0; i < w.cols(); ++i) z += std::exp(w(0, i) - wmax);
    const double lse = wmax + std::log(z);
    log_pi.resize(k);
    pi.resize(k);
    mu.resize(k);
    log_s.resize(k);
    s.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      log_pi[i] = w(0, c) - lse;
      pi[i] = std::exp(log_pi[i]);
      mu[i] = m(0, c);
      log_s[i] = ls(0, c);
      s[i] = std::exp(ls(0, c));
    }
  }
  explicit Prepared(const GaussLayer& l) : Prepared(l.weights, l.means, l.log_scales) {}
  std::size_t size() const { return pi.size(); }
};

struct Scratch {
  std::vector<double> t, sig, sig_neg, r, qphi;
  void resize(std::size_t k) {
    t.resize(k);
    sig.resize(k);
    sig_neg.resize(k);
    r.resize(k);
    qphi.resize(k);
  }
};

struct Terms {
  double F = 0.0;  // sum pi * logistic(t)
  double S = 0.0;  // sum pi * logistic(-t), the upper tail
  double log_p = 0.0;
  double z = 0.0;
  double log_phi = 0.0;
  bool clamped = false;
  bool upper = false;  // z computed from S
};

// Fills w.t, w.sig, w.sig_neg and, when `full`, the responsibilities
// r_k = q_k / p and q_k / phi(z) used by the backward pass.
Terms evaluate(const Prepared& p, double x, Scratch& w, bool full = false) {
  const std::size_t k = p.size();
  w.resize(k);
  Terms out;
  double dens = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double t = (x - p.mu[i]) / p.s[i];
    const double e = std::exp(-std::fabs(t));
    const double inv = 1.0 / (1.0 + e);
    w.t[i] = t;
    w.sig[i] = t >= 0.0 ? inv : e * inv;
    w.sig_neg[i] = t >= 0.0 ? e * inv : inv;
    w.r[i] = p.pi[i] / p.s[i] * e * inv * inv;  // q_k
    out.F += p.pi[i] * w.sig[i];
    out.S += p.pi[i] * w.sig_neg[i];
    dens += w.r[i];
  }
  const bool underflow = !(dens > 1e-280);
  if (!underflow) {
    out.log_p = std::log(dens);
  } else {
    double lq_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const double l1 = std::log1p(std::exp(-std::fabs(w.t[i])));
      w.r[i] = p.log_pi[i] - p.log_s[i] - std::fabs(w.t[i]) - 2.0 * l1;  // log q_k
      lq_max = std::max(lq_max, w.r[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += std::exp(w.r[i] - lq_max);
    out.log_p = lq_max + std::log(acc);
  }
  if (out.F <= out.S) {
    double c = out.F;
    if (!(c >= kCdfClamp)) {
      c = kCdfClamp;
      out.clamped = true;
    }
    out.z = probit(c);
  } else {
    double c = out.S;
    if (!(c >= kCdfClamp)) {
      c = kCdfClamp;
      out.clamped = true;
    }
    out.z = -probit(c);
    out.upper = true;
  }
  out.log_phi = normal_log_pdf(out.z);
  if (full) {
    for (std::size_t i = 0; i < k; ++i) {
      const double lq = underflow ? w.r[i] : std::log(w.r[i]);
      w.qphi[i] = std::exp(lq - out.log_phi);
      w.r[i] = underflow ? std::exp(lq - out.log_p) : w.r[i] / dens;
    }
  }
  return out;
}

double invert_layer(const Prepared& p, double target, Scratch& w) {
  static const double z_max = -probit(kCdfClamp);
  target = std::clamp(target, -z_max, z_max);
  auto f = [&](double x) { return evaluate(p, x, w).z - target; };

  double center = 0.0, step = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    center += p.pi[i] * p.mu[i];
    step = std::max(step, p.s[i]);
  }
  step = std::max(step, 1e-6);
  double lo = center - step, hi = center + step;
  for (double d = step; f(lo) > 0.0;) {
    d *= 2.0;
    lo = center - d;
    if (lo < -1e6) throw std::runtime_error("inversion bracket failure");
  }
  for (double d = step; f(hi) < 0.0;) {
    d *= 2.0;
    hi = center + d;
    if (hi > 1e6) throw std::runtime_error("inversion bracket failure");
  }

  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    const Terms t = evaluate(p, x, w);
    const double fx = t.z - target;
    if (std::fabs(fx) <= 1e-15) return x;
    if (fx < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = t.clamped ? 0.0 : std::exp(t.log_p - t.log_phi);
    double next = slope > 0.0 && std::isfinite(slope) ? x - fx / slope : 0.5 * (lo + hi);
    if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - x) <= 1e-16 * std::max(1.0, std::fabs(x))) return next;
    x = next;
  }
  return x;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

// Per-sample terms kept from the forward pass for the backward pass.
struct LayerCache {
  std::vector<Terms> terms;
  Matrix t, sig, sig_neg, r, qphi;  // n x K
};

// Fused layer op: n x 1 input -> n x 2 [z, log mixture pdf].
Var layer_op(Tape& tape, Var x, Var w, Var m, Var ls, std::uint64_t* clamp_events) {
  const Matrix& xv = tape.value(x);
  auto p = std::make_shared<Prepared>(tape.value(w), tape.value(m), tape.value(ls));
  const Eigen::Index n = xv.rows();
  const auto k = static_cast<Eigen::Index>(p->size());
  auto cache = std::make_shared<LayerCache>();
  cache->terms.resize(static_cast<std::size_t>(n));
  for (Matrix* mat : {&cache->t, &cache->sig, &cache->sig_neg, &cache->r, &cache->qphi}) mat->resize(k, n);
  Scratch scratch;
  Matrix out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Terms t = evaluate(*p, xv(i, 0), scratch, true);
    cache->terms[static_cast<std::size_t>(i)] = t;
    cache->t.col(i) = Eigen::Map<const diffnet::Vector>(scratch.t.data(), k);
    cache->sig.col(i) = Eigen::Map<const diffnet::Vector>(scratch.sig.data(), k);
    cache->sig_neg.col(i) = Eigen::Map<const diffnet::Vector>(scratch.sig_neg.data(), k);
    cache->r.col(i) = Eigen::Map<const diffnet::Vector>(scratch.r.data(), k);
    cache->qphi.col(i) = Eigen::Map<const diffnet::Vector>(scratch.qphi.data(), k);
    out(i, 0) = t.z;
    out(i, 1) = t.log_p;
    if (t.clamped && clamp_events) ++*clamp_events;
  }
  return tape.custom({x, w, m, ls}, std::move(out), [p, cache, n, k](const Matrix& g, Tape::Sink& s) {
    Matrix gx = Matrix::Zero(n, 1);
    Matrix gw = Matrix::Zero(1, k), gm = Matrix::Zero(1, k), gls = Matrix::Zero(1, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Terms& t = cache->terms[static_cast<std::size_t>(i)];
      const double gz = t.clamped ? 0.0 : g(i, 0);
      const double gl = g(i, 1);
      const double inv_phi = std::exp(-t.log_phi);
      double dx = gz == 0.0 ? 0.0 : gz * std::exp(t.log_p - t.log_phi);
      for (Eigen::Index c = 0; c < k; ++c) {
        const auto j = static_cast<std::size_t>(c);
        const double sig = cache->sig(c, i), sig_neg = cache->sig_neg(c, i), tt = cache->t(c, i);
        const double r = cache->r(c, i);
        const double a = sig_neg - sig;  // 1 - 2 logistic(t)
        const double qz = gz * cache->qphi(c, i);
        const double tail = t.upper ? t.S - sig_neg : sig - t.F;
        const double ra = gl * r * a / p->s[j];
        dx += ra;
        gm(0, c) += -qz - ra;
        gls(0, c) += -qz * p->s[j] * tt + gl * r * (-a * tt - 1.0);
        gw(0, c) += gz * p->pi[j] * tail * inv_phi + gl * (r - p->pi[j]);
      }
      gx(i, 0) = dx;
    }
    if (s.wants(0)) s.add(0, gx);
    if (s.wants(1)) s.add(1, gw);
    if (s.wants(2)) s.add(2, gm);
    if (s.wants(3)) s.add(3, gls);
  });
}

}  // namespace

void GaussLayer::validate() const {
  const auto k = weights.cols();
  if (k < 1 || weights.rows() != 1 || means.rows() != 1 || log_scales.rows() != 1 || means.cols() != k ||
      log_scales.cols() != k) {
    throw ValidationError("gauss layer: weights, means and log_scales must be 1 x K with K >= 1");
  }
  if (!weights.allFinite() || !means.allFinite() || !log_scales.allFinite()) {
    throw ValidationError("gauss layer: non-finite parameter");
  }
}

LayerOutput layer_forward(const GaussLayer& layer, double x) {
  Scratch w;
  const Terms t = evaluate(Prepared(layer), x, w);
  return {t.z, t.log_p, t.clamped};
}

GaussFlowModel::GaussFlowModel(std::vector<GaussLayer> layers) : layers_(std::move(layers)) { validate(); }

void GaussFlowModel::validate() const {
  if (layers_.empty()) throw ValidationError("gauss flow: at least one layer required");
  for (const auto& l : layers_) l.validate();
}

GaussFlowModel GaussFlowModel::from_pilot(int depth, int components, std::span<const double> pilot) {
  if (depth < 1 || components < 1) throw ValidationError("gauss flow: depth and components must be >= 1");
  if (pilot.size() < 2) throw ValidationError("gauss flow: pilot batch needs at least 2 points");
  std::vector<double> current(pilot.begin(), pilot.end());
  std::vector<GaussLayer> layers;
  const auto k = static_cast<Eigen::Index>(components);
  for (int l = 0; l < depth; ++l) {
    std::vector<double> sorted = current;
    std::sort(sorted.begin(), sorted.end());
    GaussLayer layer;
    layer.weights = Matrix::Zero(1, k);
    layer.means.resize(1, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      layer.means(0, c) = quantile_sorted(sorted, (static_cast<double>(c) + 0.5) / static_cast<double>(k));
    }
    double scale = 0.0;
    if (k > 1) scale = (layer.means(0, k - 1) - layer.means(0, 0)) / static_cast<double>(k - 1);
    if (!(scale > 0.0)) {
      const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
      double var = 0.0;
      for (double v : sorted) var += (v - mean) * (v - mean);
      // Logistic scale with matching standard deviation.
      scale = std::sqrt(var / static_cast<double>(sorted.size() - 1)) * std::sqrt(3.0) / M_PI;
    }
    if (!(scale > 0.0)) scale = 1e-3;
    layer.log_scales = Matrix::Constant(1, k, std::log(scale));
    for (double& v : current) v = layer_forward(layer, v).z;
    layers.push_back(std::move(layer));
  }
  return GaussFlowModel(std::move(layers));
}

ForwardResult GaussFlowModel::forward(double x) const {
  ForwardResult r;
  Scratch w;
  r.z = x;
  for (const auto& layer : layers_) {
    const Terms t = evaluate(Prepared(layer), r.z, w);
    r.log_det += t.log_p - t.log_phi;
    r.z = t.z;
    r.clamped += t.clamped ? 1 : 0;
  }
  return r;
}

double GaussFlowModel::log_density(double x) const {
  const ForwardResult r = forward(x);
  return normal_log_pdf(r.z) + r.log_det;
}

std::vector<double> GaussFlowModel::log_density(std::span<const double> xs) const {
  std::vector<Prepared> prepared;
  for (const auto& l : layers_) prepared.emplace_back(l);
  Scratch w;
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double z = xs[i], acc = 0.0;
    for (const auto& p : prepared) {
      const Terms t = evaluate(p, z, w);
      acc += t.log_p - t.log_phi;
      z = t.z;
    }
    out[i] = acc + normal_log_pdf(z);
  }
  return out;
}

double GaussFlowModel::cdf(double x) const { return normal_cdf(forward(x).z); }

double GaussFlowModel::invert(double z) const {
  Scratch w;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) z = invert_layer(Prepared(*it), z, w);
  return z;
}

std::vector<double> GaussFlowModel::sample(std::size_t n, Rng& rng) const {
  std::vector<double> z(n);
  for (auto& v : z) v = rng.normal();
  if (n == 0) return z;
  std::vector<Prepared> prepared;
  for (const auto& l : layers_) prepared.emplace_back(l);
  Scratch w;
  // Composite map and its derivative.
  auto forward_d = [&](double x, double& slope) {
    double log_det = 0.0;
    bool clamped = false;
    for (const auto& p : prepared) {
      const Terms t = evaluate(p, x, w);
      log_det += t.log_p - t.log_phi;
      clamped = clamped || t.clamped;
      x = t.z;
    }
    slope = clamped ? 0.0 : std::exp(log_det);
    return x;
  };

  // A monotone table over the sampled range gives each draw a tight bracket.
  const auto [zmin, zmax] = std::minmax_element(z.begin(), z.end());
  const double lo = invert(*zmin), hi = invert(*zmax);
  constexpr std::size_t kTable = 4096;
  std::vector<double> tx(kTable), tz(kTable);
  double slope = 0.0;
  for (std::size_t i = 0; i < kTable; ++i) {
    tx[i] = i + 1 == kTable ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kTable - 1);
    tz[i] = forward_d(tx[i], slope);
  }
  std::vector<double> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double target = z[s];
    const auto it = std::lower_bound(tz.begin(), tz.end(), target);
    if (it == tz.end() || it == tz.begin()) {
      out[s] = invert(target);
      continue;
    }
    const auto j = static_cast<std::size_t>(it - tz.begin());
    double a = tx[j - 1], b = tx[j];
    double fa = tz[j - 1] - target, fb = tz[j] - target;
    double x = a - fa * (b - a) / (fb - fa);
    if (!(x > a && x < b)) x = 0.5 * (a + b);
    for (int iter = 0; iter < 100; ++iter) {
      const double fx = forward_d(x, slope) - target;
      if (std::fabs(fx) < 1e-13) break;
      if (fx < 0.0) {
        a = x;
      } else {
        b = x;
      }
      double next = slope > 0.0 ? x - fx / slope : 0.5 * (a + b);
      if (!(next >= a && next <= b)) next = 0.5 * (a + b);
      const bool done = std::fabs(next - x) <= 1e-15 * std::max(1.0, std::fabs(x));
      x = next;
      if (done) break;
    }
    out[s] = x;
  }
  return out;
}

std::vector<Matrix*> GaussFlowModel::parameters() {
  std::vector<Matrix*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.means);
    out.push_back(&l.log_scales);
  }
  return out;
}

std::vector<Matrix> GaussFlowModel::zero_gradients() const {
  std::vector<Matrix> out;
  for (const auto& l : layers_) {
    for (int i = 0; i < 3; ++i) out.push_back(Matrix::Zero(1, l.components()));
  }
  return out;
}

Var GaussFlowModel::mean_log_likelihood(Tape& tape, std::span<const double> xs, std::vector<Matrix>* grads,
                                        std::uint64_t* clamp_events) const {
  if (xs.empty()) throw ValidationError("gauss flow: empty batch");
  if (grads && grads->size() != 3 * layers_.size()) throw ValidationError("gauss flow: gradient buffer mismatch");
  Matrix x0(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) x0(static_cast<Eigen::Index>(i), 0) = xs[i];
  Var x = tape.constant(std::move(x0));
  std::optional<Var> total;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const GaussLayer& layer = layers_[l];
    auto sink = [&](std::size_t i) { return grads ? &(*grads)[3 * l + i] : nullptr; };
    Var out = layer_op(tape, x, tape.parameter(layer.weights, sink(0)), tape.parameter(layer.means, sink(1)),
                       tape.parameter(layer.log_scales, sink(2)), clamp_events);
    Var z = tape.col(out, 0);
    Var log_p = tape.col(out, 1);
    // Each layer contributes log p - log phi(z); the base density's log phi(z_L)
    // cancels the last of these.
    Var term = log_p;
    if (l + 1 < layers_.size()) {
      term = tape.sub(log_p, tape.add_scalar(tape.scale(tape.square(z), -0.5), -kLogSqrt2Pi));
    }
    total = total ? tape.add(*total, term) : term;
    x = z;
  }
  return tape.mean(*total);
}

void to_json(nlohmann::json& j, const GaussLayer& l) {
  j = {{"weights", matrix_to_json(l.weights)},
       {"means", matrix_to_json(l.means)},
       {"log_scales", matrix_to_json(l.log_scales)}};
}

void from_json(const nlohmann::json& j, GaussLayer& l) {
  l.weights = matrix_from_json(j.at("weights"));
  l.means = matrix_from_json(j.at("means"));
  l.log_scales = matrix_from_json(j.at("log_scales"));
  l.validate();
}

void to_json(nlohmann::json& j, const GaussFlowModel& m) { j = {{"layers", m.layers()}}; }

void from_json(const nlohmann::json& j, GaussFlowModel& m) {
  m = GaussFlowModel(j.at("layers").get<std::vector<GaussLayer>>());
}

double density_w1(const GaussFlowModel& model, const synthdata::MixtureSpec& spec, std::size_t grid) {
  auto [lo, hi] = synthdata::support(spec);
  const double pad = 0.1 * (hi - lo);
  const auto xs = metrics::uniform_grid(lo - pad, hi + pad, grid);
  std::vector<double> diff(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) diff[i] = std::fabs(model.cdf(xs[i]) - synthdata::cdf(spec, xs[i]));
  return metrics::trapezoid(xs, diff);
}

void GaussFlowConfig::validate() const {
  if (layers < 1) throw ValidationError("gf config: layers must be >= 1");
  if (components < 1) throw ValidationError("gf config: components must be >= 1");
  if (steps < 0) throw ValidationError("gf config: steps must be >= 0");
  if (batch_size < 1) throw ValidationError("gf config: batch_size must be >= 1");
  if (eval_every < 1) throw ValidationError("gf config: eval_every must be >= 1");
  if (eval_samples < 1) throw ValidationError("gf config: eval_samples must be >= 1");
  if (pilot_samples < 2) throw ValidationError("gf config: pilot_samples must be >= 2");
  optimizer.validate();
}

GaussFlowConfig GaussFlowConfig::defaults_for(const synthdata::MixtureSpec& spec) {
  GaussFlowConfig c;
  if (std::holds_alternative<synthdata::MultimodalSpec>(spec)) {
    c.layers = 4;
    c.components = 64;
  }
  return c;
}

void to_json(nlohmann::json& j, const GaussFlowConfig& c) {
  j = {{"layers", c.layers},
       {"components", c.components},
       {"optimizer", c.optimizer},
       {"steps", c.steps},
       {"batch_size", c.batch_size},
       {"eval_every", c.eval_every},
       {"eval_samples", c.eval_samples},
       {"pilot_samples", c.pilot_samples}};
}

void from_json(const nlohmann::json& j, GaussFlowConfig& c) {
  const GaussFlowConfig d;
  c.layers = j.value("layers", d.layers);
  c.components = j.value("components", d.components);
  c.optimizer = j.contains("optimizer") ? j["optimizer"].get<diffnet::AdamConfig>() : d.optimizer;
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_samples = j.value("eval_samples", d.eval_samples);
  c.pilot_samples = j.value("pilot_samples", d.pilot_samples);
  c.validate();
}

nlohmann::json checkpoint(const GaussFlowModel& model, const diffnet::AdamState& optimizer) {
  return {{"schema_version", kSchemaVersion}, {"kind", "gaussflow"}, {"model", model}, {"optimizer", optimizer}};
}

GaussFlowModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("kind", "") != "gaussflow") throw ValidationError("checkpoint is not a gaussflow model");
  return j.at("model").get<GaussFlowModel>();
}

GaussFlowResult train(const GaussFlowConfig& config, const synthdata::MixtureSpec& spec, std::uint64_t seed,
                      const StepCallback& on_step) {
  config.validate();
  synthdata::validate(spec);
  const auto start = std::chrono::steady_clock::now();

  synthdata::DatasetHandle data(spec, mix_seed(seed, 1));
  const auto pilot = synthdata::DatasetHandle(spec, mix_seed(seed, 3)).sample(config.pilot_samples);

  GaussFlowResult result;
  GaussFlowModel model = GaussFlowModel::from_pilot(config.layers, config.components, pilot);
  diffnet::AdamState optimizer(config.optimizer);
  TrialRecord& record = result.record;
  record.model = "gf";
  record.config = config;
  record.dataset = spec;
  record.seed = seed;

  auto evaluate_at = [&](std::int64_t step) {
    Rng rng(mix_seed(mix_seed(seed, 2), static_cast<std::uint64_t>(step)));
    const auto samples = model.sample(config.eval_samples, rng);
    synthdata::DatasetHandle fresh_stream(spec, mix_seed(mix_seed(seed, 4), static_cast<std::uint64_t>(step)));
    const auto fresh = fresh_stream.sample(config.eval_samples);
    const auto ll = model.log_density(fresh);
    EvalPoint point;
    point.step = step;
    point.true_w1 = metrics::w1_direct(samples, fresh);
    point.loss = -std::accumulate(ll.begin(), ll.end(), 0.0) / static_cast<double>(ll.size());
    const double before = record.best_w1;
    record.add_eval(point);
    if (record.best_w1 != before || result.best.layers().empty()) result.best = model;
  };

  std::int64_t step = 0;
  try {
    evaluate_at(0);
    std::vector<double> batch(static_cast<std::size_t>(config.batch_size));
    const Matrix minus_one = Matrix::Constant(1, 1, -1.0);
    auto params = model.parameters();
    bool evaluated = true;
    while (step < config.steps) {
      ++step;
      data.sample_into(batch);
      Tape tape;
      auto grads = model.zero_gradients();
      const Var ll = model.mean_log_likelihood(tape, batch, &grads, &record.clamp_events);
      const double value = tape.value(ll)(0, 0);
      if (!std::isfinite(value)) throw DivergenceError(step, "divergence detected: non-finite log-likelihood");
      tape.backward(ll, minus_one);
      optimizer.update(params, grads);
      result.log_likelihood_trace.push_back(value);
      evaluated = false;
      if (step % config.eval_every == 0 || step == config.steps) {
        evaluate_at(step);
        evaluated = true;
      }
      if (on_step && !on_step(step, value)) break;
    }
    if (!evaluated) evaluate_at(step);
  } catch (const DivergenceError& e) {
    record.failed = true;
    record.failure = e.what();
    record.failure_step = e.step();
  } catch (const std::runtime_error& e) {
    record.failed = true;
    record.failure = e.what();
    record.failure_step = step;
  }
  if (result.best.layers().empty()) result.best = model;
  result.final = std::move(model);
  result.optimizer = std::move(optimizer);
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace densbench::gaussflow
