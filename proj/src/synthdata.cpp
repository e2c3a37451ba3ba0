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

#include "densbench/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "densbench/error.hpp"
#include "densbench/probit.hpp"

namespace densbench::synthdata {
namespace {

double unimodal_pdf(const UnimodalSpec& s, double x) {
  const double half = s.r * s.sigma;
  const double uniform = std::fabs(x - s.mu) <= half ? 1.0 / (2.0 * half) : 0.0;
  const double z = (x - s.mu) / s.sigma;
  const double gaussian = std::exp(normal_log_pdf(z)) / s.sigma;
  return s.p * gaussian + (1.0 - s.p) * uniform;
}

double unimodal_cdf(const UnimodalSpec& s, double x) {
  const double half = s.r * s.sigma;
  const double uniform = std::clamp((x - (s.mu - half)) / (2.0 * half), 0.0, 1.0);
  return s.p * normal_cdf((x - s.mu) / s.sigma) + (1.0 - s.p) * uniform;
}

double unimodal_draw(const UnimodalSpec& s, Rng& rng) {
  const bool gaussian = rng.uniform() < s.p;
  const double u = rng.uniform_open();
  if (gaussian) return s.mu + s.sigma * probit(u);
  const double half = s.r * s.sigma;
  return s.mu - half + 2.0 * half * u;
}

void check(bool ok, const char* message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace

void UnimodalSpec::validate() const {
  check(p >= 0.0 && p <= 1.0, "spec: p must lie in [0, 1]");
  check(sigma > 0.0 && std::isfinite(sigma), "spec: sigma must be > 0");
  check(r > 0.0 && std::isfinite(r), "spec: r must be > 0");
  check(std::isfinite(mu), "spec: mu must be finite");
}

void MultimodalSpec::validate() const {
  check(k >= 1, "spec: k must be >= 1");
  check(mus.size() == static_cast<std::size_t>(k), "spec: mus must have k entries");
  for (int j = 0; j < k; ++j) cluster(j).validate();
}

std::vector<double> MultimodalSpec::default_means(int k) {
  std::vector<double> mus(static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t j = 0; j < mus.size(); ++j) mus[j] = 10.0 * static_cast<double>(j + 1);
  return mus;
}

void validate(const MixtureSpec& spec) {
  std::visit([](const auto& s) { s.validate(); }, spec);
}

double pdf(const MixtureSpec& spec, double x) {
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) return unimodal_pdf(*u, x);
  const auto& m = std::get<MultimodalSpec>(spec);
  double total = 0.0;
  for (int j = 0; j < m.k; ++j) total += unimodal_pdf(m.cluster(j), x);
  return total / m.k;
}

double cdf(const MixtureSpec& spec, double x) {
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) return unimodal_cdf(*u, x);
  const auto& m = std::get<MultimodalSpec>(spec);
  double total = 0.0;
  for (int j = 0; j < m.k; ++j) total += unimodal_cdf(m.cluster(j), x);
  return total / m.k;
}

double mean(const MixtureSpec& spec) {
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) return u->mu;
  const auto& m = std::get<MultimodalSpec>(spec);
  double total = 0.0;
  for (double mu : m.mus) total += mu;
  return total / m.k;
}

double stddev(const MixtureSpec& spec) {
  auto within = [](double p, double sigma, double r) {
    return p * sigma * sigma + (1.0 - p) * (r * sigma) * (r * sigma) / 3.0;
  };
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) return std::sqrt(within(u->p, u->sigma, u->r));
  const auto& m = std::get<MultimodalSpec>(spec);
  const double centre = mean(spec);
  double between = 0.0;
  for (double mu : m.mus) between += (mu - centre) * (mu - centre);
  return std::sqrt(within(m.p, m.sigma, m.r) + between / m.k);
}

std::pair<double, double> support(const MixtureSpec& spec) {
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) {
    const double half = std::max(u->r, 4.0) * u->sigma;
    return {u->mu - half, u->mu + half};
  }
  const auto& m = std::get<MultimodalSpec>(spec);
  const double half = std::max(m.r, 4.0) * m.sigma;
  const auto [lo, hi] = std::minmax_element(m.mus.begin(), m.mus.end());
  return {*lo - half, *hi + half};
}

std::vector<double> breakpoints(const MixtureSpec& spec) {
  std::vector<double> out;
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) {
    out = {u->mu - u->r * u->sigma, u->mu + u->r * u->sigma};
  } else {
    const auto& m = std::get<MultimodalSpec>(spec);
    for (double mu : m.mus) {
      out.push_back(mu - m.r * m.sigma);
      out.push_back(mu + m.r * m.sigma);
    }
    std::sort(out.begin(), out.end());
  }
  return out;
}

MixtureSpec preset(const std::string& name) {
  if (name == "unimodal") return UnimodalSpec{};
  if (name == "multimodal") return MultimodalSpec{};
  throw ValidationError("unknown dataset preset '" + name + "'");
}

MixtureSpec load_spec(const std::string& name_or_path) {
  if (name_or_path == "unimodal" || name_or_path == "multimodal") return preset(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw ValidationError("cannot open spec '" + name_or_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("spec '" + name_or_path + "': " + e.what());
  }
  MixtureSpec spec = j.get<MixtureSpec>();
  return spec;
}

std::string spec_name(const MixtureSpec& spec) {
  return std::holds_alternative<UnimodalSpec>(spec) ? "unimodal" : "multimodal";
}

void to_json(nlohmann::json& j, const MixtureSpec& spec) {
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) {
    j = {{"kind", "unimodal"}, {"p", u->p}, {"mu", u->mu}, {"sigma", u->sigma}, {"r", u->r}};
    return;
  }
  const auto& m = std::get<MultimodalSpec>(spec);
  j = {{"kind", "multimodal"}, {"k", m.k},         {"p", m.p},
       {"sigma", m.sigma},     {"r", m.r},         {"mus", m.mus}};
}

void from_json(const nlohmann::json& j, MixtureSpec& spec) {
  if (j.is_string()) {
    spec = preset(j.get<std::string>());
    return;
  }
  if (!j.is_object()) throw ValidationError("spec must be a JSON object or preset name");
  std::string kind = j.value("kind", j.contains("k") ? "multimodal" : "unimodal");
  try {
    if (kind == "unimodal") {
      UnimodalSpec u;
      u.p = j.value("p", u.p);
      u.mu = j.value("mu", u.mu);
      u.sigma = j.value("sigma", u.sigma);
      u.r = j.value("r", u.r);
      u.validate();
      spec = u;
    } else if (kind == "multimodal") {
      MultimodalSpec m;
      m.k = j.value("k", m.k);
      m.p = j.value("p", m.p);
      m.sigma = j.value("sigma", m.sigma);
      m.r = j.value("r", m.r);
      m.mus = j.contains("mus") ? j.at("mus").get<std::vector<double>>()
                                : MultimodalSpec::default_means(m.k);
      m.validate();
      spec = m;
    } else {
      throw ValidationError("unknown spec kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("spec: ") + e.what());
  }
}

DatasetHandle::DatasetHandle(MixtureSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), rng_(seed) {
  validate(spec_);
}

std::vector<double> DatasetHandle::sample(std::size_t n) {
  std::vector<double> out(n);
  sample_into(out);
  return out;
}

void DatasetHandle::sample_into(std::span<double> out) {
  for (double& x : out) x = draw(spec_, rng_);
}

double draw(const MixtureSpec& spec, Rng& rng) {
  if (const auto* u = std::get_if<UnimodalSpec>(&spec)) return unimodal_draw(*u, rng);
  const auto& m = std::get<MultimodalSpec>(spec);
  const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.k)));
  return unimodal_draw(m.cluster(j), rng);
}

}  // namespace densbench::synthdata
