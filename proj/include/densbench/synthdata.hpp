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

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "densbench/rng.hpp"

namespace densbench::synthdata {

/// Gaussian/uniform mixture sharing one mean.
///
/// Latent y ~ Bernoulli(p); y = 1 draws Gaussian(mu, sigma^2), y = 0 draws
/// Uniform[mu - r*sigma, mu + r*sigma]. So `p` is the Gaussian weight.
struct UnimodalSpec {
  double p = 0.75;
  double mu = 5.0;
  double sigma = 0.1;
  double r = 5.0;

  void validate() const;
};

/// Equal-weight mixture of k UnimodalSpec clusters centred at `mus`.
struct MultimodalSpec {
  int k = 8;
  double p = 0.5;
  double sigma = 2.0;
  double r = 1.5;
  std::vector<double> mus = default_means(8);

  void validate() const;
  UnimodalSpec cluster(int j) const { return {p, mus[static_cast<std::size_t>(j)], sigma, r}; }

  /// mus[j] = 10 * (j + 1).
  static std::vector<double> default_means(int k);
};

using MixtureSpec = std::variant<UnimodalSpec, MultimodalSpec>;

void validate(const MixtureSpec& spec);

double pdf(const MixtureSpec& spec, double x);
double cdf(const MixtureSpec& spec, double x);
double mean(const MixtureSpec& spec);
double stddev(const MixtureSpec& spec);

/// Interval holding the uniform supports and the Gaussians out to 4 sigma.
std::pair<double, double> support(const MixtureSpec& spec);

/// Points where the density jumps (uniform endpoints).
std::vector<double> breakpoints(const MixtureSpec& spec);

/// Preset names: "unimodal", "multimodal".
MixtureSpec preset(const std::string& name);

/// Accepts a preset name or a path to a JSON spec file.
MixtureSpec load_spec(const std::string& name_or_path);

std::string spec_name(const MixtureSpec& spec);

void to_json(nlohmann::json& j, const MixtureSpec& spec);
void from_json(const nlohmann::json& j, MixtureSpec& spec);

/// A spec plus private RNG state. Equal (spec, seed) give identical streams.
class DatasetHandle {
 public:
  DatasetHandle(MixtureSpec spec, std::uint64_t seed);

  std::vector<double> sample(std::size_t n);
  void sample_into(std::span<double> out);

  const MixtureSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  Rng& rng() { return rng_; }

 private:
  MixtureSpec spec_;
  std::uint64_t seed_;
  Rng rng_;
};

/// One ancestral draw.
double draw(const MixtureSpec& spec, Rng& rng);

}  // namespace densbench::synthdata
