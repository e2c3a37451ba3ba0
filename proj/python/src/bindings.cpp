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

#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "densbench/error.hpp"
#include "densbench/harness.hpp"
#include "densbench/hypersearch.hpp"
#include "densbench/json_util.hpp"
#include "densbench/metrics.hpp"
#include "densbench/synthdata.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace densbench;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Preset name, spec file path, or a JSON object in text form.
synthdata::MixtureSpec spec_of(const std::string& ref) {
  if (!ref.empty() && ref.front() == '{') return harness::dataset_from_json(json::parse(ref)).spec;
  return synthdata::load_spec(ref);
}

std::vector<double> to_vector(const Array& a) {
  const auto* p = a.data();
  return std::vector<double>(p, p + a.size());
}

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())}, v.data());
}

}  // namespace

PYBIND11_MODULE(_densbench, m) {
  m.doc() = "densbench core bindings; specs and configs travel as JSON text";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def("sample", [](const std::string& spec, std::size_t n, std::uint64_t seed) {
    synthdata::DatasetHandle h(spec_of(spec), seed);
    return to_array(h.sample(n));
  }, py::arg("spec"), py::arg("n"), py::arg("seed"));

  m.def("pdf", [](const std::string& spec, const Array& x) {
    const auto s = spec_of(spec);
    auto v = to_vector(x);
    for (double& t : v) t = synthdata::pdf(s, t);
    return to_array(v);
  }, py::arg("spec"), py::arg("x"));

  m.def("cdf", [](const std::string& spec, const Array& x) {
    const auto s = spec_of(spec);
    auto v = to_vector(x);
    for (double& t : v) t = synthdata::cdf(s, t);
    return to_array(v);
  }, py::arg("spec"), py::arg("x"));

  m.def("spec_json", [](const std::string& spec) { return json(spec_of(spec)).dump(); }, py::arg("spec"));

  m.def("w1", [](const Array& a, const Array& b) {
    return metrics::w1_direct(to_vector(a), to_vector(b));
  }, py::arg("a"), py::arg("b"));

  m.def("kde_bandwidth", [](const Array& samples) { return metrics::kde_bandwidth(to_vector(samples)); },
        py::arg("samples"));

  m.def("kde", [](const Array& samples, const Array& grid, std::optional<double> h) {
    const auto xs = to_vector(samples);
    const double bw = h ? *h : metrics::kde_bandwidth(xs);
    return to_array(metrics::kde_evaluate(xs, bw, to_vector(grid)));
  }, py::arg("samples"), py::arg("grid"), py::arg("h") = std::nullopt);

  m.def("rungs", [](std::int64_t min_budget, std::int64_t max_budget, int eta) {
    return hypersearch::AshaSchedule{min_budget, max_budget, eta}.rungs();
  }, py::arg("min_budget"), py::arg("max_budget"), py::arg("eta"));

  m.def("sample_config", [](std::uint64_t seed, std::size_t trial, const std::string& space) {
    const auto s = space.empty() ? hypersearch::SearchSpace::defaults()
                                 : json::parse(space).get<hypersearch::SearchSpace>();
    return hypersearch::trial_config(s, seed, trial).dump();
  }, py::arg("seed"), py::arg("trial"), py::arg("space") = "");

  m.def("train", [](const std::string& kind, const std::string& config, const std::string& spec,
                    std::uint64_t seed, const std::filesystem::path& out) {
    const harness::DatasetEntry ds{"data", spec_of(spec)};
    const harness::ModelEntry model{kind, kind, json::parse(config), {}};
    const json full = harness::cell_config(model, ds, model.config.value("eval_samples", std::size_t{100000}));
    py::gil_scoped_release release;
    return json(harness::run_cell(kind, full, ds.spec, seed, out)).dump();
  }, py::arg("kind"), py::arg("config"), py::arg("spec"), py::arg("seed"), py::arg("out"));

  m.def("diagnose", [](const std::string& record) {
    return harness::diagnose_critic(json::parse(record).get<TrialRecord>()).to_json().dump();
  }, py::arg("record"));

  m.def("run_plan", [](const std::filesystem::path& plan) {
    py::gil_scoped_release release;
    return harness::run(harness::load_plan(plan)).text();
  }, py::arg("plan"));

  m.def("export_curves", [](const std::filesystem::path& records, std::size_t grid) {
    return harness::export_density_curves(records, grid);
  }, py::arg("records"), py::arg("grid") = 1000);
}
