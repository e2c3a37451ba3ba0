# Copyright 2026 The densbench Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python front end for the densbench core."""

import json

import numpy as np

from . import _densbench
from ._densbench import ValidationError, kde, kde_bandwidth, rungs, w1

__all__ = [
    "ValidationError",
    "cdf",
    "diagnose",
    "export_curves",
    "kde",
    "kde_bandwidth",
    "pdf",
    "run_plan",
    "rungs",
    "sample",
    "sample_config",
    "spec",
    "train",
    "w1",
]


def _spec(s):
    return s if isinstance(s, str) else json.dumps(s)


def spec(s="unimodal"):
    """Full spec dict for a preset name, spec file or partial dict."""
    return json.loads(_densbench.spec_json(_spec(s)))


def sample(s, n, seed=0):
    return _densbench.sample(_spec(s), n, seed)


def pdf(s, x):
    return _densbench.pdf(_spec(s), np.asarray(x, dtype=float))


def cdf(s, x):
    return _densbench.cdf(_spec(s), np.asarray(x, dtype=float))


def sample_config(seed, trial, space=None):
    return json.loads(_densbench.sample_config(seed, trial, "" if space is None else json.dumps(space)))


def train(kind, config, data="unimodal", seed=0, out="densbench_out"):
    """Train a "wgan" or "gf" model; returns the trial record as a dict."""
    return json.loads(_densbench.train(kind, json.dumps(config or {}), _spec(data), seed, str(out)))


def diagnose(record):
    return json.loads(_densbench.diagnose(json.dumps(record)))


def run_plan(path):
    return _densbench.run_plan(str(path))


def export_curves(records, grid=1000):
    return [str(p) for p in _densbench.export_curves(str(records), grid)]
