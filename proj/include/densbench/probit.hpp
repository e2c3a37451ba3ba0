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

namespace densbench {

/// Inverse standard normal CDF (Wichura's AS241, PPND16).
/// Relative accuracy about 1e-16 on (0, 1). Returns -inf/+inf at 0/1.
double probit(double p);

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal upper tail, 1 - normal_cdf(z), without cancellation.
double normal_sf(double z);

double normal_log_pdf(double z);

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

}  // namespace densbench
