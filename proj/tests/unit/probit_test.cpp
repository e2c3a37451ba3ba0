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

#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include "densbench/probit.hpp"
#include "densbench/rng.hpp"

namespace densbench {
namespace {

TEST(Probit, MatchesBoostQuantileOnLowerHalf) {
  const boost::math::normal_distribution<double> normal;
  double worst = 0.0;
  for (double e = -15.0; e <= std::log10(0.5); e += 0.01) {
    const double p = std::pow(10.0, e);
    worst = std::max(worst, std::fabs(probit(p) - boost::math::quantile(normal, p)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Probit, MatchesBoostQuantileOnUpperHalf) {
  // 1 - 2^-k is exact in binary64, so both sides see the same input.
  const boost::math::normal_distribution<double> normal;
  for (int k = 2; k <= 49; ++k) {
    const double q = std::ldexp(1.0, -k);
    const double expected = boost::math::quantile(boost::math::complement(normal, q));
    EXPECT_NEAR(probit(1.0 - q), expected, 1e-9) << "k=" << k;
  }
}

TEST(Probit, CentreAndSymmetry) {
  EXPECT_EQ(probit(0.5), 0.0);
  for (double p : {0x1p-40, 0x1p-20, 0.01, 0.2, 0.4}) EXPECT_NEAR(probit(p), -probit(1.0 - p), 1e-9);
  EXPECT_TRUE(std::isinf(probit(0.0)));
  EXPECT_TRUE(std::isnan(probit(1.5)));
}

TEST(Probit, InvertsNormalCdf) {
  for (double z = -8.0; z <= 8.0; z += 0.25) {
    const double back = z < 0.0 ? probit(normal_cdf(z)) : -probit(normal_sf(z));
    EXPECT_NEAR(back, z, 1e-9);
  }
}

TEST(Rng, StateRoundTripAndUnitInterval) {
  Rng a(42);
  for (int i = 0; i < 10; ++i) a.next_u64();
  Rng b(0);
  b.set_state(a.state());
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform_open();
    EXPECT_EQ(u, b.uniform_open());
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, BelowIsUniform) {
  Rng rng(7);
  std::array<int, 5> counts{};
  for (int i = 0; i < 50000; ++i) ++counts[rng.below(5)];
  for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
}

}  // namespace
}  // namespace densbench
