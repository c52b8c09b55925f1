// Copyright 2026 The kanon-ols Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kanon/distributions.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

namespace kanon {

double t_p_value(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t_p_value: df must be > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  const double t2 = t * t;
  // Pick the complementary form when x is close to 1 to keep precision.
  if (t2 < df) {
    const double y = t2 / (df + t2);
    return boost::math::ibetac(0.5, df / 2.0, y);
  }
  return boost::math::ibeta(df / 2.0, 0.5, df / (df + t2));
}

double f_p_value(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0))
    throw std::invalid_argument("f_p_value: degrees of freedom must be > 0");
  if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  const double denom = d2 + d1 * f;
  if (d1 * f < d2) return boost::math::ibetac(d1 / 2.0, d2 / 2.0, d1 * f / denom);
  return boost::math::ibeta(d2 / 2.0, d1 / 2.0, d2 / denom);
}

double normal_p_value(double z) {
  if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

}  // namespace kanon
