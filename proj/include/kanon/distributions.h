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

#ifndef KANON_DISTRIBUTIONS_H_
#define KANON_DISTRIBUTIONS_H_

namespace kanon {

// Two-sided p-value of Student's t with `df` degrees of freedom, computed as
// I_{df/(df+t^2)}(df/2, 1/2). df need not be integral. Returns 0 for infinite
// t and NaN for NaN t.
double t_p_value(double t, double df);

// Upper tail of the F(d1, d2) distribution: I_{d2/(d2+d1 f)}(d2/2, d1/2).
double f_p_value(double f, double d1, double d2);

// Two-sided standard normal tail.
double normal_p_value(double z);

}  // namespace kanon

#endif  // KANON_DISTRIBUTIONS_H_
