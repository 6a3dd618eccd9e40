// Copyright 2026 The ConvShatter Authors.
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

#ifndef CONVSHATTER_STATS_H_
#define CONVSHATTER_STATS_H_

#include <cstddef>
#include <span>
#include <vector>

namespace convshatter {

// Sample sizes below this use the exact two-sided null distribution; larger
// samples use the Kolmogorov limit.
inline constexpr std::size_t kKsExactLimit = 35;

struct KsResult {
  double statistic = 0.0;  // sup |F_a - F_b|
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov statistic. Empty samples give 0.
double KsStatistic(std::span<const double> a, std::span<const double> b);

// P(D >= d) under the null for sample sizes n and m.
double KsPValue(double statistic, std::size_t n, std::size_t m);

KsResult KsTest(std::span<const double> a, std::span<const double> b);

// Two-sided critical value c(alpha) * sqrt((n + m) / (n m)).
double KsCriticalValue(std::size_t n, std::size_t m, double alpha);

// Linear-interpolated quantile of an ascending sequence, q in [0, 1].
double SortedQuantile(std::span<const double> sorted, double q);

double Median(std::vector<double> values);

}  // namespace convshatter

#endif  // CONVSHATTER_STATS_H_
