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

#include "convshatter/stats.h"

#include <algorithm>
#include <cmath>

namespace convshatter {
namespace {

// Exact P(D < d) for the two-sided statistic, by counting lattice paths that
// stay inside the band |i/m - j/n| <= q.
double ExactCdf(double statistic, std::size_t m, std::size_t n) {
  if (m > n) std::swap(m, n);
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  const double q = (0.5 + std::floor(statistic * md * nd - 1e-7)) / (md * nd);
  std::vector<double> u(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    u[j] = (static_cast<double>(j) / nd > q) ? 0.0 : 1.0;
  }
  for (std::size_t i = 1; i <= m; ++i) {
    const double w = static_cast<double>(i) / static_cast<double>(i + n);
    const double x = static_cast<double>(i) / md;
    u[0] = (x > q) ? 0.0 : w * u[0];
    for (std::size_t j = 1; j <= n; ++j) {
      if (std::fabs(x - static_cast<double>(j) / nd) > q) {
        u[j] = 0.0;
      } else {
        u[j] = w * u[j] + u[j - 1];
      }
    }
  }
  return u[n];
}

// Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double KolmogorovTail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace

double KsStatistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / nx -
                              static_cast<double>(j) / ny));
  }
  return d;
}

double KsPValue(double statistic, std::size_t n, std::size_t m) {
  if (n == 0 || m == 0 || statistic <= 0.0) return 1.0;
  if (std::min(n, m) < kKsExactLimit) {
    return std::clamp(1.0 - ExactCdf(statistic, n, m), 0.0, 1.0);
  }
  const double ne = static_cast<double>(n) * static_cast<double>(m) /
                    static_cast<double>(n + m);
  const double root = std::sqrt(ne);
  return KolmogorovTail((root + 0.12 + 0.11 / root) * statistic);
}

KsResult KsTest(std::span<const double> a, std::span<const double> b) {
  KsResult r;
  r.statistic = KsStatistic(a, b);
  r.p_value = KsPValue(r.statistic, a.size(), b.size());
  return r;
}

double KsCriticalValue(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  return c * std::sqrt((nd + md) / (nd * md));
}

double SortedQuantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = std::clamp(q, 0.0, 1.0) *
                     static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double Median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return SortedQuantile(values, 0.5);
}

}  // namespace convshatter
