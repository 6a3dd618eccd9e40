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

#ifndef CONVSHATTER_EXACT_SUM_H_
#define CONVSHATTER_EXACT_SUM_H_

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

namespace convshatter {

// Error-free accumulator over doubles (Shewchuk's non-overlapping partials,
// the msum/fsum algorithm). Result() is the correctly rounded double of the
// exact sum, so it does not depend on the order terms were added in.
//
// Products of two floats are exact in double; products of two doubles are
// split with fma into an exact (hi, lo) pair. Either way a dot product
// accumulated here is the correctly rounded value of the exact dot product.
class ExactAccumulator {
 public:
  void Reset() { count_ = 0; }

  void Add(double x) {
    std::size_t i = 0;
    for (std::size_t j = 0; j < count_; ++j) {
      double y = partials_[j];
      if (std::fabs(x) < std::fabs(y)) {
        const double t = x;
        x = y;
        y = t;
      }
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    // 64 partials cover the whole double exponent range with room to spare.
    partials_[i] = x;
    count_ = i + 1;
  }

  template <typename T>
  void AddProduct(T a, T b) {
    if constexpr (std::is_same_v<T, float>) {
      Add(static_cast<double>(a) * static_cast<double>(b));
    } else {
      const double p = static_cast<double>(a) * static_cast<double>(b);
      const double e = std::fma(static_cast<double>(a),
                                static_cast<double>(b), -p);
      Add(p);
      if (e != 0.0) Add(e);
    }
  }

  double Result() const {
    if (count_ == 0) return 0.0;
    std::size_t n = count_;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round-half-even correction when the remaining partials push the
    // discarded tail past the halfway point.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) ||
                  (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

 private:
  std::array<double, 64> partials_{};
  std::size_t count_ = 0;
};

}  // namespace convshatter

#endif  // CONVSHATTER_EXACT_SUM_H_
