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

#include "convshatter/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "convshatter/error.h"
#include "convshatter/exact_sum.h"

namespace convshatter {

template <typename T>
Tensor<T> Conv2d(const Tensor<T>& input, const KernelSet<T>& kernels,
                 const ConvGeometry& geometry, bool include_bias,
                 MacCounter* counter) {
  if (input.channels() != kernels.c_in()) {
    throw DimensionError("conv2d: input has " +
                         std::to_string(input.channels()) +
                         " channels, kernels expect " +
                         std::to_string(kernels.c_in()));
  }
  if (!input.AllFinite()) throw NumericError("conv2d: non-finite input");
  if (!kernels.AllFinite()) throw NumericError("conv2d: non-finite kernel");

  const Shape4 out_shape = geometry.OutputShape(input.shape(), kernels.shape());
  Tensor<T> out(out_shape);
  const std::size_t c_in = kernels.c_in();
  const std::size_t k_h = kernels.k_h();
  const std::size_t k_w = kernels.k_w();
  const std::size_t in_h = input.height();
  const std::size_t in_w = input.width();
  const bool with_bias = include_bias && kernels.has_bias();
  const auto pad = static_cast<std::ptrdiff_t>(geometry.padding);
  const auto stride = static_cast<std::ptrdiff_t>(geometry.stride);

  ExactAccumulator acc;
  std::uint64_t macs = 0;
  for (std::size_t n = 0; n < out_shape.n; ++n) {
    for (std::size_t o = 0; o < out_shape.c; ++o) {
      for (std::size_t oy = 0; oy < out_shape.h; ++oy) {
        for (std::size_t ox = 0; ox < out_shape.w; ++ox) {
          acc.Reset();
          const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy) * stride - pad;
          const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox) * stride - pad;
          for (std::size_t i = 0; i < c_in; ++i) {
            for (std::size_t ky = 0; ky < k_h; ++ky) {
              const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
              for (std::size_t kx = 0; kx < k_w; ++kx) {
                const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(kx);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
                acc.AddProduct(kernels.at(o, i, ky, kx),
                               input.at(n, i, static_cast<std::size_t>(iy),
                                        static_cast<std::size_t>(ix)));
                ++macs;
              }
            }
          }
          if (with_bias) acc.Add(static_cast<double>(kernels.bias()[o]));
          out.at(n, o, oy, ox) = static_cast<T>(acc.Result());
        }
      }
    }
  }
  if (counter != nullptr) counter->macs += macs;
  return out;
}

template <typename T>
Tensor<T> PermuteChannels(const Tensor<T>& t, const Permutation& pi) {
  if (pi.size() != t.channels()) {
    throw PermutationError("permutation of size " + std::to_string(pi.size()) +
                           " applied to " + std::to_string(t.channels()) +
                           " channels");
  }
  Tensor<T> out(t.shape());
  for (std::size_t n = 0; n < t.batch(); ++n) {
    for (std::size_t c = 0; c < t.channels(); ++c) {
      auto src = t.plane(n, pi[c]);
      std::copy(src.begin(), src.end(), out.plane(n, c).begin());
    }
  }
  return out;
}

template <typename T>
KernelSet<T> PermuteKernelInputs(const KernelSet<T>& k, const Permutation& pi) {
  if (pi.size() != k.c_in()) {
    throw PermutationError("input permutation of size " +
                           std::to_string(pi.size()) + " for c_in " +
                           std::to_string(k.c_in()));
  }
  KernelSet<T> out(k.shape(), std::vector<T>(k.shape().count()), k.bias());
  const std::size_t area = k.k_h() * k.k_w();
  for (std::size_t o = 0; o < k.c_out(); ++o) {
    auto src = k.kernel(o);
    auto dst = out.kernel(o);
    for (std::size_t i = 0; i < k.c_in(); ++i) {
      std::copy_n(src.begin() + pi[i] * area, area, dst.begin() + i * area);
    }
  }
  return out;
}

template <typename T>
KernelSet<T> PermuteKernelOutputs(const KernelSet<T>& k,
                                  const Permutation& sigma) {
  if (sigma.size() != k.c_out()) {
    throw PermutationError("output permutation of size " +
                           std::to_string(sigma.size()) + " for c_out " +
                           std::to_string(k.c_out()));
  }
  std::vector<T> weights(k.shape().count());
  std::vector<T> bias;
  if (k.has_bias()) bias.resize(k.c_out());
  for (std::size_t o = 0; o < k.c_out(); ++o) {
    auto src = k.kernel(sigma[o]);
    std::copy(src.begin(), src.end(), weights.begin() + o * k.kernel_size());
    if (k.has_bias()) bias[o] = k.bias()[sigma[o]];
  }
  return KernelSet<T>(k.shape(), std::move(weights), std::move(bias));
}

template <typename T>
Tensor<T> Relu(const Tensor<T>& t) {
  std::vector<T> data(t.values());
  for (T& v : data) v = v > T{0} ? v : T{0};
  return Tensor<T>(t.shape(), std::move(data));
}

template <typename T>
Tensor<T> MaxPool2d(const Tensor<T>& t, std::size_t window,
                    std::size_t stride) {
  if (window == 0 || stride == 0) {
    throw DimensionError("max pool window and stride must be >= 1");
  }
  if (t.height() < window || t.width() < window) {
    throw DimensionError("max pool window " + std::to_string(window) +
                         " larger than input " + t.shape().ToString());
  }
  const Shape4 out_shape{t.batch(), t.channels(),
                         (t.height() - window) / stride + 1,
                         (t.width() - window) / stride + 1};
  Tensor<T> out(out_shape);
  for (std::size_t n = 0; n < out_shape.n; ++n) {
    for (std::size_t c = 0; c < out_shape.c; ++c) {
      for (std::size_t oy = 0; oy < out_shape.h; ++oy) {
        for (std::size_t ox = 0; ox < out_shape.w; ++ox) {
          T best = t.at(n, c, oy * stride, ox * stride);
          for (std::size_t ky = 0; ky < window; ++ky) {
            for (std::size_t kx = 0; kx < window; ++kx) {
              best = std::max(best, t.at(n, c, oy * stride + ky,
                                         ox * stride + kx));
            }
          }
          out.at(n, c, oy, ox) = best;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> Flatten(const Tensor<T>& t) {
  return Tensor<T>(Shape4{t.batch(), t.channels() * t.height() * t.width(), 1, 1},
                   t.values());
}

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape " + a.shape().ToString() + " vs " +
                         b.shape().ToString());
  }
  std::vector<T> data(a.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = a.data()[i] + b.data()[i];
  }
  return Tensor<T>(a.shape(), std::move(data));
}

template <typename T>
Tensor<T> Subtract(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("subtract: shape " + a.shape().ToString() + " vs " +
                         b.shape().ToString());
  }
  std::vector<T> data(a.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = a.data()[i] - b.data()[i];
  }
  return Tensor<T>(a.shape(), std::move(data));
}

template <typename To, typename From>
Tensor<To> CastTensor(const Tensor<From>& t) {
  std::vector<To> data(t.values().begin(), t.values().end());
  return Tensor<To>(t.shape(), std::move(data));
}

template <typename To, typename From>
KernelSet<To> CastKernels(const KernelSet<From>& k) {
  std::vector<To> weights(k.weights().begin(), k.weights().end());
  std::vector<To> bias(k.bias().begin(), k.bias().end());
  return KernelSet<To>(k.shape(), std::move(weights), std::move(bias));
}

KernelStats ComputeKernelStats(std::span<const double> entries) {
  KernelStats stats;
  const double n = static_cast<double>(entries.size());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double v : entries) {
    sum += v;
    sum_sq += v * v;
  }
  stats.norm = std::sqrt(sum_sq);
  const double mean = sum / n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : entries) {
    const double d = v - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  stats.variance = m2;
  if (m2 > 0.0) stats.kurtosis = m4 / (m2 * m2) - 3.0;
  return stats;
}

template <typename T>
std::vector<KernelStats> KernelStatistics(const KernelSet<T>& k) {
  if (k.kernel_size() < 2) {
    throw DimensionError("kernel statistics need at least 2 entries per kernel");
  }
  std::vector<KernelStats> out;
  out.reserve(k.c_out());
  std::vector<double> entries(k.kernel_size());
  for (std::size_t o = 0; o < k.c_out(); ++o) {
    auto src = k.kernel(o);
    std::copy(src.begin(), src.end(), entries.begin());
    out.push_back(ComputeKernelStats(entries));
  }
  return out;
}

template <typename T>
Matrix CosineMatrix(const KernelSet<T>& a, const KernelSet<T>& b) {
  if (a.c_in() != b.c_in() || a.k_h() != b.k_h() || a.k_w() != b.k_w()) {
    throw DimensionError("cosine matrix: kernel shapes " + a.shape().ToString() +
                         " and " + b.shape().ToString() + " differ");
  }
  auto norms = [](const KernelSet<T>& k) {
    std::vector<double> out(k.c_out());
    for (std::size_t o = 0; o < k.c_out(); ++o) {
      double s = 0.0;
      for (T v : k.kernel(o)) s += static_cast<double>(v) * v;
      out[o] = std::sqrt(s);
      if (out[o] == 0.0) {
        throw DegenerateKernelError("cosine matrix: kernel " +
                                    std::to_string(o) + " has zero norm");
      }
    }
    return out;
  };
  const std::vector<double> na = norms(a);
  const std::vector<double> nb = norms(b);
  Matrix m(a.c_out(), b.c_out());
  for (std::size_t i = 0; i < a.c_out(); ++i) {
    auto ki = a.kernel(i);
    for (std::size_t j = 0; j < b.c_out(); ++j) {
      auto kj = b.kernel(j);
      double dot = 0.0;
      for (std::size_t e = 0; e < ki.size(); ++e) {
        dot += static_cast<double>(ki[e]) * kj[e];
      }
      m.at(i, j) = std::clamp(dot / (na[i] * nb[j]), -1.0, 1.0);
    }
  }
  return m;
}

template <typename T>
double MaxRelativeDelta(const Tensor<T>& a, const Tensor<T>& reference) {
  if (a.shape() != reference.shape()) {
    throw DimensionError("delta: shape " + a.shape().ToString() + " vs " +
                         reference.shape().ToString());
  }
  double max_diff = 0.0;
  double max_ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = static_cast<double>(reference.data()[i]);
    max_diff = std::max(max_diff, std::fabs(static_cast<double>(a.data()[i]) - r));
    max_ref = std::max(max_ref, std::fabs(r));
  }
  return max_diff / std::max(max_ref, std::numeric_limits<double>::min());
}

#define CONVSHATTER_INSTANTIATE_OPS(T)                                        \
  template Tensor<T> Conv2d(const Tensor<T>&, const KernelSet<T>&,            \
                            const ConvGeometry&, bool, MacCounter*);          \
  template Tensor<T> PermuteChannels(const Tensor<T>&, const Permutation&);   \
  template KernelSet<T> PermuteKernelInputs(const KernelSet<T>&,              \
                                            const Permutation&);              \
  template KernelSet<T> PermuteKernelOutputs(const KernelSet<T>&,             \
                                             const Permutation&);             \
  template Tensor<T> Relu(const Tensor<T>&);                                  \
  template Tensor<T> MaxPool2d(const Tensor<T>&, std::size_t, std::size_t);   \
  template Tensor<T> Flatten(const Tensor<T>&);                               \
  template Tensor<T> Add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Subtract(const Tensor<T>&, const Tensor<T>&);            \
  template std::vector<KernelStats> KernelStatistics(const KernelSet<T>&);    \
  template Matrix CosineMatrix(const KernelSet<T>&, const KernelSet<T>&);     \
  template double MaxRelativeDelta(const Tensor<T>&, const Tensor<T>&);

CONVSHATTER_INSTANTIATE_OPS(float)
CONVSHATTER_INSTANTIATE_OPS(double)
#undef CONVSHATTER_INSTANTIATE_OPS

template Tensor<double> CastTensor(const Tensor<float>&);
template Tensor<float> CastTensor(const Tensor<double>&);
template Tensor<float> CastTensor(const Tensor<float>&);
template Tensor<double> CastTensor(const Tensor<double>&);
template KernelSet<double> CastKernels(const KernelSet<float>&);
template KernelSet<float> CastKernels(const KernelSet<float>&);
template KernelSet<double> CastKernels(const KernelSet<double>&);
template KernelSet<float> CastKernels(const KernelSet<double>&);

}  // namespace convshatter
