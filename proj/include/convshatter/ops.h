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

#ifndef CONVSHATTER_OPS_H_
#define CONVSHATTER_OPS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "convshatter/tensor.h"

namespace convshatter {

// Counts multiply-accumulates actually executed by conv2d.
struct MacCounter {
  std::uint64_t macs = 0;
};

// Direct 2D convolution (cross-correlation, zero padding).
//
//   y[n, o] = sum_i W[o, i] * x[n, i]  (+ b[o] when include_bias)
//
// Loops run input channel outermost, then kernel row, then kernel column.
// Every output is accumulated with ExactAccumulator, so the stored value is
// the correctly rounded exact sum and permuting the input channels of both
// operands yields bit-identical results.
//
// Throws DimensionError on shape mismatch and NumericError on non-finite
// inputs or weights.
template <typename T>
Tensor<T> Conv2d(const Tensor<T>& input, const KernelSet<T>& kernels,
                 const ConvGeometry& geometry, bool include_bias,
                 MacCounter* counter = nullptr);

// Output channel c holds input channel pi[c].
template <typename T>
Tensor<T> PermuteChannels(const Tensor<T>& t, const Permutation& pi);

// K'[o, i] = K[o, pi[i]].
template <typename T>
KernelSet<T> PermuteKernelInputs(const KernelSet<T>& k, const Permutation& pi);

// K'[o] = K[sigma[o]], bias reordered with it.
template <typename T>
KernelSet<T> PermuteKernelOutputs(const KernelSet<T>& k,
                                  const Permutation& sigma);

template <typename T>
Tensor<T> Relu(const Tensor<T>& t);

// Max pooling without padding.
template <typename T>
Tensor<T> MaxPool2d(const Tensor<T>& t, std::size_t window, std::size_t stride);

// (n, c, h, w) -> (n, c*h*w, 1, 1); data order is unchanged.
template <typename T>
Tensor<T> Flatten(const Tensor<T>& t);

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> Subtract(const Tensor<T>& a, const Tensor<T>& b);

template <typename To, typename From>
Tensor<To> CastTensor(const Tensor<From>& t);

template <typename To, typename From>
KernelSet<To> CastKernels(const KernelSet<From>& k);

struct KernelStats {
  double norm = 0.0;
  double variance = 0.0;  // population variance of the entries
  // Excess kurtosis; empty when the kernel is constant.
  std::optional<double> kurtosis;
};

KernelStats ComputeKernelStats(std::span<const double> entries);

// One entry per output kernel. Requires kernel_size() >= 2.
template <typename T>
std::vector<KernelStats> KernelStatistics(const KernelSet<T>& k);

// Pairwise cosine similarity between flattened output kernels of a and b.
// Throws DimensionError if kernel shapes differ and DegenerateKernelError on a
// zero-norm kernel.
template <typename T>
Matrix CosineMatrix(const KernelSet<T>& a, const KernelSet<T>& b);

// max |a - b| / max |reference|, with the denominator floored at the
// smallest normal double.
template <typename T>
double MaxRelativeDelta(const Tensor<T>& a, const Tensor<T>& reference);

}  // namespace convshatter

#endif  // CONVSHATTER_OPS_H_
