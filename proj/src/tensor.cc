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

#include "convshatter/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "convshatter/error.h"
#include "convshatter/rng.h"

namespace convshatter {

std::string Shape4::ToString() const {
  std::ostringstream out;
  out << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, T fill)
    : shape_(shape), data_(shape.count(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.count()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.ToString());
  }
}

template <typename T>
std::span<T> Tensor<T>::plane(std::size_t n, std::size_t c) {
  const std::size_t area = shape_.h * shape_.w;
  return std::span<T>(data_).subspan((n * shape_.c + c) * area, area);
}

template <typename T>
std::span<const T> Tensor<T>::plane(std::size_t n, std::size_t c) const {
  const std::size_t area = shape_.h * shape_.w;
  return std::span<const T>(data_).subspan((n * shape_.c + c) * area, area);
}

template <typename T>
bool Tensor<T>::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
KernelSet<T>::KernelSet(std::size_t c_out, std::size_t c_in, std::size_t k_h,
                        std::size_t k_w)
    : shape_{c_out, c_in, k_h, k_w},
      weights_(shape_.count(), T{0}),
      bias_(c_out, T{0}) {}

template <typename T>
KernelSet<T>::KernelSet(Shape4 shape, std::vector<T> weights,
                        std::vector<T> bias)
    : shape_(shape), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (weights_.size() != shape_.count()) {
    throw DimensionError("kernel weights length " +
                         std::to_string(weights_.size()) +
                         " does not match shape " + shape_.ToString());
  }
  if (!bias_.empty() && bias_.size() != shape_.n) {
    throw DimensionError("bias length " + std::to_string(bias_.size()) +
                         " does not match c_out " + std::to_string(shape_.n));
  }
}

template <typename T>
std::span<T> KernelSet<T>::kernel(std::size_t o) {
  return std::span<T>(weights_).subspan(o * kernel_size(), kernel_size());
}

template <typename T>
std::span<const T> KernelSet<T>::kernel(std::size_t o) const {
  return std::span<const T>(weights_).subspan(o * kernel_size(),
                                              kernel_size());
}

template <typename T>
bool KernelSet<T>::AllFinite() const {
  auto finite = [](T v) { return std::isfinite(v); };
  return std::all_of(weights_.begin(), weights_.end(), finite) &&
         std::all_of(bias_.begin(), bias_.end(), finite);
}

template class Tensor<float>;
template class Tensor<double>;
template class KernelSet<float>;
template class KernelSet<double>;

std::size_t ConvGeometry::OutputExtent(std::size_t input,
                                       std::size_t kernel) const {
  if (stride == 0) return 0;
  const std::size_t padded = input + 2 * padding;
  if (padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

Shape4 ConvGeometry::OutputShape(const Shape4& input,
                                 const Shape4& kernels) const {
  if (stride == 0) throw DimensionError("stride must be >= 1");
  const std::size_t oh = OutputExtent(input.h, kernels.h);
  const std::size_t ow = OutputExtent(input.w, kernels.w);
  if (oh == 0 || ow == 0) {
    throw DimensionError("kernel " + kernels.ToString() +
                         " does not fit input " + input.ToString() +
                         " with padding " + std::to_string(padding));
  }
  return Shape4{input.n, kernels.n, oh, ow};
}

Permutation::Permutation(std::vector<std::uint32_t> map)
    : map_(std::move(map)) {
  std::vector<bool> seen(map_.size(), false);
  for (std::uint32_t v : map_) {
    if (v >= map_.size() || seen[v]) {
      throw PermutationError("permutation of size " +
                             std::to_string(map_.size()) +
                             " is not a bijection");
    }
    seen[v] = true;
  }
}

Permutation Permutation::Identity(std::size_t n) {
  std::vector<std::uint32_t> map(n);
  for (std::size_t i = 0; i < n; ++i) map[i] = static_cast<std::uint32_t>(i);
  return Permutation(std::move(map));
}

Permutation Permutation::Random(std::size_t n, SeededRng& rng) {
  std::vector<std::uint32_t> map(n);
  for (std::size_t i = 0; i < n; ++i) map[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(map[i - 1], map[rng.Below(i)]);
  }
  return Permutation(std::move(map));
}

Permutation Permutation::Inverse() const {
  std::vector<std::uint32_t> inverse(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) {
    inverse[map_[i]] = static_cast<std::uint32_t>(i);
  }
  return Permutation(std::move(inverse));
}

bool Permutation::IsIdentity() const {
  for (std::size_t i = 0; i < map_.size(); ++i) {
    if (map_[i] != i) return false;
  }
  return true;
}

}  // namespace convshatter
