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

#ifndef CONVSHATTER_TENSOR_H_
#define CONVSHATTER_TENSOR_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace convshatter {

class SeededRng;

// Extents of a 4D tensor in NCHW order. For kernel sets the same struct is
// read as (c_out, c_in, k_h, k_w).
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const { return n * c * h * w; }
  std::array<std::size_t, 4> dims() const { return {n, c, h, w}; }
  std::string ToString() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

// Dense activation tensor, batch-major NCHW.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T{0});
  Tensor(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const { return shape_; }
  std::size_t batch() const { return shape_.n; }
  std::size_t channels() const { return shape_.c; }
  std::size_t height() const { return shape_.h; }
  std::size_t width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(n, c, y, x)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y,
              std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }

  // One (n, c) feature map as a contiguous h*w span.
  std::span<T> plane(std::size_t n, std::size_t c);
  std::span<const T> plane(std::size_t n, std::size_t c) const;

  bool AllFinite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::size_t n, std::size_t c, std::size_t y,
                     std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape4 shape_;
  std::vector<T> data_;
};

using FeatureTensor = Tensor<float>;

// One layer's kernels (c_out, c_in, k_h, k_w) and bias. An empty bias means
// the set carries no bias at all (used for publicly shipped obfuscated
// kernels); otherwise bias.size() == c_out.
template <typename T>
class KernelSet {
 public:
  using value_type = T;

  KernelSet() = default;
  KernelSet(std::size_t c_out, std::size_t c_in, std::size_t k_h,
            std::size_t k_w);
  KernelSet(Shape4 shape, std::vector<T> weights, std::vector<T> bias);

  std::size_t c_out() const { return shape_.n; }
  std::size_t c_in() const { return shape_.c; }
  std::size_t k_h() const { return shape_.h; }
  std::size_t k_w() const { return shape_.w; }
  // Entries per output kernel: c_in * k_h * k_w.
  std::size_t kernel_size() const { return shape_.c * shape_.h * shape_.w; }
  const Shape4& shape() const { return shape_; }

  std::span<T> weights() { return weights_; }
  std::span<const T> weights() const { return weights_; }
  std::vector<T>& bias() { return bias_; }
  const std::vector<T>& bias() const { return bias_; }
  bool has_bias() const { return !bias_.empty(); }

  std::span<T> kernel(std::size_t o);
  std::span<const T> kernel(std::size_t o) const;

  T& at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) {
    return weights_[((o * shape_.c + i) * shape_.h + y) * shape_.w + x];
  }
  const T& at(std::size_t o, std::size_t i, std::size_t y,
              std::size_t x) const {
    return weights_[((o * shape_.c + i) * shape_.h + y) * shape_.w + x];
  }

  bool AllFinite() const;

  friend bool operator==(const KernelSet&, const KernelSet&) = default;

 private:
  Shape4 shape_;
  std::vector<T> weights_;
  std::vector<T> bias_;
};

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;

  // Output extent along one axis, or 0 when the geometry does not fit.
  std::size_t OutputExtent(std::size_t input, std::size_t kernel) const;
  // Throws DimensionError unless both output extents are >= 1.
  Shape4 OutputShape(const Shape4& input, const Shape4& kernels) const;

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

// Bijection over [0, n). Convention: applying it to a sequence produces
// out[i] = in[map[i]].
class Permutation {
 public:
  Permutation() = default;
  // Throws PermutationError unless `map` is a bijection over [0, map.size()).
  explicit Permutation(std::vector<std::uint32_t> map);

  static Permutation Identity(std::size_t n);
  static Permutation Random(std::size_t n, SeededRng& rng);

  std::size_t size() const { return map_.size(); }
  std::uint32_t operator[](std::size_t i) const { return map_[i]; }
  const std::vector<std::uint32_t>& map() const { return map_; }
  Permutation Inverse() const;
  bool IsIdentity() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::uint32_t> map_;
};

// Small row-major real matrix for similarity analysis.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c) {}
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

}  // namespace convshatter

#endif  // CONVSHATTER_TENSOR_H_
