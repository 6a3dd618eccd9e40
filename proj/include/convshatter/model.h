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

#ifndef CONVSHATTER_MODEL_H_
#define CONVSHATTER_MODEL_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "convshatter/ops.h"
#include "convshatter/tensor.h"

namespace convshatter {

enum class LayerKind { kConv, kActivation, kPooling, kFlatten, kDense };

enum class Activation { kRelu };

struct PoolSpec {
  std::size_t window = 2;
  std::size_t stride = 2;

  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

std::string_view LayerKindName(LayerKind kind);
// Throws FormatError on an unknown name.
LayerKind ParseLayerKind(std::string_view name);

// Conv and dense layers are the linear layers; dense is stored as a 1x1 conv
// over a (n, features, 1, 1) input.
inline bool IsLinear(LayerKind kind) {
  return kind == LayerKind::kConv || kind == LayerKind::kDense;
}

template <typename T>
struct LayerDescriptor {
  LayerKind kind = LayerKind::kConv;
  KernelSet<T> kernels;  // conv / dense only
  ConvGeometry geometry;
  Activation activation = Activation::kRelu;
  PoolSpec pool;
  bool protect = false;

  static LayerDescriptor Conv(KernelSet<T> kernels, ConvGeometry geometry,
                              bool protect = false);
  static LayerDescriptor Dense(KernelSet<T> kernels, bool protect = false);
  static LayerDescriptor Relu();
  static LayerDescriptor MaxPool(std::size_t window, std::size_t stride);
  static LayerDescriptor Flatten();

  friend bool operator==(const LayerDescriptor&,
                         const LayerDescriptor&) = default;
};

inline constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
struct ModelDescriptor {
  std::string name;
  Shape4 input_shape;
  std::size_t class_count = 0;
  std::uint32_t format_version = kFormatVersion;
  std::vector<LayerDescriptor<T>> layers;

  friend bool operator==(const ModelDescriptor&,
                         const ModelDescriptor&) = default;
};

// Output shape of one layer. Throws DimensionError when the input does not
// fit.
Shape4 LayerOutputShape(LayerKind kind, const Shape4& kernel_shape,
                        const ConvGeometry& geometry, const PoolSpec& pool,
                        const Shape4& input);

// shapes[i] is the input shape of layer i; shapes.back() is the model output.
template <typename T>
std::vector<Shape4> InferShapes(const ModelDescriptor<T>& model);

// Checks every structural invariant; throws FormatError with the reason.
template <typename T>
void ValidateModel(const ModelDescriptor<T>& model);

// Plaintext forward of a single layer.
template <typename T>
Tensor<T> ApplyLayer(const LayerDescriptor<T>& layer, const Tensor<T>& input,
                     MacCounter* counter = nullptr);

// Index one past the last layer belonging to the stage that starts at
// `start`: a linear layer plus the non-linear layers that follow it up to the
// next linear layer.
template <typename Layers>
std::size_t StageEnd(const Layers& layers, std::size_t start,
                     auto&& kind_of) {
  std::size_t end = start + 1;
  while (end < layers.size() && !IsLinear(kind_of(layers[end]))) ++end;
  return end;
}

// Ordinals of the linear layers, i.e. the indices a layer selector refers to.
template <typename T>
std::vector<std::size_t> LinearLayerIndices(const ModelDescriptor<T>& model);

// argmax over the flattened per-sample output, one entry per batch item.
template <typename T>
std::vector<std::size_t> ArgmaxPerSample(const Tensor<T>& output);

template <typename To, typename From>
ModelDescriptor<To> CastModel(const ModelDescriptor<From>& model);

}  // namespace convshatter

#endif  // CONVSHATTER_MODEL_H_
