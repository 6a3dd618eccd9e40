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

#include "convshatter/model.h"

#include <algorithm>

#include "convshatter/error.h"

namespace convshatter {

std::string_view LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv:
      return "conv";
    case LayerKind::kActivation:
      return "activation";
    case LayerKind::kPooling:
      return "pooling";
    case LayerKind::kFlatten:
      return "flatten";
    case LayerKind::kDense:
      return "dense";
  }
  return "unknown";
}

LayerKind ParseLayerKind(std::string_view name) {
  for (LayerKind kind : {LayerKind::kConv, LayerKind::kActivation,
                         LayerKind::kPooling, LayerKind::kFlatten,
                         LayerKind::kDense}) {
    if (LayerKindName(kind) == name) return kind;
  }
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

template <typename T>
LayerDescriptor<T> LayerDescriptor<T>::Conv(KernelSet<T> kernels,
                                            ConvGeometry geometry,
                                            bool protect) {
  LayerDescriptor d;
  d.kind = LayerKind::kConv;
  d.kernels = std::move(kernels);
  d.geometry = geometry;
  d.protect = protect;
  return d;
}

template <typename T>
LayerDescriptor<T> LayerDescriptor<T>::Dense(KernelSet<T> kernels,
                                             bool protect) {
  if (kernels.k_h() != 1 || kernels.k_w() != 1) {
    throw DimensionError("dense kernels must be 1x1, got " +
                         kernels.shape().ToString());
  }
  LayerDescriptor d;
  d.kind = LayerKind::kDense;
  d.kernels = std::move(kernels);
  d.geometry = ConvGeometry{1, 0};
  d.protect = protect;
  return d;
}

template <typename T>
LayerDescriptor<T> LayerDescriptor<T>::Relu() {
  LayerDescriptor d;
  d.kind = LayerKind::kActivation;
  d.activation = Activation::kRelu;
  return d;
}

template <typename T>
LayerDescriptor<T> LayerDescriptor<T>::MaxPool(std::size_t window,
                                               std::size_t stride) {
  LayerDescriptor d;
  d.kind = LayerKind::kPooling;
  d.pool = PoolSpec{window, stride};
  return d;
}

template <typename T>
LayerDescriptor<T> LayerDescriptor<T>::Flatten() {
  LayerDescriptor d;
  d.kind = LayerKind::kFlatten;
  return d;
}

Shape4 LayerOutputShape(LayerKind kind, const Shape4& kernel_shape,
                        const ConvGeometry& geometry, const PoolSpec& pool,
                        const Shape4& input) {
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kDense:
      if (input.c != kernel_shape.c) {
        throw DimensionError("layer expects " + std::to_string(kernel_shape.c) +
                             " input channels, got " + input.ToString());
      }
      if (kind == LayerKind::kDense && (input.h != 1 || input.w != 1)) {
        throw DimensionError("dense layer needs a flattened input, got " +
                             input.ToString());
      }
      return geometry.OutputShape(input, kernel_shape);
    case LayerKind::kActivation:
      return input;
    case LayerKind::kPooling:
      if (pool.window == 0 || pool.stride == 0 || input.h < pool.window ||
          input.w < pool.window) {
        throw DimensionError("pool window " + std::to_string(pool.window) +
                             " does not fit " + input.ToString());
      }
      return Shape4{input.n, input.c, (input.h - pool.window) / pool.stride + 1,
                    (input.w - pool.window) / pool.stride + 1};
    case LayerKind::kFlatten:
      return Shape4{input.n, input.c * input.h * input.w, 1, 1};
  }
  throw FormatError("unknown layer kind");
}

template <typename T>
std::vector<Shape4> InferShapes(const ModelDescriptor<T>& model) {
  std::vector<Shape4> shapes;
  shapes.reserve(model.layers.size() + 1);
  shapes.push_back(model.input_shape);
  for (const auto& layer : model.layers) {
    shapes.push_back(LayerOutputShape(layer.kind, layer.kernels.shape(),
                                      layer.geometry, layer.pool,
                                      shapes.back()));
  }
  return shapes;
}

template <typename T>
void ValidateModel(const ModelDescriptor<T>& model) {
  if (model.format_version != kFormatVersion) {
    throw FormatError("unsupported model format version " +
                      std::to_string(model.format_version));
  }
  if (model.layers.empty()) throw FormatError("model has no layers");
  if (model.input_shape.count() == 0) {
    throw FormatError("model input shape " + model.input_shape.ToString() +
                      " is empty");
  }
  bool has_linear = false;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    if (IsLinear(layer.kind)) {
      has_linear = true;
      const auto& k = layer.kernels;
      if (k.c_out() == 0 || k.kernel_size() == 0) {
        throw FormatError("layer " + std::to_string(i) + " has empty kernels");
      }
      if (!k.has_bias()) {
        throw FormatError("layer " + std::to_string(i) + " has no bias");
      }
      if (!k.AllFinite()) {
        throw FormatError("layer " + std::to_string(i) +
                          " has non-finite weights");
      }
      if (layer.kind == LayerKind::kDense &&
          (k.k_h() != 1 || k.k_w() != 1)) {
        throw FormatError("dense layer " + std::to_string(i) +
                          " is not stored as 1x1");
      }
    } else if (layer.protect) {
      throw FormatError("layer " + std::to_string(i) +
                        " is flagged protected but is not linear");
    }
  }
  if (!has_linear) throw FormatError("model has no conv or dense layer");
  std::vector<Shape4> shapes;
  try {
    shapes = InferShapes(model);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("inconsistent layer shapes: ") + e.what());
  }
  const Shape4& out = shapes.back();
  if (model.class_count != 0 && out.c * out.h * out.w != model.class_count) {
    throw FormatError("model output " + out.ToString() +
                      " does not match class count " +
                      std::to_string(model.class_count));
  }
}

template <typename T>
Tensor<T> ApplyLayer(const LayerDescriptor<T>& layer, const Tensor<T>& input,
                     MacCounter* counter) {
  switch (layer.kind) {
    case LayerKind::kConv:
    case LayerKind::kDense:
      if (layer.kind == LayerKind::kDense &&
          (input.height() != 1 || input.width() != 1)) {
        throw DimensionError("dense layer needs a flattened input, got " +
                             input.shape().ToString());
      }
      return Conv2d(input, layer.kernels, layer.geometry, true, counter);
    case LayerKind::kActivation:
      return Relu(input);
    case LayerKind::kPooling:
      return MaxPool2d(input, layer.pool.window, layer.pool.stride);
    case LayerKind::kFlatten:
      return Flatten(input);
  }
  throw FormatError("unknown layer kind");
}

template <typename T>
std::vector<std::size_t> LinearLayerIndices(const ModelDescriptor<T>& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (IsLinear(model.layers[i].kind)) out.push_back(i);
  }
  return out;
}

template <typename T>
std::vector<std::size_t> ArgmaxPerSample(const Tensor<T>& output) {
  std::vector<std::size_t> out(output.batch());
  const std::size_t per = output.size() / std::max<std::size_t>(output.batch(), 1);
  for (std::size_t n = 0; n < output.batch(); ++n) {
    auto begin = output.data().begin() + n * per;
    out[n] = static_cast<std::size_t>(std::max_element(begin, begin + per) - begin);
  }
  return out;
}

template <typename To, typename From>
ModelDescriptor<To> CastModel(const ModelDescriptor<From>& model) {
  ModelDescriptor<To> out;
  out.name = model.name;
  out.input_shape = model.input_shape;
  out.class_count = model.class_count;
  out.format_version = model.format_version;
  for (const auto& layer : model.layers) {
    LayerDescriptor<To> d;
    d.kind = layer.kind;
    d.kernels = CastKernels<To>(layer.kernels);
    d.geometry = layer.geometry;
    d.activation = layer.activation;
    d.pool = layer.pool;
    d.protect = layer.protect;
    out.layers.push_back(std::move(d));
  }
  return out;
}

template struct LayerDescriptor<float>;
template struct LayerDescriptor<double>;
template std::vector<Shape4> InferShapes(const ModelDescriptor<float>&);
template std::vector<Shape4> InferShapes(const ModelDescriptor<double>&);
template void ValidateModel(const ModelDescriptor<float>&);
template void ValidateModel(const ModelDescriptor<double>&);
template Tensor<float> ApplyLayer(const LayerDescriptor<float>&,
                                  const Tensor<float>&, MacCounter*);
template Tensor<double> ApplyLayer(const LayerDescriptor<double>&,
                                   const Tensor<double>&, MacCounter*);
template std::vector<std::size_t> LinearLayerIndices(
    const ModelDescriptor<float>&);
template std::vector<std::size_t> LinearLayerIndices(
    const ModelDescriptor<double>&);
template std::vector<std::size_t> ArgmaxPerSample(const Tensor<float>&);
template std::vector<std::size_t> ArgmaxPerSample(const Tensor<double>&);
template ModelDescriptor<double> CastModel(const ModelDescriptor<float>&);
template ModelDescriptor<float> CastModel(const ModelDescriptor<double>&);

}  // namespace convshatter
