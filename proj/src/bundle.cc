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

#include "convshatter/bundle.h"

namespace convshatter {

template <typename T>
ObfuscatedBundle<T> MakePlainBundle(const ModelDescriptor<T>& model) {
  ObfuscatedBundle<T> bundle;
  bundle.name = model.name;
  bundle.input_shape = model.input_shape;
  bundle.class_count = model.class_count;
  bundle.format_version = model.format_version;
  for (const auto& layer : model.layers) {
    LayerDescriptor<T> copy = layer;
    copy.protect = false;
    bundle.layers.emplace_back(std::move(copy));
  }
  return bundle;
}

template <typename T>
std::vector<Shape4> InferShapes(const ObfuscatedBundle<T>& bundle) {
  std::vector<Shape4> shapes{bundle.input_shape};
  for (const auto& layer : bundle.layers) {
    if (const auto* obf = std::get_if<ObfuscatedLayer<T>>(&layer)) {
      shapes.push_back(LayerOutputShape(obf->kind, obf->damaged.shape(),
                                        obf->geometry, PoolSpec{},
                                        shapes.back()));
    } else {
      const auto& plain = std::get<LayerDescriptor<T>>(layer);
      shapes.push_back(LayerOutputShape(plain.kind, plain.kernels.shape(),
                                        plain.geometry, plain.pool,
                                        shapes.back()));
    }
  }
  return shapes;
}

template ObfuscatedBundle<float> MakePlainBundle(const ModelDescriptor<float>&);
template ObfuscatedBundle<double> MakePlainBundle(
    const ModelDescriptor<double>&);
template std::vector<Shape4> InferShapes(const ObfuscatedBundle<float>&);
template std::vector<Shape4> InferShapes(const ObfuscatedBundle<double>&);

}  // namespace convshatter
