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

#include "convshatter/toy_models.h"

#include <cmath>

namespace convshatter {

template <typename T>
KernelSet<T> RandomKernels(std::size_t c_out, std::size_t c_in, std::size_t k_h,
                           std::size_t k_w, SeededRng& rng) {
  KernelSet<T> k(c_out, c_in, k_h, k_w);
  const double fan_in = static_cast<double>(c_in * k_h * k_w);
  const double sigma = std::sqrt(2.0 / fan_in);
  for (std::size_t o = 0; o < c_out; ++o) {
    const double scale = std::exp(0.3 * rng.Normal());
    for (T& w : k.kernel(o)) w = static_cast<T>(sigma * scale * rng.Normal());
    k.bias()[o] = static_cast<T>(0.1 * rng.Normal());
  }
  return k;
}

template <typename T>
ModelDescriptor<T> MakeToyModel(const ToyModelSpec& spec, std::uint64_t seed) {
  SeededRng rng(seed, StreamId(0, StreamPurpose::kModel));
  ModelDescriptor<T> model;
  model.name = "toy-" + std::to_string(seed);
  model.input_shape = Shape4{spec.batch, spec.input_channels, spec.spatial,
                             spec.spatial};
  model.class_count = spec.classes;
  std::size_t channels = spec.input_channels;
  std::size_t extent = spec.spatial;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    model.layers.push_back(LayerDescriptor<T>::Conv(
        RandomKernels<T>(spec.channels[i], channels, 3, 3, rng),
        ConvGeometry{1, 1}));
    model.layers.push_back(LayerDescriptor<T>::Relu());
    channels = spec.channels[i];
    if (spec.pooling && i % 2 == 1 && extent >= 4) {
      model.layers.push_back(LayerDescriptor<T>::MaxPool(2, 2));
      extent /= 2;
    }
  }
  model.layers.push_back(LayerDescriptor<T>::Flatten());
  model.layers.push_back(LayerDescriptor<T>::Dense(
      RandomKernels<T>(spec.classes, channels * extent * extent, 1, 1, rng)));
  return model;
}

ToyModelSpec RandomToySpec(std::uint64_t seed) {
  SeededRng rng(seed, StreamId(1, StreamPurpose::kModel));
  ToyModelSpec spec;
  const std::size_t convs = 2 + rng.Below(3);
  spec.channels.clear();
  for (std::size_t i = 0; i < convs; ++i) spec.channels.push_back(2 + rng.Below(15));
  spec.input_channels = 1 + rng.Below(4);
  spec.spatial = 4 + rng.Below(13);
  spec.classes = 2 + rng.Below(9);
  spec.pooling = rng.Below(2) == 1;
  return spec;
}

template KernelSet<float> RandomKernels(std::size_t, std::size_t, std::size_t,
                                        std::size_t, SeededRng&);
template KernelSet<double> RandomKernels(std::size_t, std::size_t, std::size_t,
                                         std::size_t, SeededRng&);
template ModelDescriptor<float> MakeToyModel(const ToyModelSpec&, std::uint64_t);
template ModelDescriptor<double> MakeToyModel(const ToyModelSpec&, std::uint64_t);

}  // namespace convshatter
