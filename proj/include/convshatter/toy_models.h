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

#ifndef CONVSHATTER_TOY_MODELS_H_
#define CONVSHATTER_TOY_MODELS_H_

#include <cstdint>
#include <vector>

#include "convshatter/model.h"
#include "convshatter/rng.h"

namespace convshatter {

// conv(3x3, pad 1) + relu blocks, a 2x2 max pool after every second block
// while the map is at least 4 wide, then flatten and a dense classifier.
struct ToyModelSpec {
  std::vector<std::size_t> channels = {8, 16, 16};  // conv output channels
  std::size_t input_channels = 3;
  std::size_t spatial = 8;
  std::size_t batch = 1;
  std::size_t classes = 10;
  bool pooling = true;
};

// Kaiming-normal weights times a log-normal per-kernel scale, small bias.
template <typename T>
KernelSet<T> RandomKernels(std::size_t c_out, std::size_t c_in, std::size_t k_h,
                           std::size_t k_w, SeededRng& rng);

template <typename T>
ModelDescriptor<T> MakeToyModel(const ToyModelSpec& spec, std::uint64_t seed);

// 2-4 conv layers, 2-16 channels, 4x4 to 16x16 inputs, chosen from the seed.
ToyModelSpec RandomToySpec(std::uint64_t seed);

}  // namespace convshatter

#endif  // CONVSHATTER_TOY_MODELS_H_
