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

#ifndef CONVSHATTER_BUNDLE_H_
#define CONVSHATTER_BUNDLE_H_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "convshatter/digest.h"
#include "convshatter/model.h"
#include "convshatter/tensor.h"

namespace convshatter {

// Public artifact for one protected layer. Neither kernel set carries a bias.
template <typename T>
struct ObfuscatedLayer {
  LayerKind kind = LayerKind::kConv;  // conv or dense
  // Damaged kernels, one per original output kernel, in public (sigma) order.
  KernelSet<T> damaged;
  // Patch bases and decoys, k_total of them, in tau-shuffled order.
  KernelSet<T> auxiliary;
  ConvGeometry geometry;
  // Opaque handles of the sealed noise tensors, one per mask-pool entry.
  std::vector<std::string> noise_refs;

  std::size_t c_out() const { return damaged.c_out(); }
  std::size_t k_total() const { return auxiliary.c_out(); }

  friend bool operator==(const ObfuscatedLayer&,
                         const ObfuscatedLayer&) = default;
};

template <typename T>
using BundleLayer = std::variant<LayerDescriptor<T>, ObfuscatedLayer<T>>;

template <typename T>
LayerKind KindOf(const BundleLayer<T>& layer) {
  return std::visit([](const auto& l) { return l.kind; }, layer);
}

// Everything the untrusted worker receives.
template <typename T>
struct ObfuscatedBundle {
  std::string name;
  Shape4 input_shape;
  std::size_t class_count = 0;
  std::uint32_t format_version = kFormatVersion;
  std::vector<BundleLayer<T>> layers;

  bool IsProtected(std::size_t layer_id) const {
    return layer_id < layers.size() &&
           std::holds_alternative<ObfuscatedLayer<T>>(layers[layer_id]);
  }

  friend bool operator==(const ObfuscatedBundle&,
                         const ObfuscatedBundle&) = default;
};

// Recovery state for one protected layer. Lives only inside the enclave.
template <typename T>
struct SealedLayer {
  std::size_t layer_id = 0;
  // Shared form: k_pub values. Per-output form: c_out rows of k_pub values,
  // row o belonging to original output kernel o.
  std::vector<T> coefficients;
  bool per_output_coefficients = false;
  Permutation input_perm;   // applied to input channels
  Permutation output_perm;  // public position r holds original kernel [r]
  Permutation aux_perm;     // public position p holds generated kernel [p]
  // real_positions[j]: public auxiliary position of patch basis j.
  std::vector<std::uint32_t> real_positions;
  std::vector<T> bias;  // original order
  std::vector<Tensor<T>> masks;
  // noise[e]: conv of masks[e] with the full shuffled kernels, public order.
  std::vector<Tensor<T>> noise;
  // Per-channel positive scale applied to the stage output; empty if off.
  std::vector<T> output_scale;
  // Non-linear layers executed in the enclave after reconstruction.
  std::vector<LayerDescriptor<T>> epilogue;
  Shape4 input_shape;
  Shape4 output_shape;  // of the linear op
  Digest layer_digest{};

  std::size_t k_pub() const { return real_positions.size(); }

  friend bool operator==(const SealedLayer&, const SealedLayer&) = default;
};

template <typename T>
struct SealedSecrets {
  Digest bundle_digest{};
  std::vector<SealedLayer<T>> layers;

  const SealedLayer<T>* Find(std::size_t layer_id) const {
    for (const auto& l : layers) {
      if (l.layer_id == layer_id) return &l;
    }
    return nullptr;
  }

  friend bool operator==(const SealedSecrets&, const SealedSecrets&) = default;
};

// Ships every layer verbatim (nothing protected).
template <typename T>
ObfuscatedBundle<T> MakePlainBundle(const ModelDescriptor<T>& model);

// Output shapes per bundle layer, same layout as InferShapes.
template <typename T>
std::vector<Shape4> InferShapes(const ObfuscatedBundle<T>& bundle);

}  // namespace convshatter

#endif  // CONVSHATTER_BUNDLE_H_
