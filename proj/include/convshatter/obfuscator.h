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

#ifndef CONVSHATTER_OBFUSCATOR_H_
#define CONVSHATTER_OBFUSCATOR_H_

#include <cstddef>
#include <utility>
#include <vector>

#include "convshatter/bundle.h"
#include "convshatter/config.h"
#include "convshatter/model.h"
#include "convshatter/rng.h"

namespace convshatter {

// Target statistics for decoy shaping.
struct DecoyReference {
  std::vector<double> norms;  // ascending
  double median_variance = 0.0;
  double entry_sigma = 0.0;  // RMS of all entries

  template <typename T>
  static DecoyReference FromKernels(const KernelSet<T>& kernels);
};

// k_pub patch bases shaped like one kernel of `layer`, returned as a bias-free
// KernelSet with c_out = k_pub.
//
// orthogonalize: random N(0, 1) mixtures of the layer's kernels, made
// orthonormal by modified Gram-Schmidt (two passes) and scaled to the median
// kernel norm. Throws RankError if k_pub > c_out or the mixtures are rank
// deficient (including an all-zero layer).
// otherwise: i.i.d. N(0, s) entries with s the RMS entry of the layer.
template <typename T>
KernelSet<T> BuildPatchBases(const KernelSet<T>& layer, std::size_t k_pub,
                             SeededRng& rng, bool orthogonalize);

// k_fake decoys shaped like the bases.
//
// shaping on: a random N(0, 1) combination of the bases (raw N(0, 1) entries
// when there are none), rescaled to a norm resampled from reference.norms by
// inverse-CDF, then rescaled into [0.8, 1.2] x reference.median_variance if
// its variance falls outside that band.
// shaping off: i.i.d. N(0, reference.entry_sigma) entries.
template <typename T>
KernelSet<T> SynthesizeDecoys(const KernelSet<T>& bases,
                              const DecoyReference& reference,
                              std::size_t k_fake, const Shape4& kernel_shape,
                              SeededRng& rng, bool shaping);

template <typename T>
struct LayerObfuscation {
  ObfuscatedLayer<T> layer;
  SealedLayer<T> secrets;
};

// One protected layer, end to end: pi, channel shuffle, bases and decoys,
// tau, coefficients, damaged kernels, sigma, then the mask pool and its
// noise. Every draw comes from `rng`. input_shape is the layer's input.
// Throws ConfigError on a non-linear layer, c_out = 0 or k_pub above the cap.
template <typename T>
LayerObfuscation<T> ObfuscateLayer(const LayerDescriptor<T>& layer,
                                   const Shape4& input_shape,
                                   std::size_t layer_id,
                                   const ObfuscationConfig& cfg,
                                   SeededRng& rng);

// Whole model. Layer l draws from stream StreamId(l, kLayer), so the result
// does not depend on cfg.jobs.
template <typename T>
std::pair<ObfuscatedBundle<T>, SealedSecrets<T>> ObfuscateModel(
    const ModelDescriptor<T>& model, const ObfuscationConfig& cfg);

// Original-order kernels and bias rebuilt from the public layer and its
// secrets, computed in double: sigma^-1 and pi^-1 applied to W' + sum c K.
template <typename T>
KernelSet<double> RecoverKernels(const ObfuscatedLayer<T>& layer,
                                 const SealedLayer<T>& secrets);

// Coefficient c_j that multiplies basis j for public output position r.
template <typename T>
T CoefficientFor(const SealedLayer<T>& secrets, std::size_t public_row,
                 std::size_t basis);

}  // namespace convshatter

#endif  // CONVSHATTER_OBFUSCATOR_H_
