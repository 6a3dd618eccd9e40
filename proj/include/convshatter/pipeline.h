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

#ifndef CONVSHATTER_PIPELINE_H_
#define CONVSHATTER_PIPELINE_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "convshatter/bundle.h"
#include "convshatter/config.h"
#include "convshatter/enclave.h"
#include "convshatter/model.h"
#include "convshatter/transport.h"

namespace convshatter {

enum class LayerMode {
  kPlain,      // run by the worker in the clear
  kProtected,  // obfuscated layer: enclave + worker
  kEnclave,    // non-linear layer run inside the enclave after a protected one
};

std::string_view LayerModeName(LayerMode mode);

struct LayerTrace {
  std::size_t layer_id = 0;
  LayerMode mode = LayerMode::kPlain;
  double seconds = 0.0;
  std::uint64_t bytes = 0;  // request + reply bytes for this layer
  double flop_ratio = 1.0;
  std::optional<std::size_t> mask_id;
  // Max relative delta of this layer's output vs the baseline; only in
  // verify mode and only where the output is visible in the clear.
  std::optional<double> delta;
};

struct InferenceTrace {
  std::vector<LayerTrace> layers;
  std::uint64_t transport_bytes = 0;
  std::optional<double> final_delta;
};

// One row per layer: layer-id, mode, bytes, flop-ratio, delta ("-" if none).
void WriteTraceTsv(std::ostream& out, const InferenceTrace& trace);

template <typename T>
Tensor<T> RunBaseline(const ModelDescriptor<T>& model, const Tensor<T>& input);

// Output of every layer (index i holds the output of layer i).
template <typename T>
std::vector<Tensor<T>> RunBaselineLayers(const ModelDescriptor<T>& model,
                                         const Tensor<T>& input);

template <typename T>
struct SecureResult {
  Tensor<T> output;
  InferenceTrace trace;
};

// Per-layer FLOP ratios from the worker-side analytic model.
template <typename T>
std::vector<double> FlopRatios(const ObfuscatedBundle<T>& bundle);

// Secure forward. Verifies the enclave against `bundle` first, so a tampered
// bundle fails before any layer runs. `reference`, when given, turns on
// verify mode (per-layer deltas against the plaintext model).
template <typename T>
SecureResult<T> RunSecure(const ObfuscatedBundle<T>& bundle, Enclave<T>& enclave,
                          Transport& transport, const Tensor<T>& input,
                          const ModelDescriptor<T>* reference = nullptr);

struct BatchVerifyOptions {
  std::size_t trials = 1;
  bool zero_input = false;
  std::uint64_t input_seed = 0;
};

struct BatchVerifyReport {
  std::size_t trials = 0;
  std::size_t argmax_agreements = 0;
  std::size_t argmax_comparisons = 0;
  double max_relative_delta = 0.0;
  double max_absolute_delta = 0.0;

  double agreement_rate() const {
    return argmax_comparisons == 0
               ? 1.0
               : static_cast<double>(argmax_agreements) /
                     static_cast<double>(argmax_comparisons);
  }
};

// Trial t obfuscates with seed cfg.seed + t, draws a N(0, 1) input from
// stream (input_seed + t, kInputs) and compares secure vs baseline.
template <typename T>
BatchVerifyReport BatchVerify(const ModelDescriptor<T>& model,
                              const ObfuscationConfig& cfg,
                              const BatchVerifyOptions& options);

template <typename T>
Tensor<T> RandomInput(const Shape4& shape, std::uint64_t seed);

}  // namespace convshatter

#endif  // CONVSHATTER_PIPELINE_H_
