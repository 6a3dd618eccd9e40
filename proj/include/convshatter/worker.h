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

#ifndef CONVSHATTER_WORKER_H_
#define CONVSHATTER_WORKER_H_

#include <atomic>
#include <cstdint>
#include <span>

#include "convshatter/bundle.h"
#include "convshatter/ops.h"
#include "convshatter/serialization.h"
#include "convshatter/wire.h"

namespace convshatter {

// Multiply-accumulate counts for one layer, padding taps excluded.
struct FlopReport {
  std::uint64_t baseline_macs = 0;
  std::uint64_t obfuscated_macs = 0;

  std::uint64_t baseline_flops() const { return 2 * baseline_macs; }
  std::uint64_t obfuscated_flops() const { return 2 * obfuscated_macs; }
  double ratio() const {
    return baseline_macs == 0 ? 1.0
                              : static_cast<double>(obfuscated_macs) /
                                    static_cast<double>(baseline_macs);
  }
};

// MACs of a direct conv over `input` with `kernel_count` kernels of shape
// kernel_shape (c_out ignored), counting only taps inside the image.
std::uint64_t AnalyticConvMacs(const Shape4& input, const Shape4& kernel_shape,
                               std::size_t kernel_count,
                               const ConvGeometry& geometry);

// Untrusted side. Its only state is the public bundle (plus a MAC counter).
template <typename T>
class Worker {
 public:
  explicit Worker(ObfuscatedBundle<T> bundle);
  // Throws like DeserializeBundle.
  static Worker FromBytes(std::span<const std::uint8_t> bundle_bytes);

  const ObfuscatedBundle<T>& bundle() const { return bundle_; }

  // C_spec and C_aux for one masked input. Throws ProtocolError for an
  // unknown or unprotected layer and DimensionError on shape mismatch.
  LayerResult<T> ExecuteProtected(const LayerJob<T>& job) const;

  // Plain forward of one unprotected layer.
  Tensor<T> ExecutePlain(std::size_t layer_id, const Tensor<T>& input) const;

  // Analytic counts for the batch size of the bundle's input shape.
  FlopReport Report(std::size_t layer_id) const;

  // Decodes one request, runs it and encodes the reply. Failures come back
  // as an encoded WireError.
  Bytes Handle(std::span<const std::uint8_t> request) const;

  // MACs executed by conv so far (instrumented count).
  std::uint64_t executed_macs() const { return macs_.load(); }

 private:
  ObfuscatedBundle<T> bundle_;
  std::vector<Shape4> shapes_;
  mutable std::atomic<std::uint64_t> macs_{0};
};

}  // namespace convshatter

#endif  // CONVSHATTER_WORKER_H_
