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

#include "convshatter/worker.h"

#include "convshatter/error.h"

namespace convshatter {
namespace {

// Number of (output position, tap) pairs along one axis that land inside
// the unpadded input.
std::uint64_t ValidTaps(std::size_t input, std::size_t kernel,
                        const ConvGeometry& g) {
  const std::size_t out = g.OutputExtent(input, kernel);
  std::uint64_t taps = 0;
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const std::size_t pos = o * g.stride + k;
      if (pos >= g.padding && pos - g.padding < input) ++taps;
    }
  }
  return taps;
}

}  // namespace

std::uint64_t AnalyticConvMacs(const Shape4& input, const Shape4& kernel_shape,
                               std::size_t kernel_count,
                               const ConvGeometry& geometry) {
  return static_cast<std::uint64_t>(input.n) * kernel_count * kernel_shape.c *
         ValidTaps(input.h, kernel_shape.h, geometry) *
         ValidTaps(input.w, kernel_shape.w, geometry);
}

template <typename T>
Worker<T>::Worker(ObfuscatedBundle<T> bundle)
    : bundle_(std::move(bundle)), shapes_(InferShapes(bundle_)) {}

template <typename T>
Worker<T> Worker<T>::FromBytes(std::span<const std::uint8_t> bundle_bytes) {
  return Worker(DeserializeBundle<T>(bundle_bytes));
}

template <typename T>
LayerResult<T> Worker<T>::ExecuteProtected(const LayerJob<T>& job) const {
  if (!bundle_.IsProtected(job.layer_id)) {
    throw ProtocolError("layer " + std::to_string(job.layer_id) +
                        " is not a protected layer");
  }
  const auto& layer = std::get<ObfuscatedLayer<T>>(bundle_.layers[job.layer_id]);
  MacCounter counter;
  LayerResult<T> result;
  result.job_id = job.job_id;
  result.layer_id = job.layer_id;
  result.spec = Conv2d(job.input, layer.damaged, layer.geometry, false, &counter);
  // Auxiliary maps are computed once per job and shared by every output
  // channel; decoys are executed like real bases.
  result.aux = Conv2d(job.input, layer.auxiliary, layer.geometry, false, &counter);
  macs_ += counter.macs;
  return result;
}

template <typename T>
Tensor<T> Worker<T>::ExecutePlain(std::size_t layer_id,
                                  const Tensor<T>& input) const {
  if (layer_id >= bundle_.layers.size() || bundle_.IsProtected(layer_id)) {
    throw ProtocolError("layer " + std::to_string(layer_id) +
                        " is not a plain layer");
  }
  MacCounter counter;
  Tensor<T> out =
      ApplyLayer(std::get<LayerDescriptor<T>>(bundle_.layers[layer_id]), input,
                 &counter);
  macs_ += counter.macs;
  return out;
}

template <typename T>
FlopReport Worker<T>::Report(std::size_t layer_id) const {
  if (layer_id >= bundle_.layers.size()) {
    throw ProtocolError("unknown layer " + std::to_string(layer_id));
  }
  FlopReport report;
  const Shape4& input = shapes_[layer_id];
  if (const auto* obf = std::get_if<ObfuscatedLayer<T>>(&bundle_.layers[layer_id])) {
    const Shape4& k = obf->damaged.shape();
    report.baseline_macs = AnalyticConvMacs(input, k, obf->c_out(), obf->geometry);
    report.obfuscated_macs = AnalyticConvMacs(
        input, k, obf->c_out() + obf->k_total(), obf->geometry);
  } else {
    const auto& plain = std::get<LayerDescriptor<T>>(bundle_.layers[layer_id]);
    if (IsLinear(plain.kind)) {
      report.baseline_macs = AnalyticConvMacs(input, plain.kernels.shape(),
                                              plain.kernels.c_out(),
                                              plain.geometry);
    }
    report.obfuscated_macs = report.baseline_macs;
  }
  return report;
}

template <typename T>
Bytes Worker<T>::Handle(std::span<const std::uint8_t> request) const {
  try {
    WireMessage<T> message = DecodeMessage<T>(request);
    if (const auto* job = std::get_if<LayerJob<T>>(&message)) {
      return EncodeMessage<T>(ExecuteProtected(*job));
    }
    if (const auto* plain = std::get_if<PlainRequest<T>>(&message)) {
      PlainResponse<T> response;
      response.job_id = plain->job_id;
      response.layer_id = plain->layer_id;
      response.output = ExecutePlain(plain->layer_id, plain->input);
      return EncodeMessage<T>(response);
    }
    throw ProtocolError("worker received a reply-type message");
  } catch (const std::exception& e) {
    return EncodeMessage<T>(ToWireError(e));
  }
}

template class Worker<float>;
template class Worker<double>;

}  // namespace convshatter
