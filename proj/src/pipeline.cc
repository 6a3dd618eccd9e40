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

#include "convshatter/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>

#include "convshatter/error.h"
#include "convshatter/obfuscator.h"
#include "convshatter/ops.h"
#include "convshatter/rng.h"
#include "convshatter/serialization.h"
#include "convshatter/wire.h"
#include "convshatter/worker.h"

namespace convshatter {
namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T, typename Reply>
Reply Call(Transport& transport, const WireMessage<T>& request) {
  const Bytes reply_bytes = transport.Exchange(EncodeMessage<T>(request));
  WireMessage<T> reply = DecodeMessage<T>(reply_bytes);
  if (const auto* error = std::get_if<WireError>(&reply)) RaiseWireError(*error);
  auto* typed = std::get_if<Reply>(&reply);
  if (typed == nullptr) throw ProtocolError("unexpected reply type from worker");
  return std::move(*typed);
}

}  // namespace

std::string_view LayerModeName(LayerMode mode) {
  switch (mode) {
    case LayerMode::kPlain:
      return "plain";
    case LayerMode::kProtected:
      return "protected";
    case LayerMode::kEnclave:
      return "enclave";
  }
  return "plain";
}

void WriteTraceTsv(std::ostream& out, const InferenceTrace& trace) {
  out << "layer\tmode\tbytes\tflop_ratio\tdelta\n";
  for (const auto& row : trace.layers) {
    out << row.layer_id << '\t' << LayerModeName(row.mode) << '\t' << row.bytes
        << '\t' << std::fixed << std::setprecision(6) << row.flop_ratio << '\t';
    if (row.delta) {
      out << std::scientific << std::setprecision(3) << *row.delta;
    } else {
      out << '-';
    }
    out << std::defaultfloat << '\n';
  }
}

template <typename T>
std::vector<Tensor<T>> RunBaselineLayers(const ModelDescriptor<T>& model,
                                         const Tensor<T>& input) {
  if (input.shape() != model.input_shape) {
    throw DimensionError("model expects input " + model.input_shape.ToString() +
                         ", got " + input.shape().ToString());
  }
  std::vector<Tensor<T>> outputs;
  outputs.reserve(model.layers.size());
  const Tensor<T>* x = &input;
  for (const auto& layer : model.layers) {
    outputs.push_back(ApplyLayer(layer, *x));
    x = &outputs.back();
  }
  return outputs;
}

template <typename T>
Tensor<T> RunBaseline(const ModelDescriptor<T>& model, const Tensor<T>& input) {
  if (input.shape() != model.input_shape) {
    throw DimensionError("model expects input " + model.input_shape.ToString() +
                         ", got " + input.shape().ToString());
  }
  Tensor<T> x = input;
  for (const auto& layer : model.layers) x = ApplyLayer(layer, x);
  return x;
}

template <typename T>
std::vector<double> FlopRatios(const ObfuscatedBundle<T>& bundle) {
  const Worker<T> worker(bundle);
  std::vector<double> out;
  for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
    out.push_back(worker.Report(i).ratio());
  }
  return out;
}

template <typename T>
SecureResult<T> RunSecure(const ObfuscatedBundle<T>& bundle, Enclave<T>& enclave,
                          Transport& transport, const Tensor<T>& input,
                          const ModelDescriptor<T>* reference) {
  enclave.VerifyBundle(bundle);
  if (input.shape() != bundle.input_shape) {
    throw DimensionError("bundle expects input " + bundle.input_shape.ToString() +
                         ", got " + input.shape().ToString());
  }
  std::vector<Tensor<T>> expected;
  if (reference != nullptr) expected = RunBaselineLayers(*reference, input);
  const std::vector<double> ratios = FlopRatios(bundle);

  SecureResult<T> result;
  InferenceTrace& trace = result.trace;
  Tensor<T> x = input;
  std::uint64_t plain_job = 0;
  std::size_t i = 0;
  while (i < bundle.layers.size()) {
    const auto start = Clock::now();
    const std::uint64_t bytes_before = transport.total_bytes();
    if (bundle.IsProtected(i)) {
      if (!enclave.IsProtected(i)) {
        throw ProtocolError("enclave holds no secrets for layer " + std::to_string(i));
      }
      const LayerJob<T> job = enclave.PrepareInput(i, x);
      const auto reply = Call<T, LayerResult<T>>(transport, job);
      x = enclave.Reconstruct(i, reply);
      const std::size_t end = enclave.StageEnd(i);
      const bool blinded = enclave.BlindsOutput(i);
      LayerTrace row;
      row.layer_id = i;
      row.mode = LayerMode::kProtected;
      row.seconds = SecondsSince(start);
      row.bytes = transport.total_bytes() - bytes_before;
      row.flop_ratio = ratios[i];
      row.mask_id = enclave.LastMask(i);
      trace.layers.push_back(row);
      for (std::size_t e = i + 1; e < end; ++e) {
        LayerTrace inner;
        inner.layer_id = e;
        inner.mode = LayerMode::kEnclave;
        inner.flop_ratio = ratios[e];
        trace.layers.push_back(inner);
      }
      if (!expected.empty() && !blinded) {
        trace.layers.back().delta = MaxRelativeDelta(x, expected[end - 1]);
      }
      i = end;
    } else {
      PlainRequest<T> request;
      request.job_id = ++plain_job;
      request.layer_id = i;
      request.input = std::move(x);
      auto reply = Call<T, PlainResponse<T>>(transport, request);
      if (reply.layer_id != i || reply.job_id != request.job_id) {
        throw ProtocolError("plain reply does not match request for layer " +
                            std::to_string(i));
      }
      x = std::move(reply.output);
      LayerTrace row;
      row.layer_id = i;
      row.mode = LayerMode::kPlain;
      row.seconds = SecondsSince(start);
      row.bytes = transport.total_bytes() - bytes_before;
      row.flop_ratio = ratios[i];
      if (!expected.empty()) row.delta = MaxRelativeDelta(x, expected[i]);
      trace.layers.push_back(row);
      ++i;
    }
  }
  for (const auto& row : trace.layers) trace.transport_bytes += row.bytes;
  if (!expected.empty()) trace.final_delta = MaxRelativeDelta(x, expected.back());
  result.output = std::move(x);
  return result;
}

template <typename T>
Tensor<T> RandomInput(const Shape4& shape, std::uint64_t seed) {
  SeededRng rng(seed, StreamId(0, StreamPurpose::kInputs));
  Tensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(rng.Normal());
  return t;
}

template <typename T>
BatchVerifyReport BatchVerify(const ModelDescriptor<T>& model,
                              const ObfuscationConfig& cfg,
                              const BatchVerifyOptions& options) {
  if (options.trials == 0) throw ConfigError("trials must be >= 1");
  BatchVerifyReport report;
  for (std::size_t t = 0; t < options.trials; ++t) {
    ObfuscationConfig trial_cfg = cfg;
    trial_cfg.seed = cfg.seed + t;
    auto [bundle, secrets] = ObfuscateModel(model, trial_cfg);
    Enclave<T> enclave(std::move(secrets), trial_cfg.reuse, trial_cfg.seed);
    const Worker<T> worker(bundle);
    InProcessTransport transport(
        [&worker](std::span<const std::uint8_t> request) { return worker.Handle(request); });
    const Tensor<T> input = options.zero_input
                                ? Tensor<T>(model.input_shape)
                                : RandomInput<T>(model.input_shape, options.input_seed + t);
    const Tensor<T> expected = RunBaseline(model, input);
    const Tensor<T> secure = RunSecure(bundle, enclave, transport, input).output;
    report.max_relative_delta =
        std::max(report.max_relative_delta, MaxRelativeDelta(secure, expected));
    for (std::size_t k = 0; k < secure.size(); ++k) {
      report.max_absolute_delta = std::max(
          report.max_absolute_delta,
          std::fabs(static_cast<double>(secure.data()[k]) -
                    static_cast<double>(expected.data()[k])));
    }
    const auto a = ArgmaxPerSample(secure);
    const auto b = ArgmaxPerSample(expected);
    for (std::size_t n = 0; n < a.size(); ++n) {
      ++report.argmax_comparisons;
      if (a[n] == b[n]) ++report.argmax_agreements;
    }
    ++report.trials;
  }
  return report;
}

#define CONVSHATTER_INSTANTIATE(T)                                             \
  template Tensor<T> RunBaseline(const ModelDescriptor<T>&, const Tensor<T>&); \
  template std::vector<Tensor<T>> RunBaselineLayers(const ModelDescriptor<T>&, \
                                                    const Tensor<T>&);         \
  template std::vector<double> FlopRatios(const ObfuscatedBundle<T>&);         \
  template SecureResult<T> RunSecure(const ObfuscatedBundle<T>&, Enclave<T>&,  \
                                     Transport&, const Tensor<T>&,             \
                                     const ModelDescriptor<T>*);               \
  template Tensor<T> RandomInput<T>(const Shape4&, std::uint64_t);             \
  template BatchVerifyReport BatchVerify(const ModelDescriptor<T>&,            \
                                         const ObfuscationConfig&,             \
                                         const BatchVerifyOptions&);

CONVSHATTER_INSTANTIATE(float)
CONVSHATTER_INSTANTIATE(double)

#undef CONVSHATTER_INSTANTIATE

}  // namespace convshatter
