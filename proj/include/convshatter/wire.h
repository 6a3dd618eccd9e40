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

#ifndef CONVSHATTER_WIRE_H_
#define CONVSHATTER_WIRE_H_

#include <cstdint>
#include <exception>
#include <span>
#include <string>
#include <variant>

#include "convshatter/serialization.h"
#include "convshatter/tensor.h"

namespace convshatter {

// Enclave -> worker: masked input of a protected layer.
template <typename T>
struct LayerJob {
  std::uint64_t job_id = 0;
  std::size_t layer_id = 0;
  Tensor<T> input;

  friend bool operator==(const LayerJob&, const LayerJob&) = default;
};

// Worker -> enclave: raw maps of every damaged and auxiliary kernel.
template <typename T>
struct LayerResult {
  std::uint64_t job_id = 0;
  std::size_t layer_id = 0;
  Tensor<T> spec;  // (n, c_out, h, w), damaged-kernel order
  Tensor<T> aux;   // (n, k_total, h, w), public auxiliary order

  friend bool operator==(const LayerResult&, const LayerResult&) = default;
};

// Orchestrator -> worker: run an unprotected layer.
template <typename T>
struct PlainRequest {
  std::uint64_t job_id = 0;
  std::size_t layer_id = 0;
  Tensor<T> input;

  friend bool operator==(const PlainRequest&, const PlainRequest&) = default;
};

template <typename T>
struct PlainResponse {
  std::uint64_t job_id = 0;
  std::size_t layer_id = 0;
  Tensor<T> output;

  friend bool operator==(const PlainResponse&, const PlainResponse&) = default;
};

// Failure reported by the worker; `category` selects the exception type.
struct WireError {
  std::string category;  // protocol, dimension, numeric, format
  std::string message;

  friend bool operator==(const WireError&, const WireError&) = default;
};

template <typename T>
using WireMessage = std::variant<LayerJob<T>, LayerResult<T>, PlainRequest<T>,
                                 PlainResponse<T>, WireError>;

template <typename T>
Bytes EncodeMessage(const WireMessage<T>& message);

// Throws FormatError / CorruptionError / IntegrityError on bad bytes.
template <typename T>
WireMessage<T> DecodeMessage(std::span<const std::uint8_t> bytes);

WireError ToWireError(const std::exception& error);
[[noreturn]] void RaiseWireError(const WireError& error);

}  // namespace convshatter

#endif  // CONVSHATTER_WIRE_H_
