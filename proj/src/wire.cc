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

#include "convshatter/wire.h"

#include "convshatter/error.h"

namespace convshatter {
namespace {

using nlohmann::json;

template <typename T>
void PutTensor(ContainerBuilder& out, const std::string& name,
               const Tensor<T>& t) {
  out.header()[name + "_shape"] = ShapeToJson(t.shape());
  out.AddTensor<T>(name, t.data());
}

template <typename T>
Tensor<T> GetTensor(const Container& in, const std::string& name) {
  const Shape4 shape = ShapeFromJson(RequireField(in.header(), name + "_shape"));
  return Tensor<T>(shape, in.ReadTensor<T>(name, shape.count()));
}

ContainerBuilder Start(const char* kind, std::uint64_t job_id,
                       std::size_t layer_id) {
  ContainerBuilder out(kind);
  out.header()["job_id"] = job_id;
  out.header()["layer_id"] = layer_id;
  return out;
}

template <typename M>
M Ids(const Container& in) {
  M m;
  const json& job = RequireField(in.header(), "job_id");
  const json& layer = RequireField(in.header(), "layer_id");
  if (!job.is_number_unsigned() || !layer.is_number_unsigned()) {
    throw FormatError("message ids must be unsigned integers");
  }
  m.job_id = job.get<std::uint64_t>();
  m.layer_id = layer.get<std::size_t>();
  return m;
}

}  // namespace

template <typename T>
Bytes EncodeMessage(const WireMessage<T>& message) {
  return std::visit(
      [](const auto& m) -> Bytes {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LayerJob<T>>) {
          auto out = Start("job", m.job_id, m.layer_id);
          PutTensor(out, "input", m.input);
          return out.Finish();
        } else if constexpr (std::is_same_v<M, LayerResult<T>>) {
          auto out = Start("result", m.job_id, m.layer_id);
          PutTensor(out, "spec", m.spec);
          PutTensor(out, "aux", m.aux);
          return out.Finish();
        } else if constexpr (std::is_same_v<M, PlainRequest<T>>) {
          auto out = Start("plain_request", m.job_id, m.layer_id);
          PutTensor(out, "input", m.input);
          return out.Finish();
        } else if constexpr (std::is_same_v<M, PlainResponse<T>>) {
          auto out = Start("plain_response", m.job_id, m.layer_id);
          PutTensor(out, "output", m.output);
          return out.Finish();
        } else {
          ContainerBuilder out("error");
          out.header()["category"] = m.category;
          out.header()["message"] = m.message;
          return out.Finish();
        }
      },
      message);
}

template <typename T>
WireMessage<T> DecodeMessage(std::span<const std::uint8_t> bytes) {
  const Container in = Container::Parse(bytes);
  const std::string kind = in.kind();
  if (kind == "job") {
    auto m = Ids<LayerJob<T>>(in);
    m.input = GetTensor<T>(in, "input");
    return m;
  }
  if (kind == "result") {
    auto m = Ids<LayerResult<T>>(in);
    m.spec = GetTensor<T>(in, "spec");
    m.aux = GetTensor<T>(in, "aux");
    return m;
  }
  if (kind == "plain_request") {
    auto m = Ids<PlainRequest<T>>(in);
    m.input = GetTensor<T>(in, "input");
    return m;
  }
  if (kind == "plain_response") {
    auto m = Ids<PlainResponse<T>>(in);
    m.output = GetTensor<T>(in, "output");
    return m;
  }
  if (kind == "error") {
    WireError e;
    e.category = RequireField(in.header(), "category").get<std::string>();
    e.message = RequireField(in.header(), "message").get<std::string>();
    return e;
  }
  throw FormatError("unknown message kind '" + kind + "'");
}

WireError ToWireError(const std::exception& error) {
  WireError out;
  out.message = error.what();
  if (dynamic_cast<const DimensionError*>(&error)) {
    out.category = "dimension";
  } else if (dynamic_cast<const NumericError*>(&error)) {
    out.category = "numeric";
  } else if (dynamic_cast<const FormatError*>(&error) ||
             dynamic_cast<const CorruptionError*>(&error) ||
             dynamic_cast<const IntegrityError*>(&error)) {
    out.category = "format";
  } else {
    out.category = "protocol";
  }
  return out;
}

void RaiseWireError(const WireError& error) {
  const std::string what = "worker: " + error.message;
  if (error.category == "dimension") throw DimensionError(what);
  if (error.category == "numeric") throw NumericError(what);
  if (error.category == "format") throw FormatError(what);
  throw ProtocolError(what);
}

template Bytes EncodeMessage(const WireMessage<float>&);
template Bytes EncodeMessage(const WireMessage<double>&);
template WireMessage<float> DecodeMessage<float>(std::span<const std::uint8_t>);
template WireMessage<double> DecodeMessage<double>(
    std::span<const std::uint8_t>);

}  // namespace convshatter
