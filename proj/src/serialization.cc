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

#include "convshatter/serialization.h"

#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "convshatter/error.h"

namespace convshatter {
namespace {

using nlohmann::json;

template <typename T>
using UintOf = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
void AppendLittleEndian(Bytes& out, std::span<const T> values) {
  out.reserve(out.size() + values.size() * sizeof(T));
  for (T v : values) {
    auto bits = std::bit_cast<UintOf<T>>(v);
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
}

template <typename T>
T ReadLittleEndian(const std::uint8_t* p) {
  UintOf<T> bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    bits |= static_cast<UintOf<T>>(p[b]) << (8 * b);
  }
  return std::bit_cast<T>(bits);
}

std::size_t DtypeSize(std::string_view dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw FormatError("unknown dtype '" + std::string(dtype) + "'");
}

Digest IntegrityDigest(std::string_view header_text,
                       std::span<const std::uint8_t> payload) {
  Sha256 h;
  h.Update(kMagic);
  h.Update(header_text);
  h.Update(payload);
  return h.Finish();
}

std::size_t ToSize(const json& v, std::string_view what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw FormatError(std::string(what) + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::size_t SizeField(const json& obj, std::string_view key) {
  return ToSize(RequireField(obj, key), key);
}

std::string StringField(const json& obj, std::string_view key) {
  const json& v = RequireField(obj, key);
  if (!v.is_string()) throw FormatError(std::string(key) + " must be a string");
  return v.get<std::string>();
}

bool BoolField(const json& obj, std::string_view key) {
  const json& v = RequireField(obj, key);
  if (!v.is_boolean()) throw FormatError(std::string(key) + " must be a bool");
  return v.get<bool>();
}

std::vector<std::uint32_t> IndexList(const json& obj, std::string_view key) {
  const json& v = RequireField(obj, key);
  if (!v.is_array()) throw FormatError(std::string(key) + " must be a list");
  std::vector<std::uint32_t> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    out.push_back(static_cast<std::uint32_t>(ToSize(e, key)));
  }
  return out;
}

Permutation PermutationField(const json& obj, std::string_view key) {
  try {
    return Permutation(IndexList(obj, key));
  } catch (const PermutationError& e) {
    throw FormatError(std::string(key) + ": " + e.what());
  }
}

std::string LayerPrefix(std::string_view group, std::size_t i) {
  return std::string(group) + "." + std::to_string(i) + ".";
}

// Header entry and payload blocks for a plaintext layer.
template <typename T>
json WritePlainLayer(ContainerBuilder& out, const LayerDescriptor<T>& layer,
                     const std::string& prefix) {
  json j;
  j["kind"] = std::string(LayerKindName(layer.kind));
  switch (layer.kind) {
    case LayerKind::kConv:
    case LayerKind::kDense:
      j["kernel_shape"] = ShapeToJson(layer.kernels.shape());
      j["stride"] = layer.geometry.stride;
      j["padding"] = layer.geometry.padding;
      j["protected"] = layer.protect;
      j["has_bias"] = layer.kernels.has_bias();
      out.AddTensor<T>(prefix + "weights", layer.kernels.weights());
      if (layer.kernels.has_bias()) {
        out.AddTensor<T>(prefix + "bias", layer.kernels.bias());
      }
      break;
    case LayerKind::kActivation:
      j["function"] = "relu";
      break;
    case LayerKind::kPooling:
      j["window"] = layer.pool.window;
      j["stride"] = layer.pool.stride;
      break;
    case LayerKind::kFlatten:
      break;
  }
  return j;
}

template <typename T>
LayerDescriptor<T> ReadPlainLayer(const Container& in, const json& j,
                                  const std::string& prefix) {
  LayerDescriptor<T> layer;
  layer.kind = ParseLayerKind(StringField(j, "kind"));
  switch (layer.kind) {
    case LayerKind::kConv:
    case LayerKind::kDense: {
      const Shape4 shape = ShapeFromJson(RequireField(j, "kernel_shape"));
      layer.geometry.stride = SizeField(j, "stride");
      layer.geometry.padding = SizeField(j, "padding");
      layer.protect = BoolField(j, "protected");
      std::vector<T> bias;
      if (BoolField(j, "has_bias")) bias = in.ReadTensor<T>(prefix + "bias", shape.n);
      layer.kernels = KernelSet<T>(
          shape, in.ReadTensor<T>(prefix + "weights", shape.count()),
          std::move(bias));
      if (layer.geometry.stride == 0) throw FormatError("stride must be >= 1");
      break;
    }
    case LayerKind::kActivation:
      if (StringField(j, "function") != "relu") {
        throw FormatError("unsupported activation");
      }
      break;
    case LayerKind::kPooling:
      layer.pool.window = SizeField(j, "window");
      layer.pool.stride = SizeField(j, "stride");
      break;
    case LayerKind::kFlatten:
      break;
  }
  return layer;
}

json ObfuscatedLayerHeader(LayerKind kind, const Shape4& damaged,
                           const Shape4& auxiliary,
                           const ConvGeometry& geometry,
                           const std::vector<std::string>& noise_refs) {
  json j;
  j["kind"] = std::string(LayerKindName(kind));
  j["obfuscated"] = true;
  j["damaged_shape"] = ShapeToJson(damaged);
  j["auxiliary_shape"] = ShapeToJson(auxiliary);
  j["stride"] = geometry.stride;
  j["padding"] = geometry.padding;
  j["noise_refs"] = noise_refs;
  return j;
}

Container ParseKind(std::span<const std::uint8_t> bytes, std::string_view kind) {
  Container c = Container::Parse(bytes);
  if (c.kind() != kind) {
    throw FormatError("expected a " + std::string(kind) + " file, found '" +
                      c.kind() + "'");
  }
  return c;
}

void RequireVersion(const json& header) {
  const std::size_t version = SizeField(header, "format_version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version));
  }
}

}  // namespace

const nlohmann::json& RequireField(const nlohmann::json& object,
                                   std::string_view key) {
  if (!object.is_object()) throw FormatError("header entry is not an object");
  auto it = object.find(key);
  if (it == object.end()) {
    throw FormatError("missing header field '" + std::string(key) + "'");
  }
  return *it;
}

Shape4 ShapeFromJson(const nlohmann::json& value) {
  if (!value.is_array() || value.size() != 4) {
    throw FormatError("shape must be a list of 4 extents");
  }
  return Shape4{ToSize(value[0], "shape"), ToSize(value[1], "shape"),
                ToSize(value[2], "shape"), ToSize(value[3], "shape")};
}

nlohmann::json ShapeToJson(const Shape4& shape) {
  return json::array({shape.n, shape.c, shape.h, shape.w});
}

ContainerBuilder::ContainerBuilder(std::string kind) {
  header_["kind"] = std::move(kind);
}

template <typename T>
void ContainerBuilder::AddTensor(const std::string& name,
                                 std::span<const T> values) {
  tensors_.push_back(json{{"name", name},
                          {"dtype", std::string(DtypeName<T>())},
                          {"count", values.size()}});
  AppendLittleEndian(payload_, values);
}

Bytes ContainerBuilder::Finish() const {
  json header = header_;
  header["tensors"] = tensors_;
  header.erase("integrity");
  const Digest digest = IntegrityDigest(header.dump(), payload_);
  header["integrity"] = ToHex(digest);
  const std::string text = header.dump();
  Bytes out(kMagic.begin(), kMagic.end());
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(len >> (8 * b)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload_.begin(), payload_.end());
  return out;
}

Container Container::Parse(std::span<const std::uint8_t> bytes) {
  const std::size_t probe = std::min(bytes.size(), kMagic.size());
  if (std::memcmp(bytes.data(), kMagic.data(), probe) != 0) {
    throw FormatError("bad magic");
  }
  if (bytes.size() < kMagic.size() + 4) {
    throw CorruptionError("file truncated before header");
  }
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) {
    len |= static_cast<std::uint32_t>(bytes[kMagic.size() + b]) << (8 * b);
  }
  const std::size_t header_begin = kMagic.size() + 4;
  if (bytes.size() - header_begin < len) {
    throw CorruptionError("file truncated inside header");
  }
  Container c;
  try {
    c.header_ = json::parse(bytes.begin() + header_begin,
                            bytes.begin() + header_begin + len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }
  if (!c.header_.is_object()) throw FormatError("header is not an object");
  const std::string integrity = StringField(c.header_, "integrity");
  const json& tensors = RequireField(c.header_, "tensors");
  if (!tensors.is_array()) throw FormatError("tensors must be a list");

  std::size_t offset = 0;
  for (const auto& t : tensors) {
    Block block;
    block.dtype = StringField(t, "dtype");
    block.count = SizeField(t, "count");
    block.offset = offset;
    const std::size_t width = DtypeSize(block.dtype);
    if (block.count > (std::size_t{1} << 40) / width) {
      throw FormatError("tensor block too large");
    }
    offset += block.count * width;
    if (!c.blocks_.emplace(StringField(t, "name"), block).second) {
      throw FormatError("duplicate tensor name");
    }
  }
  const std::size_t payload_size = bytes.size() - header_begin - len;
  if (payload_size < offset) throw CorruptionError("payload truncated");
  if (payload_size > offset) throw CorruptionError("trailing bytes after payload");
  c.payload_.assign(bytes.begin() + header_begin + len, bytes.end());

  json unsigned_header = c.header_;
  unsigned_header.erase("integrity");
  if (ToHex(IntegrityDigest(unsigned_header.dump(), c.payload_)) != integrity) {
    throw IntegrityError("container digest mismatch");
  }
  return c;
}

std::string Container::kind() const { return StringField(header_, "kind"); }

bool Container::HasTensor(const std::string& name) const {
  return blocks_.find(name) != blocks_.end();
}

template <typename T>
std::vector<T> Container::ReadTensor(const std::string& name,
                                     std::size_t expected_count) const {
  auto it = blocks_.find(name);
  if (it == blocks_.end()) throw FormatError("missing tensor '" + name + "'");
  const Block& block = it->second;
  if (block.dtype != DtypeName<T>()) {
    throw FormatError("tensor '" + name + "' has dtype " + block.dtype +
                      ", expected " + std::string(DtypeName<T>()));
  }
  if (block.count != expected_count) {
    throw FormatError("tensor '" + name + "' has " +
                      std::to_string(block.count) + " values, expected " +
                      std::to_string(expected_count));
  }
  std::vector<T> out(block.count);
  const std::uint8_t* p = payload_.data() + block.offset;
  for (std::size_t i = 0; i < block.count; ++i) {
    out[i] = ReadLittleEndian<T>(p + i * sizeof(T));
  }
  return out;
}

template <typename T>
Bytes SerializeModel(const ModelDescriptor<T>& model) {
  ValidateModel(model);
  ContainerBuilder out("model");
  json& h = out.header();
  h["format_version"] = model.format_version;
  h["name"] = model.name;
  h["input_shape"] = ShapeToJson(model.input_shape);
  h["class_count"] = model.class_count;
  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    layers.push_back(WritePlainLayer(out, model.layers[i], LayerPrefix("layers", i)));
  }
  h["layers"] = std::move(layers);
  return out.Finish();
}

template <typename T>
ModelDescriptor<T> DeserializeModel(std::span<const std::uint8_t> bytes) {
  const Container c = ParseKind(bytes, "model");
  const json& h = c.header();
  RequireVersion(h);
  ModelDescriptor<T> model;
  model.name = StringField(h, "name");
  model.input_shape = ShapeFromJson(RequireField(h, "input_shape"));
  model.class_count = SizeField(h, "class_count");
  const json& layers = RequireField(h, "layers");
  if (!layers.is_array()) throw FormatError("layers must be a list");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    model.layers.push_back(
        ReadPlainLayer<T>(c, layers[i], LayerPrefix("layers", i)));
  }
  ValidateModel(model);
  return model;
}

template <typename T>
Bytes SerializeBundle(const ObfuscatedBundle<T>& bundle) {
  if (bundle.layers.empty()) throw FormatError("bundle has no layers");
  ContainerBuilder out("bundle");
  json& h = out.header();
  h["format_version"] = bundle.format_version;
  h["name"] = bundle.name;
  h["input_shape"] = ShapeToJson(bundle.input_shape);
  h["class_count"] = bundle.class_count;
  json layers = json::array();
  for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
    const std::string prefix = LayerPrefix("layers", i);
    if (const auto* obf = std::get_if<ObfuscatedLayer<T>>(&bundle.layers[i])) {
      layers.push_back(ObfuscatedLayerHeader(
          obf->kind, obf->damaged.shape(), obf->auxiliary.shape(),
          obf->geometry, obf->noise_refs));
      out.AddTensor<T>(prefix + "damaged", obf->damaged.weights());
      out.AddTensor<T>(prefix + "auxiliary", obf->auxiliary.weights());
    } else {
      json j = WritePlainLayer(out, std::get<LayerDescriptor<T>>(bundle.layers[i]),
                               prefix);
      j["obfuscated"] = false;
      layers.push_back(std::move(j));
    }
  }
  h["layers"] = std::move(layers);
  return out.Finish();
}

template <typename T>
ObfuscatedBundle<T> DeserializeBundle(std::span<const std::uint8_t> bytes) {
  const Container c = ParseKind(bytes, "bundle");
  const json& h = c.header();
  RequireVersion(h);
  ObfuscatedBundle<T> bundle;
  bundle.name = StringField(h, "name");
  bundle.input_shape = ShapeFromJson(RequireField(h, "input_shape"));
  bundle.class_count = SizeField(h, "class_count");
  const json& layers = RequireField(h, "layers");
  if (!layers.is_array() || layers.empty()) {
    throw FormatError("bundle has no layers");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& j = layers[i];
    const std::string prefix = LayerPrefix("layers", i);
    if (BoolField(j, "obfuscated")) {
      ObfuscatedLayer<T> obf;
      obf.kind = ParseLayerKind(StringField(j, "kind"));
      if (!IsLinear(obf.kind)) throw FormatError("obfuscated layer is not linear");
      const Shape4 damaged = ShapeFromJson(RequireField(j, "damaged_shape"));
      const Shape4 auxiliary = ShapeFromJson(RequireField(j, "auxiliary_shape"));
      if (auxiliary.c != damaged.c || auxiliary.h != damaged.h ||
          auxiliary.w != damaged.w) {
        throw FormatError("auxiliary kernels do not match damaged kernels");
      }
      obf.geometry.stride = SizeField(j, "stride");
      obf.geometry.padding = SizeField(j, "padding");
      if (obf.geometry.stride == 0) throw FormatError("stride must be >= 1");
      const json& refs = RequireField(j, "noise_refs");
      if (!refs.is_array()) throw FormatError("noise_refs must be a list");
      for (const auto& r : refs) {
        if (!r.is_string()) throw FormatError("noise ref must be a string");
        obf.noise_refs.push_back(r.get<std::string>());
      }
      obf.damaged = KernelSet<T>(
          damaged, c.ReadTensor<T>(prefix + "damaged", damaged.count()), {});
      obf.auxiliary = KernelSet<T>(
          auxiliary, c.ReadTensor<T>(prefix + "auxiliary", auxiliary.count()),
          {});
      bundle.layers.emplace_back(std::move(obf));
    } else {
      bundle.layers.emplace_back(ReadPlainLayer<T>(c, j, prefix));
    }
  }
  try {
    InferShapes(bundle);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("inconsistent bundle shapes: ") + e.what());
  }
  return bundle;
}

template <typename T>
Bytes SerializeSecrets(const SealedSecrets<T>& secrets) {
  ContainerBuilder out("sealed");
  json& h = out.header();
  h["format_version"] = kFormatVersion;
  h["bundle_digest"] = ToHex(secrets.bundle_digest);
  json layers = json::array();
  for (std::size_t k = 0; k < secrets.layers.size(); ++k) {
    const SealedLayer<T>& s = secrets.layers[k];
    const std::string prefix = LayerPrefix("sealed", k);
    json j;
    j["layer_id"] = s.layer_id;
    j["coefficient_layout"] = s.per_output_coefficients ? "per_output" : "shared";
    j["coefficient_count"] = s.coefficients.size();
    j["input_perm"] = s.input_perm.map();
    j["output_perm"] = s.output_perm.map();
    j["aux_perm"] = s.aux_perm.map();
    j["real_positions"] = s.real_positions;
    j["layer_digest"] = ToHex(s.layer_digest);
    j["input_shape"] = ShapeToJson(s.input_shape);
    j["output_shape"] = ShapeToJson(s.output_shape);
    j["mask_count"] = s.masks.size();
    j["output_scale_count"] = s.output_scale.size();
    json epilogue = json::array();
    for (std::size_t e = 0; e < s.epilogue.size(); ++e) {
      epilogue.push_back(WritePlainLayer(out, s.epilogue[e],
                                         prefix + "epilogue." + std::to_string(e) + "."));
    }
    j["epilogue"] = std::move(epilogue);
    out.AddTensor<T>(prefix + "coefficients", s.coefficients);
    out.AddTensor<T>(prefix + "bias", s.bias);
    for (std::size_t e = 0; e < s.masks.size(); ++e) {
      out.AddTensor<T>(prefix + "mask." + std::to_string(e), s.masks[e].data());
      out.AddTensor<T>(prefix + "noise." + std::to_string(e), s.noise[e].data());
    }
    if (!s.output_scale.empty()) {
      out.AddTensor<T>(prefix + "output_scale", s.output_scale);
    }
    layers.push_back(std::move(j));
  }
  h["layers"] = std::move(layers);
  return out.Finish();
}

template <typename T>
SealedSecrets<T> DeserializeSecrets(std::span<const std::uint8_t> bytes) {
  const Container c = ParseKind(bytes, "sealed");
  const json& h = c.header();
  RequireVersion(h);
  SealedSecrets<T> secrets;
  secrets.bundle_digest = DigestFromHex(StringField(h, "bundle_digest"));
  const json& layers = RequireField(h, "layers");
  if (!layers.is_array()) throw FormatError("layers must be a list");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const json& j = layers[k];
    const std::string prefix = LayerPrefix("sealed", k);
    SealedLayer<T> s;
    s.layer_id = SizeField(j, "layer_id");
    const std::string layout = StringField(j, "coefficient_layout");
    if (layout != "shared" && layout != "per_output") {
      throw FormatError("unknown coefficient layout '" + layout + "'");
    }
    s.per_output_coefficients = layout == "per_output";
    s.input_perm = PermutationField(j, "input_perm");
    s.output_perm = PermutationField(j, "output_perm");
    s.aux_perm = PermutationField(j, "aux_perm");
    s.real_positions = IndexList(j, "real_positions");
    for (std::uint32_t p : s.real_positions) {
      if (p >= s.aux_perm.size()) throw FormatError("real position out of range");
    }
    s.layer_digest = DigestFromHex(StringField(j, "layer_digest"));
    s.input_shape = ShapeFromJson(RequireField(j, "input_shape"));
    s.output_shape = ShapeFromJson(RequireField(j, "output_shape"));
    const std::size_t c_out = s.output_shape.c;
    if (s.output_perm.size() != c_out || s.input_perm.size() != s.input_shape.c) {
      throw FormatError("sealed permutation sizes do not match layer shapes");
    }
    const std::size_t coefficient_count = SizeField(j, "coefficient_count");
    const std::size_t expected = s.per_output_coefficients
                                     ? c_out * s.real_positions.size()
                                     : s.real_positions.size();
    if (coefficient_count != expected) {
      throw FormatError("coefficient count does not match basis count");
    }
    s.coefficients = c.ReadTensor<T>(prefix + "coefficients", coefficient_count);
    s.bias = c.ReadTensor<T>(prefix + "bias", c_out);
    const std::size_t masks = SizeField(j, "mask_count");
    for (std::size_t e = 0; e < masks; ++e) {
      s.masks.emplace_back(s.input_shape,
                           c.ReadTensor<T>(prefix + "mask." + std::to_string(e),
                                           s.input_shape.count()));
      s.noise.emplace_back(s.output_shape,
                           c.ReadTensor<T>(prefix + "noise." + std::to_string(e),
                                           s.output_shape.count()));
    }
    const std::size_t scale_count = SizeField(j, "output_scale_count");
    if (scale_count > 0) {
      s.output_scale = c.ReadTensor<T>(prefix + "output_scale", scale_count);
    }
    const json& epilogue = RequireField(j, "epilogue");
    if (!epilogue.is_array()) throw FormatError("epilogue must be a list");
    for (std::size_t e = 0; e < epilogue.size(); ++e) {
      auto layer = ReadPlainLayer<T>(
          c, epilogue[e], prefix + "epilogue." + std::to_string(e) + ".");
      if (IsLinear(layer.kind)) throw FormatError("epilogue holds a linear layer");
      s.epilogue.push_back(std::move(layer));
    }
    secrets.layers.push_back(std::move(s));
  }
  return secrets;
}

template <typename T>
Bytes SerializeTensor(const Tensor<T>& tensor) {
  ContainerBuilder out("tensor");
  out.header()["shape"] = ShapeToJson(tensor.shape());
  out.AddTensor<T>("data", tensor.data());
  return out.Finish();
}

template <typename T>
Tensor<T> DeserializeTensor(std::span<const std::uint8_t> bytes) {
  const Container c = ParseKind(bytes, "tensor");
  const Shape4 shape = ShapeFromJson(RequireField(c.header(), "shape"));
  return Tensor<T>(shape, c.ReadTensor<T>("data", shape.count()));
}

template <typename T>
Digest DigestBundle(const ObfuscatedBundle<T>& bundle) {
  return Sha256Of(SerializeBundle(bundle));
}

template <typename T>
Digest DigestLayer(const ObfuscatedLayer<T>& layer, std::size_t layer_id) {
  json j = ObfuscatedLayerHeader(layer.kind, layer.damaged.shape(),
                                 layer.auxiliary.shape(), layer.geometry,
                                 layer.noise_refs);
  j["layer_id"] = layer_id;
  Bytes payload;
  AppendLittleEndian<T>(payload, layer.damaged.weights());
  AppendLittleEndian<T>(payload, layer.auxiliary.weights());
  Sha256 h;
  h.Update(j.dump());
  h.Update(payload);
  return h.Finish();
}

Bytes ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes out((std::istreambuf_iterator<char>(in)),
            std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return out;
}

void WriteFileAtomic(const std::filesystem::path& path,
                     std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

#define CONVSHATTER_INSTANTIATE(T)                                           \
  template void ContainerBuilder::AddTensor<T>(const std::string&,           \
                                               std::span<const T>);          \
  template std::vector<T> Container::ReadTensor<T>(const std::string&,       \
                                                   std::size_t) const;       \
  template Bytes SerializeModel(const ModelDescriptor<T>&);                  \
  template ModelDescriptor<T> DeserializeModel<T>(                           \
      std::span<const std::uint8_t>);                                        \
  template Bytes SerializeBundle(const ObfuscatedBundle<T>&);                \
  template ObfuscatedBundle<T> DeserializeBundle<T>(                         \
      std::span<const std::uint8_t>);                                        \
  template Bytes SerializeSecrets(const SealedSecrets<T>&);                  \
  template SealedSecrets<T> DeserializeSecrets<T>(                           \
      std::span<const std::uint8_t>);                                        \
  template Bytes SerializeTensor(const Tensor<T>&);                          \
  template Tensor<T> DeserializeTensor<T>(std::span<const std::uint8_t>);    \
  template Digest DigestBundle(const ObfuscatedBundle<T>&);                  \
  template Digest DigestLayer(const ObfuscatedLayer<T>&, std::size_t);

CONVSHATTER_INSTANTIATE(float)
CONVSHATTER_INSTANTIATE(double)

#undef CONVSHATTER_INSTANTIATE

}  // namespace convshatter
