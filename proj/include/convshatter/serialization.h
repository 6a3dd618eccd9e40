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

// Container layout shared by every file and wire message:
//
//   "CSHTv001" | u32 LE header length | JSON header | tensor payload
//
// The header is compact JSON with sorted keys. Its "tensors" table lists the
// payload blocks in order as {name, dtype, count}; blocks are raw
// little-endian IEEE values. The "integrity" field holds the hex SHA-256 of
// magic || header-without-integrity || payload and is checked on every parse.

#ifndef CONVSHATTER_SERIALIZATION_H_
#define CONVSHATTER_SERIALIZATION_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "convshatter/bundle.h"
#include "convshatter/digest.h"
#include "convshatter/model.h"
#include "convshatter/tensor.h"

namespace convshatter {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::string_view kMagic = "CSHTv001";

template <typename T>
constexpr std::string_view DtypeName();
template <>
constexpr std::string_view DtypeName<float>() { return "f32"; }
template <>
constexpr std::string_view DtypeName<double>() { return "f64"; }

class ContainerBuilder {
 public:
  explicit ContainerBuilder(std::string kind);

  nlohmann::json& header() { return header_; }

  template <typename T>
  void AddTensor(const std::string& name, std::span<const T> values);

  Bytes Finish() const;

 private:
  nlohmann::json header_;
  nlohmann::json tensors_ = nlohmann::json::array();
  Bytes payload_;
};

class Container {
 public:
  // Throws FormatError (magic, header), CorruptionError (truncation, trailing
  // bytes) or IntegrityError (digest mismatch).
  static Container Parse(std::span<const std::uint8_t> bytes);

  const nlohmann::json& header() const { return header_; }
  std::string kind() const;
  bool HasTensor(const std::string& name) const;

  // Throws FormatError on a missing block, wrong dtype or wrong count.
  template <typename T>
  std::vector<T> ReadTensor(const std::string& name,
                            std::size_t expected_count) const;

 private:
  struct Block {
    std::string dtype;
    std::size_t offset = 0;
    std::size_t count = 0;
  };

  nlohmann::json header_;
  Bytes payload_;
  std::map<std::string, Block, std::less<>> blocks_;
};

// Typed accessors with the FormatError contract for header fields.
const nlohmann::json& RequireField(const nlohmann::json& object,
                                   std::string_view key);
Shape4 ShapeFromJson(const nlohmann::json& value);
nlohmann::json ShapeToJson(const Shape4& shape);

template <typename T>
Bytes SerializeModel(const ModelDescriptor<T>& model);
template <typename T>
ModelDescriptor<T> DeserializeModel(std::span<const std::uint8_t> bytes);

template <typename T>
Bytes SerializeBundle(const ObfuscatedBundle<T>& bundle);
template <typename T>
ObfuscatedBundle<T> DeserializeBundle(std::span<const std::uint8_t> bytes);

template <typename T>
Bytes SerializeSecrets(const SealedSecrets<T>& secrets);
template <typename T>
SealedSecrets<T> DeserializeSecrets(std::span<const std::uint8_t> bytes);

template <typename T>
Bytes SerializeTensor(const Tensor<T>& tensor);
template <typename T>
Tensor<T> DeserializeTensor(std::span<const std::uint8_t> bytes);

// SHA-256 of the canonical bundle bytes.
template <typename T>
Digest DigestBundle(const ObfuscatedBundle<T>& bundle);

// SHA-256 of one public layer (header entry and kernel payloads).
template <typename T>
Digest DigestLayer(const ObfuscatedLayer<T>& layer, std::size_t layer_id);

// Throws IoError when the file cannot be read.
Bytes ReadFileBytes(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over `path`.
void WriteFileAtomic(const std::filesystem::path& path,
                     std::span<const std::uint8_t> bytes);

template <typename T>
void SaveModel(const std::filesystem::path& path,
               const ModelDescriptor<T>& model) {
  WriteFileAtomic(path, SerializeModel(model));
}
template <typename T = float>
ModelDescriptor<T> LoadModel(const std::filesystem::path& path) {
  return DeserializeModel<T>(ReadFileBytes(path));
}
template <typename T>
void SaveBundle(const std::filesystem::path& path,
                const ObfuscatedBundle<T>& bundle) {
  WriteFileAtomic(path, SerializeBundle(bundle));
}
template <typename T = float>
ObfuscatedBundle<T> LoadBundle(const std::filesystem::path& path) {
  return DeserializeBundle<T>(ReadFileBytes(path));
}
template <typename T>
void SaveSecrets(const std::filesystem::path& path,
                 const SealedSecrets<T>& secrets) {
  WriteFileAtomic(path, SerializeSecrets(secrets));
}
template <typename T = float>
SealedSecrets<T> LoadSecrets(const std::filesystem::path& path) {
  return DeserializeSecrets<T>(ReadFileBytes(path));
}

}  // namespace convshatter

#endif  // CONVSHATTER_SERIALIZATION_H_
