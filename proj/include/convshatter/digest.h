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

#ifndef CONVSHATTER_DIGEST_H_
#define CONVSHATTER_DIGEST_H_

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace convshatter {

using Digest = std::array<std::uint8_t, 32>;

// Incremental SHA-256 (OpenSSL EVP).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& Update(std::span<const std::uint8_t> bytes);
  Sha256& Update(std::string_view text);
  Digest Finish();

 private:
  struct Context;
  std::unique_ptr<Context> ctx_;
};

Digest Sha256Of(std::span<const std::uint8_t> bytes);

std::string ToHex(const Digest& digest);
// Throws FormatError unless `hex` is 64 hex digits.
Digest DigestFromHex(std::string_view hex);

}  // namespace convshatter

#endif  // CONVSHATTER_DIGEST_H_
