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

#ifndef CONVSHATTER_CONFIG_H_
#define CONVSHATTER_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convshatter/model.h"

namespace convshatter {

// Which linear layers get protected.
//   "flags"        layers whose descriptor has protect set (default)
//   "all"          every conv/dense layer
//   "0,2"          explicit ordinals among the conv/dense layers
//   "0.25", "25%"  leading fraction of the conv/dense layers, rounded up
class LayerSelector {
 public:
  enum class Mode { kModelFlags, kAll, kExplicit, kFraction };

  LayerSelector() = default;
  static LayerSelector All();
  static LayerSelector Ordinals(std::vector<std::size_t> ordinals);
  static LayerSelector Fraction(double fraction);
  // Throws ConfigError on malformed text.
  static LayerSelector Parse(std::string_view text);

  Mode mode() const { return mode_; }
  std::string ToString() const;

  // Indices into model.layers, ascending. Throws ConfigError if an ordinal
  // is out of range or nothing is selected.
  template <typename T>
  std::vector<std::size_t> Resolve(const ModelDescriptor<T>& model) const;

 private:
  Mode mode_ = Mode::kModelFlags;
  std::vector<std::size_t> ordinals_;
  double fraction_ = 0.0;
};

enum class MaskReusePolicy {
  kAllowReuse,          // any pool entry, including the previous one
  kNoConsecutiveReuse,  // never the entry used by the previous call
  kSingleUse,           // each entry at most once, then exhausted
};

std::string_view MaskReusePolicyName(MaskReusePolicy policy);
MaskReusePolicy ParseMaskReusePolicy(std::string_view text);

struct ObfuscationConfig {
  std::size_t k_pub = 4;
  std::size_t k_fake = 1;
  // Upper bound on k_pub; the effective cap is min(k_pub_cap, c_out).
  std::optional<std::size_t> k_pub_cap;
  LayerSelector selector;
  std::size_t mask_pool = 4;
  bool orthogonalize = true;
  bool shape_decoys = true;
  // One coefficient row per output kernel instead of one shared vector.
  bool per_output_coefficients = false;
  // Draw random pi / sigma / tau; off gives identity permutations.
  bool permute = true;
  // Blind stage outputs that feed another protected layer.
  bool blind_outputs = true;
  // Masks are mask_scale * N(0, 1) entries.
  double mask_scale = 1.0;
  MaskReusePolicy reuse = MaskReusePolicy::kNoConsecutiveReuse;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  // Throws ConfigError.
  void Validate() const;
};

// Applies `key = value` lines on top of `base`. Blank lines and lines starting
// with '#' are ignored. Throws ConfigError on unknown keys or bad values.
ObfuscationConfig ParseConfigText(std::string_view text,
                                  ObfuscationConfig base = {});
ObfuscationConfig LoadConfigFile(const std::filesystem::path& path,
                                 ObfuscationConfig base = {});

}  // namespace convshatter

#endif  // CONVSHATTER_CONFIG_H_
