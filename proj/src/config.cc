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

#include "convshatter/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "convshatter/error.h"

namespace convshatter {
namespace {

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::uint64_t ParseUnsigned(std::string_view text, std::string_view what) {
  text = Trim(text);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(std::string(what) + ": expected a non-negative integer, got '" +
                      std::string(text) + "'");
  }
  return value;
}

double ParseReal(std::string_view text, std::string_view what) {
  text = Trim(text);
  // from_chars for double is not available in every libstdc++ we target.
  std::string copy(text);
  std::istringstream in(copy);
  double value = 0.0;
  in >> value;
  if (!in || !in.eof() || !std::isfinite(value)) {
    throw ConfigError(std::string(what) + ": expected a number, got '" + copy + "'");
  }
  return value;
}

bool ParseBool(std::string_view text, std::string_view what) {
  text = Trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(std::string(what) + ": expected a boolean, got '" +
                    std::string(text) + "'");
}

}  // namespace

LayerSelector LayerSelector::All() {
  LayerSelector s;
  s.mode_ = Mode::kAll;
  return s;
}

LayerSelector LayerSelector::Ordinals(std::vector<std::size_t> ordinals) {
  LayerSelector s;
  s.mode_ = Mode::kExplicit;
  std::sort(ordinals.begin(), ordinals.end());
  ordinals.erase(std::unique(ordinals.begin(), ordinals.end()), ordinals.end());
  s.ordinals_ = std::move(ordinals);
  return s;
}

LayerSelector LayerSelector::Fraction(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("layer fraction must be in (0, 1]");
  }
  LayerSelector s;
  s.mode_ = Mode::kFraction;
  s.fraction_ = fraction;
  return s;
}

LayerSelector LayerSelector::Parse(std::string_view text) {
  text = Trim(text);
  if (text.empty()) throw ConfigError("empty layer selector");
  if (text == "flags") return LayerSelector{};
  if (text == "all") return All();
  if (text.back() == '%') {
    return Fraction(ParseReal(text.substr(0, text.size() - 1), "layers") / 100.0);
  }
  if (text.find('.') != std::string_view::npos) {
    return Fraction(ParseReal(text, "layers"));
  }
  std::vector<std::size_t> ordinals;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    ordinals.push_back(ParseUnsigned(text.substr(start, comma - start), "layers"));
    start = comma + 1;
  }
  return Ordinals(std::move(ordinals));
}

std::string LayerSelector::ToString() const {
  switch (mode_) {
    case Mode::kModelFlags:
      return "flags";
    case Mode::kAll:
      return "all";
    case Mode::kFraction: {
      std::ostringstream out;
      out << fraction_;
      return out.str();
    }
    case Mode::kExplicit: {
      std::string out;
      for (std::size_t i = 0; i < ordinals_.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(ordinals_[i]);
      }
      return out;
    }
  }
  return "flags";
}

template <typename T>
std::vector<std::size_t> LayerSelector::Resolve(
    const ModelDescriptor<T>& model) const {
  const std::vector<std::size_t> linear = LinearLayerIndices(model);
  std::vector<std::size_t> out;
  switch (mode_) {
    case Mode::kModelFlags:
      for (std::size_t i : linear) {
        if (model.layers[i].protect) out.push_back(i);
      }
      break;
    case Mode::kAll:
      out = linear;
      break;
    case Mode::kExplicit:
      for (std::size_t ordinal : ordinals_) {
        if (ordinal >= linear.size()) {
          throw ConfigError("layer ordinal " + std::to_string(ordinal) +
                            " out of range; model has " +
                            std::to_string(linear.size()) + " conv/dense layers");
        }
        out.push_back(linear[ordinal]);
      }
      break;
    case Mode::kFraction: {
      const auto count = static_cast<std::size_t>(
          std::ceil(fraction_ * static_cast<double>(linear.size()) - 1e-9));
      out.assign(linear.begin(),
                 linear.begin() + std::min(count, linear.size()));
      break;
    }
  }
  if (out.empty()) {
    throw ConfigError("layer selector '" + ToString() + "' selects no layers");
  }
  return out;
}

template std::vector<std::size_t> LayerSelector::Resolve(
    const ModelDescriptor<float>&) const;
template std::vector<std::size_t> LayerSelector::Resolve(
    const ModelDescriptor<double>&) const;

std::string_view MaskReusePolicyName(MaskReusePolicy policy) {
  switch (policy) {
    case MaskReusePolicy::kAllowReuse:
      return "allow";
    case MaskReusePolicy::kNoConsecutiveReuse:
      return "no-consecutive";
    case MaskReusePolicy::kSingleUse:
      return "single-use";
  }
  return "no-consecutive";
}

MaskReusePolicy ParseMaskReusePolicy(std::string_view text) {
  text = Trim(text);
  for (auto policy : {MaskReusePolicy::kAllowReuse,
                      MaskReusePolicy::kNoConsecutiveReuse,
                      MaskReusePolicy::kSingleUse}) {
    if (MaskReusePolicyName(policy) == text) return policy;
  }
  throw ConfigError("unknown mask reuse policy '" + std::string(text) + "'");
}

void ObfuscationConfig::Validate() const {
  if (mask_pool == 0) throw ConfigError("mask pool size must be >= 1");
  if (!(mask_scale >= 0.0) || !std::isfinite(mask_scale)) {
    throw ConfigError("mask scale must be finite and >= 0");
  }
  if (k_pub_cap && k_pub > *k_pub_cap) {
    throw ConfigError("k_pub " + std::to_string(k_pub) + " exceeds cap " +
                      std::to_string(*k_pub_cap));
  }
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
}

ObfuscationConfig ParseConfigText(std::string_view text,
                                  ObfuscationConfig base) {
  ObfuscationConfig cfg = std::move(base);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const std::string_view line = Trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key(Trim(line.substr(0, eq)));
    const std::string_view value = Trim(line.substr(eq + 1));
    if (key == "k_pub") {
      cfg.k_pub = ParseUnsigned(value, key);
    } else if (key == "k_fake") {
      cfg.k_fake = ParseUnsigned(value, key);
    } else if (key == "k_pub_cap") {
      cfg.k_pub_cap = ParseUnsigned(value, key);
    } else if (key == "layers") {
      cfg.selector = LayerSelector::Parse(value);
    } else if (key == "mask_pool") {
      cfg.mask_pool = ParseUnsigned(value, key);
    } else if (key == "orthogonalize") {
      cfg.orthogonalize = ParseBool(value, key);
    } else if (key == "shape_decoys") {
      cfg.shape_decoys = ParseBool(value, key);
    } else if (key == "per_output_coefficients") {
      cfg.per_output_coefficients = ParseBool(value, key);
    } else if (key == "permute") {
      cfg.permute = ParseBool(value, key);
    } else if (key == "blind_outputs") {
      cfg.blind_outputs = ParseBool(value, key);
    } else if (key == "mask_scale") {
      cfg.mask_scale = ParseReal(value, key);
    } else if (key == "reuse") {
      cfg.reuse = ParseMaskReusePolicy(value);
    } else if (key == "seed") {
      cfg.seed = ParseUnsigned(value, key);
    } else if (key == "jobs") {
      cfg.jobs = ParseUnsigned(value, key);
    } else {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
  }
  cfg.Validate();
  return cfg;
}

ObfuscationConfig LoadConfigFile(const std::filesystem::path& path,
                                 ObfuscationConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return ParseConfigText(text.str(), std::move(base));
}

}  // namespace convshatter
