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

// Secrecy census: looks for enclave-only material in anything the worker can
// see (bundle bytes, worker state, wire traffic).

#ifndef CONVSHATTER_TESTS_SUPPORT_CENSUS_H_
#define CONVSHATTER_TESTS_SUPPORT_CENSUS_H_

#include <algorithm>
#include <cstring>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "convshatter/bundle.h"
#include "convshatter/serialization.h"
#include "convshatter/transport.h"
#include "convshatter/worker.h"
#include "json.hpp"

namespace convshatter::census {

struct Pattern {
  std::string label;
  Bytes bytes;
};

struct Finding {
  std::string label;
  std::string where;
};

// Header keys that public artifacts and wire messages may carry.
inline const std::set<std::string>& PublicKeys() {
  static const std::set<std::string> keys = {
      "auxiliary_shape", "aux_shape", "category", "class_count", "count",
      "damaged_shape", "dtype", "format_version", "function", "has_bias",
      "input_shape", "integrity", "job_id", "kernel_shape", "kind", "layer_id",
      "layers", "message", "name", "noise_refs", "obfuscated", "output_shape",
      "padding", "protected", "shape", "spec_shape", "stride", "tensors",
      "window"};
  return keys;
}

inline void CollectKeys(const nlohmann::json& j, std::set<std::string>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      out.insert(it.key());
      CollectKeys(it.value(), out);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) CollectKeys(v, out);
  }
}

inline std::vector<std::string> UnknownKeys(std::span<const std::uint8_t> container) {
  std::set<std::string> keys;
  CollectKeys(Container::Parse(container).header(), keys);
  std::vector<std::string> out;
  for (const auto& k : keys) {
    if (!PublicKeys().contains(k)) out.push_back(k);
  }
  return out;
}

template <typename T>
Bytes Encode(std::span<const T> values) {
  Bytes out(values.size() * sizeof(T));
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

// Windows of `width` consecutive values, at most `limit` of them, skipping
// windows that are all zero.
template <typename T>
void AddWindows(std::vector<Pattern>& out, const std::string& label,
                std::span<const T> values, std::size_t width, std::size_t limit) {
  if (values.empty()) return;
  width = std::min(width, values.size());
  const std::size_t windows = values.size() - width + 1;
  const std::size_t step = std::max<std::size_t>(1, windows / limit);
  for (std::size_t i = 0; i < windows; i += step) {
    auto w = values.subspan(i, width);
    if (std::all_of(w.begin(), w.end(), [](T v) { return v == T{0}; })) continue;
    out.push_back({label, Encode(w)});
  }
}

inline void AddIndexPattern(std::vector<Pattern>& out, const std::string& label,
                            const std::vector<std::uint32_t>& map) {
  if (map.size() < 4) return;  // too short to be distinctive
  out.push_back({label, Encode(std::span<const std::uint32_t>(map))});
  const std::string text = nlohmann::json(map).dump();
  out.push_back({label + " (text)", Bytes(text.begin(), text.end())});
}

// Mask entries added to a zero activation reach the wire unchanged, which
// tells the worker nothing since it cannot see where the zeros are. When the
// permuted layer input is known, mask windows are restricted to positions
// where that input is nonzero.
template <typename T>
void AddMaskWindows(std::vector<Pattern>& out, const std::string& label,
                    const Tensor<T>& mask, const Tensor<T>* permuted_input) {
  if (permuted_input == nullptr) {
    AddWindows<T>(out, label, mask.data(), 2, 32);
    return;
  }
  const auto m = mask.data();
  const auto x = permuted_input->data();
  std::size_t added = 0;
  for (std::size_t i = 0; i + 1 < m.size() && added < 32; ++i) {
    if (x[i] == T{0} || x[i + 1] == T{0}) continue;
    out.push_back({label, Encode(m.subspan(i, 2))});
    ++added;
  }
}

// permuted_inputs[layer_id], when present, is pi applied to that layer's true
// input for the inference being audited.
template <typename T>
std::vector<Pattern> SecretPatterns(
    const SealedSecrets<T>& secrets,
    const std::map<std::size_t, Tensor<T>>& permuted_inputs = {}) {
  std::vector<Pattern> out;
  for (const auto& s : secrets.layers) {
    const std::string p = "layer " + std::to_string(s.layer_id) + " ";
    AddWindows<T>(out, p + "coefficients", s.coefficients, 2, 64);
    AddWindows<T>(out, p + "bias", s.bias, 2, 64);
    AddWindows<T>(out, p + "output_scale", s.output_scale, 2, 64);
    const auto it = permuted_inputs.find(s.layer_id);
    for (const auto& m : s.masks) {
      AddMaskWindows(out, p + "mask", m, it == permuted_inputs.end() ? nullptr : &it->second);
    }
    for (const auto& e : s.noise) AddWindows<T>(out, p + "noise", e.data(), 2, 32);
    if (!s.input_perm.IsIdentity()) AddIndexPattern(out, p + "pi", s.input_perm.map());
    if (!s.output_perm.IsIdentity()) AddIndexPattern(out, p + "sigma", s.output_perm.map());
    if (!s.aux_perm.IsIdentity()) AddIndexPattern(out, p + "tau", s.aux_perm.map());
    AddIndexPattern(out, p + "real positions", s.real_positions);
  }
  return out;
}

inline bool Contains(std::span<const std::uint8_t> haystack, const Bytes& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(),
                     std::boyer_moore_horspool_searcher(needle.begin(),
                                                        needle.end())) !=
         haystack.end();
}

inline std::vector<Finding> Scan(std::span<const std::uint8_t> haystack,
                                 const std::vector<Pattern>& patterns,
                                 const std::string& where) {
  std::vector<Finding> out;
  for (const auto& p : patterns) {
    if (Contains(haystack, p.bytes)) out.push_back({p.label, where});
  }
  return out;
}

// Records every message that crosses a transport.
struct WireLog {
  std::vector<Bytes> requests;
  std::vector<Bytes> replies;

  void Attach(Transport& transport) {
    transport.SetObserver([this](std::span<const std::uint8_t> req,
                                 std::span<const std::uint8_t> rep) {
      requests.emplace_back(req.begin(), req.end());
      replies.emplace_back(rep.begin(), rep.end());
    });
  }
};

// Full census: header keys, secret byte patterns in the bundle and on the
// wire, and replay of every recorded request against a worker rebuilt from
// the bundle bytes alone (the replies must be byte-identical).
// `extra` holds further enclave-private values (e.g. unmasked activations).
template <typename T>
std::vector<Finding> RunCensus(const ObfuscatedBundle<T>& bundle,
                               const SealedSecrets<T>& secrets, const WireLog& log,
                               const std::vector<Pattern>& extra = {},
                               const std::map<std::size_t, Tensor<T>>& permuted_inputs = {}) {
  std::vector<Finding> findings;
  std::vector<Pattern> patterns = SecretPatterns(secrets, permuted_inputs);
  patterns.insert(patterns.end(), extra.begin(), extra.end());

  const Bytes bundle_bytes = SerializeBundle(bundle);
  for (const auto& k : UnknownKeys(bundle_bytes)) findings.push_back({"key " + k, "bundle"});
  auto hits = Scan(bundle_bytes, patterns, "bundle");
  findings.insert(findings.end(), hits.begin(), hits.end());

  const Worker<T> rebuilt = Worker<T>::FromBytes(bundle_bytes);
  if (!(rebuilt.bundle() == bundle)) findings.push_back({"worker state", "bundle round trip"});

  for (std::size_t i = 0; i < log.requests.size(); ++i) {
    const std::string where = "message " + std::to_string(i);
    for (const Bytes* msg : {&log.requests[i], &log.replies[i]}) {
      for (const auto& k : UnknownKeys(*msg)) findings.push_back({"key " + k, where});
      hits = Scan(*msg, patterns, where);
      findings.insert(findings.end(), hits.begin(), hits.end());
    }
    if (rebuilt.Handle(log.requests[i]) != log.replies[i]) {
      findings.push_back({"reply not derivable from bundle", where});
    }
  }
  return findings;
}

}  // namespace convshatter::census

#endif  // CONVSHATTER_TESTS_SUPPORT_CENSUS_H_
