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

#include "convshatter/enclave.h"

#include "convshatter/error.h"
#include "convshatter/exact_sum.h"
#include "convshatter/obfuscator.h"
#include "convshatter/ops.h"
#include "convshatter/serialization.h"

namespace convshatter {

template <typename T>
Enclave<T>::Enclave(SealedSecrets<T> secrets, MaskReusePolicy policy,
                    std::uint64_t selection_seed)
    : secrets_(std::move(secrets)),
      policy_(policy),
      selection_seed_(selection_seed) {}

template <typename T>
bool Enclave<T>::VerifyBundle(const Digest& bundle_digest) {
  if (bundle_digest != secrets_.bundle_digest) {
    verified_ = false;
    failed_ = true;
    throw IntegrityError("bundle digest does not match the sealed digest");
  }
  if (!failed_) verified_ = true;
  return verified_;
}

template <typename T>
bool Enclave<T>::VerifyBundle(const ObfuscatedBundle<T>& bundle) {
  for (const auto& sealed : secrets_.layers) {
    if (!bundle.IsProtected(sealed.layer_id) ||
        DigestLayer(std::get<ObfuscatedLayer<T>>(bundle.layers[sealed.layer_id]),
                    sealed.layer_id) != sealed.layer_digest) {
      verified_ = false;
      failed_ = true;
      throw IntegrityError("layer " + std::to_string(sealed.layer_id) +
                           " does not match its sealed digest");
    }
  }
  return VerifyBundle(DigestBundle(bundle));
}

template <typename T>
void Enclave<T>::RequireVerified() const {
  if (!verified_) throw IntegrityError("enclave has not verified the bundle");
}

template <typename T>
const SealedLayer<T>& Enclave<T>::Sealed(std::size_t layer_id) const {
  const SealedLayer<T>* s = secrets_.Find(layer_id);
  if (s == nullptr) {
    throw ProtocolError("layer " + std::to_string(layer_id) +
                        " has no sealed secrets");
  }
  return *s;
}

template <typename T>
bool Enclave<T>::IsProtected(std::size_t layer_id) const {
  return secrets_.Find(layer_id) != nullptr;
}

template <typename T>
std::size_t Enclave<T>::StageEnd(std::size_t layer_id) const {
  return layer_id + 1 + Sealed(layer_id).epilogue.size();
}

template <typename T>
bool Enclave<T>::BlindsOutput(std::size_t layer_id) const {
  return !Sealed(layer_id).output_scale.empty();
}

template <typename T>
std::size_t Enclave<T>::SelectMask(const SealedLayer<T>& sealed,
                                   LayerState& state) {
  const std::size_t pool = sealed.masks.size();
  if (pool == 0) throw MaskExhaustedError("mask pool is empty");
  if (state.used.size() != pool) state.used.assign(pool, false);
  std::vector<std::size_t> allowed;
  for (std::size_t e = 0; e < pool; ++e) {
    if (policy_ == MaskReusePolicy::kNoConsecutiveReuse && state.last_mask &&
        *state.last_mask == e) {
      continue;
    }
    if (policy_ == MaskReusePolicy::kSingleUse && state.used[e]) continue;
    allowed.push_back(e);
  }
  if (state.pinned) {
    const std::size_t e = *state.pinned;
    state.pinned.reset();
    if (e >= pool) throw MaskExhaustedError("pinned mask index out of range");
    return e;
  }
  if (allowed.empty()) {
    throw MaskExhaustedError("no mask left in the pool of layer " +
                             std::to_string(sealed.layer_id) + " under policy " +
                             std::string(MaskReusePolicyName(policy_)));
  }
  return allowed[state.rng.Below(allowed.size())];
}

template <typename T>
LayerJob<T> Enclave<T>::PrepareInput(std::size_t layer_id, const Tensor<T>& x) {
  RequireVerified();
  const SealedLayer<T>& s = Sealed(layer_id);
  if (x.shape() != s.input_shape) {
    throw DimensionError("layer " + std::to_string(layer_id) + " expects input " +
                         s.input_shape.ToString() + ", got " + x.shape().ToString());
  }
  Tensor<T> input = x;
  // Undo the output scale of the stage that produced x.
  for (const auto& prev : secrets_.layers) {
    if (prev.layer_id < layer_id && StageEnd(prev.layer_id) == layer_id &&
        !prev.output_scale.empty()) {
      if (prev.output_scale.size() != input.channels()) {
        throw DimensionError("output scale does not match next layer input");
      }
      for (std::size_t n = 0; n < input.batch(); ++n) {
        for (std::size_t c = 0; c < input.channels(); ++c) {
          for (T& v : input.plane(n, c)) v /= prev.output_scale[c];
        }
      }
    }
  }

  auto [it, inserted] = states_.try_emplace(
      layer_id, LayerState{SeededRng(selection_seed_,
                                     StreamId(layer_id,
                                              StreamPurpose::kEnclaveSelection)),
                           {}, {}, {}, {}, {}});
  LayerState& state = it->second;
  const std::size_t mask = SelectMask(s, state);

  Tensor<T> masked = PermuteChannels(input, s.input_perm);
  auto out = masked.data();
  auto m = s.masks[mask].data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += m[i];

  state.used[mask] = true;
  state.last_mask = mask;
  state.pending_mask = mask;
  state.pending_job = next_job_;

  LayerJob<T> job;
  job.job_id = next_job_++;
  job.layer_id = layer_id;
  job.input = std::move(masked);
  return job;
}

template <typename T>
Tensor<T> Enclave<T>::Reconstruct(std::size_t layer_id,
                                  const LayerResult<T>& result) {
  RequireVerified();
  const SealedLayer<T>& s = Sealed(layer_id);
  auto it = states_.find(layer_id);
  if (it == states_.end() || !it->second.pending_job) {
    throw ProtocolError("no pending job for layer " + std::to_string(layer_id));
  }
  LayerState& state = it->second;
  if (result.layer_id != layer_id || result.job_id != *state.pending_job) {
    throw ProtocolError("result for layer " + std::to_string(result.layer_id) +
                        " job " + std::to_string(result.job_id) +
                        " does not answer the pending job " +
                        std::to_string(*state.pending_job));
  }
  const std::size_t k_total = s.aux_perm.size();
  const Shape4 out_shape = s.output_shape;
  const Shape4 aux_shape{out_shape.n, k_total, out_shape.h, out_shape.w};
  if (result.spec.shape() != out_shape || result.aux.shape() != aux_shape) {
    throw DimensionError("result shapes " + result.spec.shape().ToString() + " / " +
                         result.aux.shape().ToString() + " do not match layer " +
                         std::to_string(layer_id));
  }
  const Tensor<T>& noise = s.noise[*state.pending_mask];
  const std::size_t c_out = out_shape.c;
  const std::size_t area = out_shape.h * out_shape.w;

  // Dense coefficient rows over every auxiliary position; decoy positions
  // carry 0 so the loop never branches on the marking.
  auto dense_row = [&](std::size_t r) {
    std::vector<T> row(k_total, T{0});
    for (std::size_t j = 0; j < s.k_pub(); ++j) {
      row[s.real_positions[j]] = CoefficientFor(s, r, j);
    }
    return row;
  };

  std::uint64_t ops = 0;
  Tensor<T> y(out_shape);
  ExactAccumulator acc;
  std::vector<double> shared;
  if (!s.per_output_coefficients) {
    const std::vector<T> row = dense_row(0);
    shared.assign(out_shape.n * area, 0.0);
    for (std::size_t n = 0; n < out_shape.n; ++n) {
      for (std::size_t i = 0; i < area; ++i) {
        acc.Reset();
        for (std::size_t p = 0; p < k_total; ++p) {
          acc.AddProduct<T>(row[p], result.aux.plane(n, p)[i]);
          ++ops;
        }
        shared[n * area + i] = acc.Result();
      }
    }
  }
  for (std::size_t r = 0; r < c_out; ++r) {
    const std::vector<T> row =
        s.per_output_coefficients ? dense_row(r) : std::vector<T>{};
    // Public position r carries original channel sigma(r); writing it there
    // applies sigma^-1.
    const std::size_t original = s.output_perm[r];
    const double bias = static_cast<double>(s.bias[original]);
    for (std::size_t n = 0; n < out_shape.n; ++n) {
      auto spec = result.spec.plane(n, r);
      auto m = noise.plane(n, r);
      auto dst = y.plane(n, original);
      for (std::size_t i = 0; i < area; ++i) {
        acc.Reset();
        acc.Add(static_cast<double>(spec[i]));
        if (s.per_output_coefficients) {
          for (std::size_t p = 0; p < k_total; ++p) {
            acc.AddProduct<T>(row[p], result.aux.plane(n, p)[i]);
            ++ops;
          }
        } else {
          acc.Add(shared[n * area + i]);
        }
        acc.Add(-static_cast<double>(m[i]));
        acc.Add(bias);
        ++ops;
        dst[i] = static_cast<T>(acc.Result());
      }
    }
  }
  last_ops_ = ops;
  state.pending_job.reset();
  state.pending_mask.reset();

  for (const auto& layer : s.epilogue) y = ApplyLayer(layer, y);
  if (!s.output_scale.empty()) {
    if (s.output_scale.size() != y.channels()) {
      throw DimensionError("output scale does not match stage output");
    }
    for (std::size_t n = 0; n < y.batch(); ++n) {
      for (std::size_t c = 0; c < y.channels(); ++c) {
        for (T& v : y.plane(n, c)) v *= s.output_scale[c];
      }
    }
  }
  return y;
}

template <typename T>
std::optional<std::size_t> Enclave<T>::LastMask(std::size_t layer_id) const {
  auto it = states_.find(layer_id);
  if (it == states_.end()) return std::nullopt;
  return it->second.last_mask;
}

template <typename T>
void Enclave<T>::PinNextMask(std::size_t layer_id, std::size_t index) {
  auto [it, inserted] = states_.try_emplace(
      layer_id, LayerState{SeededRng(selection_seed_,
                                     StreamId(layer_id,
                                              StreamPurpose::kEnclaveSelection)),
                           {}, {}, {}, {}, {}});
  it->second.pinned = index;
}

template <typename T>
std::size_t Enclave<T>::SecretsBytes() const {
  return SerializeSecrets(secrets_).size();
}

template class Enclave<float>;
template class Enclave<double>;

}  // namespace convshatter
