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

#ifndef CONVSHATTER_ENCLAVE_H_
#define CONVSHATTER_ENCLAVE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "convshatter/bundle.h"
#include "convshatter/config.h"
#include "convshatter/rng.h"
#include "convshatter/wire.h"

namespace convshatter {

// Trusted side. Holds the sealed secrets and never hands them out; the only
// things that leave are LayerJob messages.
//
// One instance serves one inference stream and is not thread-safe.
template <typename T>
class Enclave {
 public:
  Enclave(SealedSecrets<T> secrets,
          MaskReusePolicy policy = MaskReusePolicy::kNoConsecutiveReuse,
          std::uint64_t selection_seed = 0);

  // Compares against the sealed bundle digest. Throws IntegrityError on a
  // mismatch, after which every operation refuses to run.
  bool VerifyBundle(const Digest& bundle_digest);
  // Also checks every sealed per-layer digest against the bundle.
  bool VerifyBundle(const ObfuscatedBundle<T>& bundle);
  bool verified() const { return verified_; }

  bool IsProtected(std::size_t layer_id) const;
  // One past the last layer the stage starting at layer_id covers.
  std::size_t StageEnd(std::size_t layer_id) const;
  // True when the stage output leaves the enclave scaled by m_out.
  bool BlindsOutput(std::size_t layer_id) const;

  // Removes the previous stage's output scale if any, applies pi, picks a
  // pool mask and returns x_hat = pi(x) + m. Throws DimensionError,
  // MaskExhaustedError, ProtocolError, IntegrityError.
  LayerJob<T> PrepareInput(std::size_t layer_id, const Tensor<T>& x);

  // f_r = C_spec[r] + sum_p row_r[p] C_aux[p] - M[r] + b, back to original
  // channel order, epilogue applied, output scale applied when configured.
  // Throws ProtocolError when the result does not answer the pending job.
  Tensor<T> Reconstruct(std::size_t layer_id, const LayerResult<T>& result);

  // Multiply-adds of the last Reconstruct combination; depends on shapes
  // only.
  std::uint64_t last_op_count() const { return last_ops_; }

  // Pool index used by the last PrepareInput of a layer (evaluation hook).
  std::optional<std::size_t> LastMask(std::size_t layer_id) const;
  // Forces the next PrepareInput of a layer to use this pool entry.
  void PinNextMask(std::size_t layer_id, std::size_t index);

  // Bytes of sealed state held for the enclave memory report.
  std::size_t SecretsBytes() const;

 private:
  struct LayerState {
    SeededRng rng;
    std::vector<bool> used;
    std::optional<std::size_t> last_mask;
    std::optional<std::size_t> pinned;
    std::optional<std::uint64_t> pending_job;
    std::optional<std::size_t> pending_mask;
  };

  const SealedLayer<T>& Sealed(std::size_t layer_id) const;
  void RequireVerified() const;
  std::size_t SelectMask(const SealedLayer<T>& sealed, LayerState& state);

  SealedSecrets<T> secrets_;
  MaskReusePolicy policy_;
  std::uint64_t selection_seed_;
  bool verified_ = false;
  bool failed_ = false;
  std::uint64_t next_job_ = 1;
  std::uint64_t last_ops_ = 0;
  std::map<std::size_t, LayerState> states_;
};

}  // namespace convshatter

#endif  // CONVSHATTER_ENCLAVE_H_
