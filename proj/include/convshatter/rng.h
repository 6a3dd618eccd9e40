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

#ifndef CONVSHATTER_RNG_H_
#define CONVSHATTER_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>

namespace convshatter {

// Deterministic random stream keyed by (seed, stream id). The engine and
// seeding (mt19937_64 + seed_seq) are fully specified by the standard; the
// variate transforms are implemented here rather than with <random>
// distributions, whose output is implementation-defined.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t NextU64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Standard normal (Box-Muller).
  double Normal();
  // Uniform integer in [0, n); n must be > 0.
  std::size_t Below(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream ids used by the offline phase. One stream per (layer, purpose) keeps
// parallel and serial obfuscation bit-identical.
enum class StreamPurpose : std::uint64_t {
  kLayer = 1,
  kMaskPool = 2,
  kOutputMask = 3,
  kEnclaveSelection = 4,
  kInputs = 5,
  kModel = 6,
};

inline std::uint64_t StreamId(std::size_t layer, StreamPurpose purpose) {
  return (static_cast<std::uint64_t>(layer) << 8) |
         static_cast<std::uint64_t>(purpose);
}

}  // namespace convshatter

#endif  // CONVSHATTER_RNG_H_
