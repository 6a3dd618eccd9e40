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

#include "convshatter/obfuscator.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "convshatter/error.h"
#include "convshatter/exact_sum.h"
#include "convshatter/ops.h"
#include "convshatter/serialization.h"
#include "convshatter/stats.h"

namespace convshatter {
namespace {

using Vec = std::vector<double>;

double Dot(const Vec& a, const Vec& b) {
  ExactAccumulator acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc.AddProduct(a[i], b[i]);
  return acc.Result();
}

double Norm(const Vec& a) { return std::sqrt(Dot(a, a)); }

double Variance(const Vec& a) {
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(a.size());
  double ss = 0.0;
  for (double v : a) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(a.size());
}

template <typename T>
Vec KernelRow(const KernelSet<T>& k, std::size_t o) {
  auto row = k.kernel(o);
  return Vec(row.begin(), row.end());
}

template <typename T>
KernelSet<T> FromRows(const std::vector<Vec>& rows, const Shape4& kernel_shape) {
  const std::size_t size = kernel_shape.c * kernel_shape.h * kernel_shape.w;
  std::vector<T> weights;
  weights.reserve(rows.size() * size);
  for (const Vec& r : rows) {
    for (double v : r) weights.push_back(static_cast<T>(v));
  }
  return KernelSet<T>(
      Shape4{rows.size(), kernel_shape.c, kernel_shape.h, kernel_shape.w},
      std::move(weights), {});
}

Vec RandomVector(std::size_t n, double sigma, SeededRng& rng) {
  Vec v(n);
  for (double& x : v) x = sigma * rng.Normal();
  return v;
}

// c ~ U(0, 1), redrawn below 1e-3, rounded to T.
template <typename T>
T DrawCoefficient(SeededRng& rng) {
  for (;;) {
    const T c = static_cast<T>(rng.Uniform());
    if (c >= static_cast<T>(1e-3)) return c;
  }
}

std::size_t StageEndOf(const auto& layers, std::size_t start) {
  return StageEnd(layers, start, [](const auto& l) { return l.kind; });
}

}  // namespace

template <typename T>
DecoyReference DecoyReference::FromKernels(const KernelSet<T>& kernels) {
  DecoyReference ref;
  std::vector<double> variances;
  double sum_sq = 0.0;
  for (std::size_t o = 0; o < kernels.c_out(); ++o) {
    const Vec row = KernelRow(kernels, o);
    ref.norms.push_back(Norm(row));
    variances.push_back(Variance(row));
    for (double v : row) sum_sq += v * v;
  }
  std::sort(ref.norms.begin(), ref.norms.end());
  ref.median_variance = variances.empty() ? 0.0 : Median(variances);
  const std::size_t n = kernels.weights().size();
  ref.entry_sigma = n ? std::sqrt(sum_sq / static_cast<double>(n)) : 0.0;
  return ref;
}

template <typename T>
KernelSet<T> BuildPatchBases(const KernelSet<T>& layer, std::size_t k_pub,
                             SeededRng& rng, bool orthogonalize) {
  const Shape4 kernel_shape = layer.shape();
  const std::size_t size = layer.kernel_size();
  std::vector<Vec> bases;
  if (k_pub == 0) return FromRows<T>(bases, kernel_shape);

  if (!orthogonalize) {
    const double sigma = DecoyReference::FromKernels(layer).entry_sigma;
    for (std::size_t k = 0; k < k_pub; ++k) {
      bases.push_back(RandomVector(size, sigma, rng));
    }
    return FromRows<T>(bases, kernel_shape);
  }

  if (k_pub > layer.c_out()) {
    throw RankError("cannot build " + std::to_string(k_pub) +
                    " orthogonal bases from " + std::to_string(layer.c_out()) +
                    " kernels");
  }
  std::vector<Vec> rows;
  std::vector<double> norms;
  for (std::size_t o = 0; o < layer.c_out(); ++o) {
    rows.push_back(KernelRow(layer, o));
    norms.push_back(Norm(rows.back()));
  }
  const double target = Median(norms);
  if (!(target > 0.0)) throw RankError("layer kernels are all zero");

  for (std::size_t k = 0; k < k_pub; ++k) {
    Vec v(size, 0.0);
    for (std::size_t o = 0; o < rows.size(); ++o) {
      const double g = rng.Normal();
      for (std::size_t e = 0; e < size; ++e) v[e] += g * rows[o][e];
    }
    const double before = Norm(v);
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec& q : bases) {
        const double proj = Dot(v, q);
        for (std::size_t e = 0; e < size; ++e) v[e] -= proj * q[e];
      }
    }
    const double after = Norm(v);
    if (!(after > 1e-10 * before) || !(after > 0.0)) {
      throw RankError("patch-basis mixtures are rank deficient");
    }
    for (double& x : v) x /= after;
    bases.push_back(std::move(v));
  }
  for (Vec& b : bases) {
    for (double& x : b) x *= target;
  }
  return FromRows<T>(bases, kernel_shape);
}

template <typename T>
KernelSet<T> SynthesizeDecoys(const KernelSet<T>& bases,
                              const DecoyReference& reference,
                              std::size_t k_fake, const Shape4& kernel_shape,
                              SeededRng& rng, bool shaping) {
  const std::size_t size = kernel_shape.c * kernel_shape.h * kernel_shape.w;
  std::vector<Vec> decoys;
  for (std::size_t d = 0; d < k_fake; ++d) {
    if (!shaping) {
      decoys.push_back(RandomVector(size, reference.entry_sigma, rng));
      continue;
    }
    Vec v(size, 0.0);
    if (bases.c_out() == 0) {
      v = RandomVector(size, 1.0, rng);
    } else {
      for (std::size_t k = 0; k < bases.c_out(); ++k) {
        const double g = rng.Normal();
        auto row = bases.kernel(k);
        for (std::size_t e = 0; e < size; ++e) v[e] += g * row[e];
      }
    }
    const double target = SortedQuantile(reference.norms, rng.Uniform());
    const double norm = Norm(v);
    if (norm > 0.0) {
      for (double& x : v) x *= target / norm;
    }
    const double var = Variance(v);
    const double lo = 0.8 * reference.median_variance;
    const double hi = 1.2 * reference.median_variance;
    if (var > 0.0 && (var < lo || var > hi)) {
      const double scale = std::sqrt(std::clamp(var, lo, hi) / var);
      for (double& x : v) x *= scale;
    }
    decoys.push_back(std::move(v));
  }
  return FromRows<T>(decoys, kernel_shape);
}

template <typename T>
T CoefficientFor(const SealedLayer<T>& secrets, std::size_t public_row,
                 std::size_t basis) {
  if (!secrets.per_output_coefficients) return secrets.coefficients[basis];
  const std::size_t original = secrets.output_perm[public_row];
  return secrets.coefficients[original * secrets.k_pub() + basis];
}

template <typename T>
LayerObfuscation<T> ObfuscateLayer(const LayerDescriptor<T>& layer,
                                   const Shape4& input_shape,
                                   std::size_t layer_id,
                                   const ObfuscationConfig& cfg,
                                   SeededRng& rng) {
  if (!IsLinear(layer.kind)) {
    throw ConfigError("layer " + std::to_string(layer_id) +
                      " is not a conv or dense layer");
  }
  const KernelSet<T>& original = layer.kernels;
  const std::size_t c_out = original.c_out();
  const std::size_t c_in = original.c_in();
  if (c_out == 0) throw ConfigError("layer has no output kernels");
  const std::size_t cap = std::min(cfg.k_pub_cap.value_or(c_out), c_out);
  if (cfg.k_pub > cap) {
    throw ConfigError("k_pub " + std::to_string(cfg.k_pub) + " exceeds cap " +
                      std::to_string(cap) + " for layer " +
                      std::to_string(layer_id));
  }
  const std::size_t k_pub = cfg.k_pub;
  const std::size_t k_total = k_pub + cfg.k_fake;
  const std::size_t size = original.kernel_size();

  LayerObfuscation<T> out;
  SealedLayer<T>& s = out.secrets;
  s.layer_id = layer_id;
  s.input_shape = input_shape;
  s.output_shape = LayerOutputShape(layer.kind, original.shape(),
                                    layer.geometry, layer.pool, input_shape);

  // Input-channel shuffle.
  s.input_perm = cfg.permute ? Permutation::Random(c_in, rng)
                             : Permutation::Identity(c_in);
  KernelSet<T> shuffled = PermuteKernelInputs(original, s.input_perm);

  // Auxiliary kernels: generated order is bases first, then decoys.
  const KernelSet<T> bases =
      BuildPatchBases(shuffled, k_pub, rng, cfg.orthogonalize);
  const DecoyReference reference = k_pub > 0
                                       ? DecoyReference::FromKernels(bases)
                                       : DecoyReference::FromKernels(shuffled);
  const KernelSet<T> decoys = SynthesizeDecoys(
      bases, reference, cfg.k_fake, original.shape(), rng, cfg.shape_decoys);
  auto generated = [&](std::size_t g) {
    return g < k_pub ? bases.kernel(g) : decoys.kernel(g - k_pub);
  };

  s.aux_perm = cfg.permute ? Permutation::Random(k_total, rng)
                           : Permutation::Identity(k_total);
  const Permutation aux_inverse = s.aux_perm.Inverse();
  KernelSet<T> auxiliary(k_total, c_in, original.k_h(), original.k_w());
  auxiliary.bias().clear();
  for (std::size_t p = 0; p < k_total; ++p) {
    auto src = generated(s.aux_perm[p]);
    std::copy(src.begin(), src.end(), auxiliary.kernel(p).begin());
  }
  for (std::size_t j = 0; j < k_pub; ++j) s.real_positions.push_back(aux_inverse[j]);

  s.per_output_coefficients = cfg.per_output_coefficients;
  const std::size_t coefficient_count =
      cfg.per_output_coefficients ? c_out * k_pub : k_pub;
  for (std::size_t i = 0; i < coefficient_count; ++i) {
    s.coefficients.push_back(DrawCoefficient<T>(rng));
  }

  s.output_perm = cfg.permute ? Permutation::Random(c_out, rng)
                              : Permutation::Identity(c_out);
  const KernelSet<T> public_order = PermuteKernelOutputs(shuffled, s.output_perm);

  // W'_r = W~[sigma(r)] - sum_j c_j P_j, rounded once from the exact value.
  KernelSet<T> damaged(c_out, c_in, original.k_h(), original.k_w());
  damaged.bias().clear();
  ExactAccumulator acc;
  for (std::size_t r = 0; r < c_out; ++r) {
    auto target = public_order.kernel(r);
    auto dst = damaged.kernel(r);
    for (std::size_t e = 0; e < size; ++e) {
      acc.Reset();
      acc.Add(static_cast<double>(target[e]));
      for (std::size_t j = 0; j < k_pub; ++j) {
        acc.AddProduct<T>(-CoefficientFor(s, r, j), generated(j)[e]);
      }
      dst[e] = static_cast<T>(acc.Result());
    }
  }
  s.bias = original.bias();
  if (s.bias.empty()) s.bias.assign(c_out, T{0});

  // Mask pool: noise uses the exact shuffled kernels in public order.
  KernelSet<T> noise_kernels(public_order.shape(),
                             std::vector<T>(public_order.weights().begin(),
                                            public_order.weights().end()),
                             {});
  for (std::size_t e = 0; e < cfg.mask_pool; ++e) {
    Tensor<T> mask(input_shape);
    for (T& v : mask.data()) v = static_cast<T>(cfg.mask_scale * rng.Normal());
    s.noise.push_back(Conv2d(mask, noise_kernels, layer.geometry, false));
    s.masks.push_back(std::move(mask));
    out.layer.noise_refs.push_back("noise." + std::to_string(e));
  }

  out.layer.kind = layer.kind;
  out.layer.damaged = std::move(damaged);
  out.layer.auxiliary = std::move(auxiliary);
  out.layer.geometry = layer.geometry;
  s.layer_digest = DigestLayer(out.layer, layer_id);
  return out;
}

template <typename T>
std::pair<ObfuscatedBundle<T>, SealedSecrets<T>> ObfuscateModel(
    const ModelDescriptor<T>& model, const ObfuscationConfig& cfg) {
  ValidateModel(model);
  cfg.Validate();
  const std::vector<std::size_t> selected = cfg.selector.Resolve(model);
  const std::vector<Shape4> shapes = InferShapes(model);

  std::vector<LayerObfuscation<T>> results(selected.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < selected.size(); k = next++) {
      try {
        const std::size_t id = selected[k];
        SeededRng rng(cfg.seed, StreamId(id, StreamPurpose::kLayer));
        results[k] = ObfuscateLayer(model.layers[id], shapes[id], id, cfg, rng);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(cfg.jobs, selected.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ObfuscatedBundle<T> bundle = MakePlainBundle(model);
  SealedSecrets<T> secrets;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const std::size_t id = selected[k];
    const std::size_t end = StageEndOf(model.layers, id);
    SealedLayer<T>& s = results[k].secrets;
    for (std::size_t e = id + 1; e < end; ++e) s.epilogue.push_back(model.layers[e]);
    const bool next_protected =
        end < model.layers.size() &&
        std::binary_search(selected.begin(), selected.end(), end);
    if (cfg.blind_outputs && next_protected) {
      SeededRng rng(cfg.seed, StreamId(id, StreamPurpose::kOutputMask));
      s.output_scale.resize(shapes[end].c);
      for (T& u : s.output_scale) u = static_cast<T>(rng.Uniform(0.5, 2.0));
    }
    bundle.layers[id] = std::move(results[k].layer);
    secrets.layers.push_back(std::move(s));
  }
  secrets.bundle_digest = DigestBundle(bundle);
  return {std::move(bundle), std::move(secrets)};
}

template <typename T>
KernelSet<double> RecoverKernels(const ObfuscatedLayer<T>& layer,
                                 const SealedLayer<T>& secrets) {
  const std::size_t c_out = layer.c_out();
  const std::size_t size = layer.damaged.kernel_size();
  KernelSet<double> public_order(c_out, layer.damaged.c_in(),
                                 layer.damaged.k_h(), layer.damaged.k_w());
  ExactAccumulator acc;
  for (std::size_t r = 0; r < c_out; ++r) {
    auto w = layer.damaged.kernel(r);
    auto dst = public_order.kernel(r);
    for (std::size_t e = 0; e < size; ++e) {
      acc.Reset();
      acc.Add(static_cast<double>(w[e]));
      for (std::size_t j = 0; j < secrets.k_pub(); ++j) {
        acc.AddProduct<T>(CoefficientFor(secrets, r, j),
                          layer.auxiliary.kernel(secrets.real_positions[j])[e]);
      }
      dst[e] = acc.Result();
    }
  }
  // public row r holds original sigma(r): undo with sigma^-1, then pi^-1.
  KernelSet<double> ordered =
      PermuteKernelOutputs(public_order, secrets.output_perm.Inverse());
  KernelSet<double> restored =
      PermuteKernelInputs(ordered, secrets.input_perm.Inverse());
  restored.bias().assign(secrets.bias.begin(), secrets.bias.end());
  return restored;
}

#define CONVSHATTER_INSTANTIATE(T)                                            \
  template DecoyReference DecoyReference::FromKernels(const KernelSet<T>&);   \
  template KernelSet<T> BuildPatchBases(const KernelSet<T>&, std::size_t,     \
                                        SeededRng&, bool);                    \
  template KernelSet<T> SynthesizeDecoys(const KernelSet<T>&,                 \
                                         const DecoyReference&, std::size_t,  \
                                         const Shape4&, SeededRng&, bool);    \
  template LayerObfuscation<T> ObfuscateLayer(                                \
      const LayerDescriptor<T>&, const Shape4&, std::size_t,                  \
      const ObfuscationConfig&, SeededRng&);                                  \
  template std::pair<ObfuscatedBundle<T>, SealedSecrets<T>> ObfuscateModel(   \
      const ModelDescriptor<T>&, const ObfuscationConfig&);                   \
  template KernelSet<double> RecoverKernels(const ObfuscatedLayer<T>&,        \
                                            const SealedLayer<T>&);           \
  template T CoefficientFor(const SealedLayer<T>&, std::size_t, std::size_t);

CONVSHATTER_INSTANTIATE(float)
CONVSHATTER_INSTANTIATE(double)

#undef CONVSHATTER_INSTANTIATE

}  // namespace convshatter
