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


// Randomized invariants. Each test sweeps a fixed set of seeds so failures
// reproduce.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "convshatter/attack.h"
#include "convshatter/enclave.h"
#include "convshatter/exact_sum.h"
#include "convshatter/obfuscator.h"
#include "convshatter/ops.h"
#include "convshatter/pipeline.h"
#include "convshatter/serialization.h"
#include "convshatter/stats.h"
#include "convshatter/toy_models.h"
#include "convshatter/transport.h"
#include "convshatter/worker.h"

namespace convshatter {
namespace {

constexpr std::uint64_t kSeeds = 25;

ObfuscationConfig RandomConfig(std::uint64_t seed, const ModelDescriptor<double>& model) {
  SeededRng rng(seed, 99);
  std::size_t min_c_out = SIZE_MAX;
  for (auto id : LinearLayerIndices(model)) {
    min_c_out = std::min(min_c_out, model.layers[id].kernels.c_out());
  }
  ObfuscationConfig cfg;
  cfg.selector = LayerSelector::All();
  cfg.k_pub = rng.Below(std::min<std::size_t>(min_c_out, 6) + 1);
  cfg.k_fake = rng.Below(4);
  cfg.mask_pool = 1 + rng.Below(3);
  cfg.orthogonalize = rng.Below(2) == 0;
  cfg.per_output_coefficients = rng.Below(2) == 0;
  cfg.seed = seed;
  return cfg;
}

TEST(PropertyTest, PermutationInverseAndComposition) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    SeededRng rng(seed, 0);
    const std::size_t n = 1 + rng.Below(40);
    const Permutation p = Permutation::Random(n, rng);
    Tensor<double> t(Shape4{1, n, 1, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.Normal();
    EXPECT_EQ(PermuteChannels(PermuteChannels(t, p), p.Inverse()), t);
    EXPECT_EQ(p.Inverse().Inverse(), p);
  }
}

TEST(PropertyTest, ExactSumIgnoresOrder) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    SeededRng rng(seed, 1);
    std::vector<double> terms(50 + rng.Below(200));
    for (double& v : terms) v = rng.Normal() * std::ldexp(1.0, static_cast<int>(rng.Below(80)) - 40);
    ExactAccumulator forward, backward;
    for (double v : terms) forward.Add(v);
    for (auto it = terms.rbegin(); it != terms.rend(); ++it) backward.Add(*it);
    EXPECT_EQ(forward.Result(), backward.Result());
  }
}

TEST(PropertyTest, ConvIsLinearInInput) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    SeededRng rng(seed, 2);
    const std::size_t c = 1 + rng.Below(4), extent = 3 + rng.Below(6);
    const auto kernels = RandomKernels<double>(1 + rng.Below(5), c, 3, 3, rng);
    const ConvGeometry g{1 + rng.Below(2), rng.Below(2)};
    Tensor<double> a(Shape4{1, c, extent, extent}), b(a.shape());
    for (double& v : a.data()) v = rng.Normal();
    for (double& v : b.data()) v = rng.Normal();
    const auto lhs = Conv2d(Add(a, b), kernels, g, false);
    const auto rhs = Add(Conv2d(a, kernels, g, false), Conv2d(b, kernels, g, false));
    EXPECT_LE(MaxRelativeDelta(lhs, rhs), 1e-12);
  }
}

TEST(PropertyTest, ModelSerializationRoundTrips) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto model = MakeToyModel<float>(RandomToySpec(seed), seed);
    const Bytes bytes = SerializeModel(model);
    EXPECT_EQ(DeserializeModel<float>(bytes), model);
  }
}

TEST(PropertyTest, SecureInferenceMatchesBaseline) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto model = MakeToyModel<double>(RandomToySpec(seed), seed);
    const auto cfg = RandomConfig(seed, model);
    const auto [bundle, secrets] = ObfuscateModel(model, cfg);
    EXPECT_EQ(DeserializeBundle<double>(SerializeBundle(bundle)), bundle);
    const Worker<double> worker(bundle);
    InProcessTransport transport(
        [&](std::span<const std::uint8_t> req) { return worker.Handle(req); });
    Enclave<double> enclave(secrets, MaskReusePolicy::kAllowReuse, seed);
    const auto x = RandomInput<double>(model.input_shape, seed);
    const auto out = RunSecure(bundle, enclave, transport, x).output;
    EXPECT_LE(MaxRelativeDelta(out, RunBaseline(model, x)), 1e-11) << "seed " << seed;
  }
}

TEST(PropertyTest, RecoveryAndAuxiliaryLayout) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto model = MakeToyModel<double>(RandomToySpec(seed), seed + 100);
    const auto cfg = RandomConfig(seed, model);
    const auto [bundle, secrets] = ObfuscateModel(model, cfg);
    for (const auto& s : secrets.layers) {
      const auto& layer = std::get<ObfuscatedLayer<double>>(bundle.layers[s.layer_id]);
      EXPECT_EQ(layer.k_total(), cfg.k_pub + cfg.k_fake);
      EXPECT_EQ(s.k_pub(), cfg.k_pub);
      const auto marking = DecoyMarking(s, layer.k_total());
      EXPECT_EQ(static_cast<std::size_t>(std::count(marking.begin(), marking.end(), true)),
                cfg.k_fake);
      const auto restored = RecoverKernels(layer, s);
      const auto& original = model.layers[s.layer_id].kernels;
      double worst = 0.0;
      for (std::size_t i = 0; i < original.weights().size(); ++i) {
        worst = std::max(worst, std::abs(restored.weights()[i] - original.weights()[i]));
      }
      EXPECT_LE(worst, 1e-12) << "seed " << seed << " layer " << s.layer_id;
    }
  }
}

TEST(PropertyTest, OutputDoesNotDependOnMaskChoice) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = MakeToyModel<double>(RandomToySpec(seed), seed + 200);
    ObfuscationConfig cfg;
    cfg.selector = LayerSelector::Parse("0");
    cfg.k_pub = 1;
    cfg.mask_pool = 3;
    cfg.seed = seed;
    const auto [bundle, secrets] = ObfuscateModel(model, cfg);
    const Worker<double> worker(bundle);
    const auto x = RandomInput<double>(model.input_shape, seed);
    const std::size_t id = secrets.layers[0].layer_id;
    std::vector<Tensor<double>> outputs;
    for (std::size_t e = 0; e < 3; ++e) {
      Enclave<double> enclave(secrets, MaskReusePolicy::kAllowReuse);
      enclave.VerifyBundle(bundle);
      enclave.PinNextMask(id, e);
      outputs.push_back(enclave.Reconstruct(
          id, worker.ExecuteProtected(enclave.PrepareInput(id, x))));
    }
    EXPECT_LE(MaxRelativeDelta(outputs[1], outputs[0]), 1e-12);
    EXPECT_LE(MaxRelativeDelta(outputs[2], outputs[0]), 1e-12);
  }
}

TEST(PropertyTest, StatisticBounds) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    SeededRng rng(seed, 3);
    std::vector<double> a(2 + rng.Below(60)), b(2 + rng.Below(60));
    for (double& v : a) v = rng.Normal();
    for (double& v : b) v = rng.Normal() + 0.3;
    const KsResult ab = KsTest(a, b);
    EXPECT_GE(ab.statistic, 0.0);
    EXPECT_LE(ab.statistic, 1.0);
    EXPECT_GE(ab.p_value, 0.0);
    EXPECT_LE(ab.p_value, 1.0);
    EXPECT_DOUBLE_EQ(KsTest(b, a).statistic, ab.statistic);
    const double gini = DiagonalGini(a);
    EXPECT_GE(gini, 0.0);
    EXPECT_LE(gini, 1.0 - 1.0 / static_cast<double>(a.size()) + 1e-12);
  }
}

TEST(PropertyTest, AlignmentIsInjective) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    SeededRng rng(seed, 4);
    Matrix m(1 + rng.Below(10), 0);
    m.cols = m.rows + rng.Below(5);
    m.values.resize(m.rows * m.cols);
    for (double& v : m.values) v = rng.Uniform();
    const auto a = GreedyAlignment(m);
    std::vector<std::size_t> cols = a.match;
    std::sort(cols.begin(), cols.end());
    EXPECT_EQ(std::adjacent_find(cols.begin(), cols.end()), cols.end());
    EXPECT_LT(cols.back(), m.cols);
  }
}

}  // namespace
}  // namespace convshatter
