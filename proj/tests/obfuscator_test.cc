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


#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "convshatter/config.h"
#include "convshatter/error.h"
#include "convshatter/obfuscator.h"
#include "convshatter/ops.h"
#include "convshatter/serialization.h"
#include "convshatter/stats.h"
#include "convshatter/toy_models.h"

namespace convshatter {
namespace {

double Dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

ObfuscationConfig AllLayers(std::uint64_t seed) {
  ObfuscationConfig cfg;
  cfg.selector = LayerSelector::All();
  cfg.seed = seed;
  return cfg;
}

TEST(PatchBasesTest, OrthogonalWithMedianNorm) {
  SeededRng rng(1, 0);
  const auto layer = RandomKernels<float>(12, 4, 3, 3, rng);
  const auto bases = BuildPatchBases(layer, 5, rng, true);
  ASSERT_EQ(bases.c_out(), 5u);
  std::vector<double> norms;
  for (std::size_t o = 0; o < layer.c_out(); ++o) {
    norms.push_back(std::sqrt(Dot(layer.kernel(o), layer.kernel(o))));
  }
  const double target = Median(norms);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(std::sqrt(Dot(bases.kernel(i), bases.kernel(i))), target, 1e-5 * target);
    for (std::size_t j = i + 1; j < 5; ++j) {
      EXPECT_NEAR(Dot(bases.kernel(i), bases.kernel(j)) / (target * target), 0.0, 1e-5);
    }
  }
}

TEST(PatchBasesTest, RankDeficiencyIsRankError) {
  SeededRng rng(2, 0);
  KernelSet<float> same(4, 1, 2, 2);
  for (std::size_t o = 0; o < 4; ++o) {
    auto k = same.kernel(o);
    std::fill(k.begin(), k.end(), 1.0f);
  }
  EXPECT_THROW(BuildPatchBases(same, 2, rng, true), RankError);
  EXPECT_THROW(BuildPatchBases(same, 5, rng, true), RankError);
  EXPECT_THROW(BuildPatchBases(KernelSet<float>(3, 1, 2, 2), 1, rng, true), RankError);
  EXPECT_NO_THROW(BuildPatchBases(same, 5, rng, false));
}

TEST(DecoyTest, ShapedDecoysStayInVarianceBand) {
  SeededRng rng(3, 0);
  const auto layer = RandomKernels<float>(16, 8, 3, 3, rng);
  const auto bases = BuildPatchBases(layer, 6, rng, true);
  const auto reference = DecoyReference::FromKernels(bases);
  const auto decoys = SynthesizeDecoys(bases, reference, 20, layer.shape(), rng, true);
  ASSERT_EQ(decoys.c_out(), 20u);
  for (std::size_t d = 0; d < decoys.c_out(); ++d) {
    const auto row = decoys.kernel(d);
    const std::vector<double> values(row.begin(), row.end());
    const auto stats = ComputeKernelStats(values);
    EXPECT_GE(stats.variance, 0.8 * reference.median_variance * (1 - 1e-5));
    EXPECT_LE(stats.variance, 1.2 * reference.median_variance * (1 + 1e-5));
  }
}

TEST(ObfuscateLayerTest, ShapesAndPositions) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 7);
  ObfuscationConfig cfg = AllLayers(1);
  cfg.k_pub = 3;
  cfg.k_fake = 2;
  cfg.mask_pool = 5;
  SeededRng rng(1, 0);
  const auto shapes = InferShapes(model);
  const auto result = ObfuscateLayer(model.layers[0], shapes[0], 0, cfg, rng);
  const auto& layer = result.layer;
  const auto& s = result.secrets;
  EXPECT_EQ(layer.damaged.shape(), model.layers[0].kernels.shape());
  EXPECT_EQ(layer.k_total(), 5u);
  EXPECT_TRUE(layer.damaged.bias().empty());
  EXPECT_TRUE(layer.auxiliary.bias().empty());
  EXPECT_EQ(layer.noise_refs.size(), 5u);
  EXPECT_EQ(s.masks.size(), 5u);
  EXPECT_EQ(s.noise.size(), 5u);
  EXPECT_EQ(s.k_pub(), 3u);
  EXPECT_EQ(s.coefficients.size(), 3u);
  const std::set<std::uint32_t> unique(s.real_positions.begin(), s.real_positions.end());
  EXPECT_EQ(unique.size(), 3u);
  for (auto p : s.real_positions) EXPECT_LT(p, 5u);
  EXPECT_EQ(s.masks[0].shape(), shapes[0]);
  EXPECT_EQ(s.noise[0].shape(), shapes[1]);
}

TEST(ObfuscateLayerTest, RecoveryRestoresOriginalKernels) {
  const auto model = MakeToyModel<double>(ToyModelSpec{}, 8);
  for (bool per_output : {false, true}) {
    ObfuscationConfig cfg = AllLayers(2);
    cfg.per_output_coefficients = per_output;
    const auto [bundle, secrets] = ObfuscateModel(model, cfg);
    for (const auto& s : secrets.layers) {
      const auto& obf = std::get<ObfuscatedLayer<double>>(bundle.layers[s.layer_id]);
      const auto restored = RecoverKernels(obf, s);
      const auto& original = model.layers[s.layer_id].kernels;
      ASSERT_EQ(restored.shape(), original.shape());
      for (std::size_t i = 0; i < original.weights().size(); ++i) {
        EXPECT_NEAR(restored.weights()[i], original.weights()[i],
                    1e-12 * (1 + std::abs(original.weights()[i])));
      }
      EXPECT_EQ(restored.bias(), original.bias());
    }
  }
}

TEST(ObfuscateLayerTest, PerOutputCoefficientsShape) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 9);
  ObfuscationConfig cfg = AllLayers(3);
  cfg.per_output_coefficients = true;
  const auto [bundle, secrets] = ObfuscateModel(model, cfg);
  for (const auto& s : secrets.layers) {
    EXPECT_EQ(s.coefficients.size(), model.layers[s.layer_id].kernels.c_out() * cfg.k_pub);
  }
}

TEST(ObfuscateLayerTest, WithoutPermutationEverythingIsIdentity) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 10);
  ObfuscationConfig cfg = AllLayers(4);
  cfg.permute = false;
  const auto [bundle, secrets] = ObfuscateModel(model, cfg);
  for (const auto& s : secrets.layers) {
    EXPECT_TRUE(s.input_perm.IsIdentity());
    EXPECT_TRUE(s.output_perm.IsIdentity());
    EXPECT_TRUE(s.aux_perm.IsIdentity());
  }
}

TEST(ObfuscateLayerTest, CapAndNonLinearAreConfigErrors) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 11);
  const auto shapes = InferShapes(model);
  SeededRng rng(1, 0);
  ObfuscationConfig cfg = AllLayers(1);
  cfg.k_pub = 9;  // first layer has 8 kernels
  EXPECT_THROW(ObfuscateLayer(model.layers[0], shapes[0], 0, cfg, rng), ConfigError);
  cfg.k_pub = 4;
  cfg.k_pub_cap = 3;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg.k_pub_cap.reset();
  EXPECT_THROW(ObfuscateLayer(model.layers[1], shapes[1], 1, cfg, rng), ConfigError);
}

TEST(ObfuscateModelTest, DeterministicAndIndependentOfJobs) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 12);
  ObfuscationConfig one = AllLayers(77);
  ObfuscationConfig four = one;
  four.jobs = 4;
  const auto a = ObfuscateModel(model, one);
  const auto b = ObfuscateModel(model, one);
  const auto c = ObfuscateModel(model, four);
  EXPECT_EQ(SerializeBundle(a.first), SerializeBundle(b.first));
  EXPECT_EQ(SerializeSecrets(a.second), SerializeSecrets(b.second));
  EXPECT_EQ(SerializeBundle(a.first), SerializeBundle(c.first));
  EXPECT_EQ(SerializeSecrets(a.second), SerializeSecrets(c.second));
  ObfuscationConfig other = one;
  other.seed = 78;
  EXPECT_NE(SerializeBundle(ObfuscateModel(model, other).first), SerializeBundle(a.first));
}

TEST(ObfuscateModelTest, OutputScaleOnlyBeforeProtectedStage) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 13);
  ObfuscationConfig cfg = AllLayers(5);
  const auto [bundle, secrets] = ObfuscateModel(model, cfg);
  ASSERT_FALSE(secrets.layers.empty());
  for (std::size_t i = 0; i + 1 < secrets.layers.size(); ++i) {
    EXPECT_FALSE(secrets.layers[i].output_scale.empty());
    for (float u : secrets.layers[i].output_scale) {
      EXPECT_GE(u, 0.5f);
      EXPECT_LE(u, 2.0f);
    }
  }
  EXPECT_TRUE(secrets.layers.back().output_scale.empty());
  cfg.blind_outputs = false;
  for (const auto& s : ObfuscateModel(model, cfg).second.layers) {
    EXPECT_TRUE(s.output_scale.empty());
  }
}

TEST(ObfuscateModelTest, SelectorPicksLayers) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 14);
  ObfuscationConfig cfg = AllLayers(6);
  cfg.selector = LayerSelector::Parse("1");
  const auto [bundle, secrets] = ObfuscateModel(model, cfg);
  ASSERT_EQ(secrets.layers.size(), 1u);
  const auto linear = LinearLayerIndices(model);
  EXPECT_EQ(secrets.layers[0].layer_id, linear[1]);
  EXPECT_TRUE(bundle.IsProtected(linear[1]));
  EXPECT_FALSE(bundle.IsProtected(linear[0]));
}

TEST(ConfigTest, ParseText) {
  const auto cfg = ParseConfigText(
      "# comment\n k_pub = 6\nk_fake=3\nlayers = 0,2\nmask_pool = 2\n"
      "orthogonalize = false\nreuse = single-use\nmask_scale = 0.5\nseed = 9\n");
  EXPECT_EQ(cfg.k_pub, 6u);
  EXPECT_EQ(cfg.k_fake, 3u);
  EXPECT_EQ(cfg.selector.mode(), LayerSelector::Mode::kExplicit);
  EXPECT_EQ(cfg.mask_pool, 2u);
  EXPECT_FALSE(cfg.orthogonalize);
  EXPECT_EQ(cfg.reuse, MaskReusePolicy::kSingleUse);
  EXPECT_DOUBLE_EQ(cfg.mask_scale, 0.5);
  EXPECT_EQ(cfg.seed, 9u);
}

TEST(ConfigTest, RejectsBadInput) {
  EXPECT_THROW(ParseConfigText("k_pub 4"), ConfigError);
  EXPECT_THROW(ParseConfigText("colour = blue"), ConfigError);
  EXPECT_THROW(ParseConfigText("k_pub = -1"), ConfigError);
  EXPECT_THROW(ParseConfigText("orthogonalize = maybe"), ConfigError);
  EXPECT_THROW(ParseConfigText("mask_pool = 0"), ConfigError);
  EXPECT_THROW(ParseConfigText("reuse = sometimes"), ConfigError);
  EXPECT_THROW(ParseConfigText("jobs = 0"), ConfigError);
}

TEST(LayerSelectorTest, ModesResolve) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 15);
  const auto linear = LinearLayerIndices(model);
  ASSERT_EQ(linear.size(), 4u);
  EXPECT_EQ(LayerSelector::All().Resolve(model), linear);
  EXPECT_EQ(LayerSelector::Parse("0,3").Resolve(model),
            (std::vector<std::size_t>{linear[0], linear[3]}));
  EXPECT_EQ(LayerSelector::Parse("50%").Resolve(model),
            (std::vector<std::size_t>{linear[0], linear[1]}));
  EXPECT_EQ(LayerSelector::Parse("0.3").Resolve(model),
            (std::vector<std::size_t>{linear[0], linear[1]}));
  EXPECT_THROW(LayerSelector::Parse("7").Resolve(model), ConfigError);
  EXPECT_THROW(LayerSelector::Parse("").Resolve(model), ConfigError);
  EXPECT_THROW(LayerSelector::Parse("x,y"), ConfigError);
  EXPECT_THROW(LayerSelector::Parse("150%"), ConfigError);
  // The toy model carries no protect flags, so the flag selector is empty.
  EXPECT_THROW(LayerSelector().Resolve(model), ConfigError);
}

}  // namespace
}  // namespace convshatter
