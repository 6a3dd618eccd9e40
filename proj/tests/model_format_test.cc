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


#include <cmath>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "convshatter/config.h"
#include "convshatter/error.h"
#include "convshatter/model.h"
#include "convshatter/obfuscator.h"
#include "convshatter/pipeline.h"
#include "convshatter/serialization.h"
#include "convshatter/toy_models.h"

namespace convshatter {
namespace {

// conv(2->3, 3x3, pad 1) -> relu -> pool 2 -> flatten -> dense(12->4).
ModelDescriptor<double> MiniModel() {
  std::vector<double> w1(3 * 2 * 3 * 3), w2(4 * 12);
  for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = 0.3 * std::cos(0.7 * i + 0.1);
  for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = 0.2 * std::sin(1.3 * i + 0.2);
  ModelDescriptor<double> m;
  m.name = "mini";
  m.input_shape = Shape4{1, 2, 4, 4};
  m.class_count = 4;
  m.layers.push_back(LayerDescriptor<double>::Conv(
      KernelSet<double>(Shape4{3, 2, 3, 3}, w1, {0.1, -0.2, 0.05}), ConvGeometry{1, 1}));
  m.layers.push_back(LayerDescriptor<double>::Relu());
  m.layers.push_back(LayerDescriptor<double>::MaxPool(2, 2));
  m.layers.push_back(LayerDescriptor<double>::Flatten());
  m.layers.push_back(LayerDescriptor<double>::Dense(
      KernelSet<double>(Shape4{4, 12, 1, 1}, w2, {0.01, 0.02, -0.03, 0.0})));
  return m;
}

Tensor<double> MiniInput() {
  Tensor<double> x(Shape4{1, 2, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = std::sin(0.3 * i);
  return x;
}

TEST(ModelTest, BaselineMatchesReference) {
  const auto model = MiniModel();
  ASSERT_NO_THROW(ValidateModel(model));
  const auto y = RunBaseline(model, MiniInput());
  // numpy reference forward.
  const std::vector<double> expected = {0.1543080006424271, -0.13271769114837836,
                                        0.12934902237647, -0.1641247741348299};
  ASSERT_EQ(y.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], expected[i], 1e-13);
  EXPECT_EQ(ArgmaxPerSample(y), (std::vector<std::size_t>{0}));
}

TEST(ModelTest, InferShapesAndLinearIndices) {
  const auto model = MiniModel();
  const auto shapes = InferShapes(model);
  ASSERT_EQ(shapes.size(), 6u);
  EXPECT_EQ(shapes[1], (Shape4{1, 3, 4, 4}));
  EXPECT_EQ(shapes[3], (Shape4{1, 3, 2, 2}));
  EXPECT_EQ(shapes[4], (Shape4{1, 12, 1, 1}));
  EXPECT_EQ(shapes[5], (Shape4{1, 4, 1, 1}));
  EXPECT_EQ(LinearLayerIndices(model), (std::vector<std::size_t>{0, 4}));
}

TEST(ModelTest, ValidateRejectsBrokenModels) {
  auto wrong_classes = MiniModel();
  wrong_classes.class_count = 5;
  EXPECT_THROW(ValidateModel(wrong_classes), FormatError);

  auto no_flatten = MiniModel();
  no_flatten.layers.erase(no_flatten.layers.begin() + 3);
  EXPECT_THROW(ValidateModel(no_flatten), FormatError);

  auto no_linear = MiniModel();
  no_linear.layers = {LayerDescriptor<double>::Relu()};
  no_linear.class_count = 0;
  EXPECT_THROW(ValidateModel(no_linear), FormatError);

  auto version = MiniModel();
  version.format_version = 99;
  EXPECT_THROW(ValidateModel(version), FormatError);

  auto channels = MiniModel();
  channels.input_shape = Shape4{1, 3, 4, 4};
  EXPECT_THROW(ValidateModel(channels), FormatError);
}

TEST(ModelTest, DenseRejectsUnflattenedInput) {
  const auto model = MiniModel();
  EXPECT_THROW(ApplyLayer(model.layers[4], Tensor<double>(Shape4{1, 3, 2, 2})),
               DimensionError);
}

TEST(FormatTest, ModelRoundTrip) {
  const auto model = MiniModel();
  const Bytes bytes = SerializeModel(model);
  EXPECT_EQ(DeserializeModel<double>(bytes), model);
  EXPECT_EQ(SerializeModel(DeserializeModel<double>(bytes)), bytes);
  EXPECT_EQ(Container::Parse(bytes).kind(), "model");
}

TEST(FormatTest, FloatModelRoundTrip) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 4);
  EXPECT_EQ(DeserializeModel<float>(SerializeModel(model)), model);
}

TEST(FormatTest, BundleAndSecretsRoundTrip) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 11);
  ObfuscationConfig cfg;
  cfg.selector = LayerSelector::All();
  cfg.seed = 5;
  const auto [bundle, secrets] = ObfuscateModel(model, cfg);
  EXPECT_EQ(DeserializeBundle<float>(SerializeBundle(bundle)), bundle);
  EXPECT_EQ(DeserializeSecrets<float>(SerializeSecrets(secrets)), secrets);
  EXPECT_EQ(DigestBundle(DeserializeBundle<float>(SerializeBundle(bundle))),
            secrets.bundle_digest);
}

TEST(FormatTest, TensorRoundTrip) {
  Tensor<float> t(Shape4{2, 1, 1, 3}, {1.5f, -2.0f, 0.0f, 3.25f, 1e-30f, -7.0f});
  EXPECT_EQ(DeserializeTensor<float>(SerializeTensor(t)), t);
}

TEST(FormatTest, PayloadTamperIsIntegrityError) {
  Bytes bytes = SerializeModel(MiniModel());
  bytes[bytes.size() - 3] ^= 0x01;
  EXPECT_THROW(DeserializeModel<double>(bytes), IntegrityError);
}

TEST(FormatTest, HeaderTamperIsDetected) {
  Bytes bytes = SerializeModel(MiniModel());
  const std::string needle = "\"mini\"";
  auto it = std::search(bytes.begin(), bytes.end(), needle.begin(), needle.end());
  ASSERT_NE(it, bytes.end());
  *(it + 1) = 'M';
  EXPECT_THROW(DeserializeModel<double>(bytes), IntegrityError);
}

TEST(FormatTest, TruncationAndTrailingBytesAreCorruption) {
  const Bytes bytes = SerializeModel(MiniModel());
  EXPECT_THROW(DeserializeModel<double>(Bytes(bytes.begin(), bytes.end() - 8)),
               CorruptionError);
  EXPECT_THROW(DeserializeModel<double>(Bytes(bytes.begin(), bytes.begin() + 10)),
               CorruptionError);
  Bytes longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(DeserializeModel<double>(longer), CorruptionError);
}

TEST(FormatTest, BadMagicIsFormatError) {
  Bytes bytes = SerializeModel(MiniModel());
  bytes[0] = 'X';
  EXPECT_THROW(DeserializeModel<double>(bytes), FormatError);
  EXPECT_THROW(DeserializeModel<double>(Bytes{}), CorruptionError);
}

TEST(FormatTest, WrongDtypeOrKindIsFormatError) {
  const Bytes bytes = SerializeModel(MiniModel());
  EXPECT_THROW(DeserializeModel<float>(bytes), FormatError);
  EXPECT_THROW(DeserializeBundle<double>(bytes), FormatError);
}

TEST(FormatTest, FilesRoundTripAndMissingFileIsIoError) {
  const auto dir = std::filesystem::temp_directory_path() / "convshatter_format_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "mini.csm";
  SaveModel(path, MiniModel());
  EXPECT_EQ(LoadModel<double>(path), MiniModel());
  EXPECT_THROW(LoadModel<double>(dir / "absent.csm"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(FormatTest, CastModelPreservesStructure) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 2);
  const auto wide = CastModel<double>(model);
  EXPECT_EQ(CastModel<float>(wide), model);
}

}  // namespace
}  // namespace convshatter
