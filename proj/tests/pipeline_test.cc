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


#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "convshatter/enclave.h"
#include "convshatter/error.h"
#include "convshatter/obfuscator.h"
#include "convshatter/pipeline.h"
#include "convshatter/toy_models.h"
#include "convshatter/transport.h"
#include "convshatter/worker.h"

namespace convshatter {
namespace {

template <typename T>
struct Session {
  ObfuscatedBundle<T> bundle;
  SealedSecrets<T> secrets;
  Worker<T> worker;
  InProcessTransport transport;

  Session(std::pair<ObfuscatedBundle<T>, SealedSecrets<T>> parts)
      : bundle(std::move(parts.first)),
        secrets(std::move(parts.second)),
        worker(bundle),
        transport([this](std::span<const std::uint8_t> req) { return worker.Handle(req); }) {}
};

ObfuscationConfig AllLayers(std::uint64_t seed) {
  ObfuscationConfig cfg;
  cfg.selector = LayerSelector::All();
  cfg.seed = seed;
  return cfg;
}

TEST(PipelineTest, SecureMatchesBaselineInDouble) {
  const auto model = MakeToyModel<double>(ToyModelSpec{}, 31);
  Session<double> s(ObfuscateModel(model, AllLayers(1)));
  Enclave<double> enclave(s.secrets);
  const auto x = RandomInput<double>(model.input_shape, 4);
  const auto result = RunSecure(s.bundle, enclave, s.transport, x, &model);
  const auto expected = RunBaseline(model, x);
  EXPECT_LE(MaxRelativeDelta(result.output, expected), 1e-12);
  ASSERT_TRUE(result.trace.final_delta.has_value());
  EXPECT_LE(*result.trace.final_delta, 1e-12);
  EXPECT_EQ(ArgmaxPerSample(result.output), ArgmaxPerSample(expected));
}

TEST(PipelineTest, SecureMatchesBaselineInFloat) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 32);
  Session<float> s(ObfuscateModel(model, AllLayers(2)));
  Enclave<float> enclave(s.secrets);
  const auto x = RandomInput<float>(model.input_shape, 5);
  const auto result = RunSecure(s.bundle, enclave, s.transport, x, &model);
  EXPECT_LE(MaxRelativeDelta(result.output, RunBaseline(model, x)), 1e-4);
}

TEST(PipelineTest, TraceCoversEveryLayer) {
  const auto model = MakeToyModel<double>(ToyModelSpec{}, 33);
  ObfuscationConfig cfg = AllLayers(3);
  cfg.selector = LayerSelector::Parse("0");
  Session<double> s(ObfuscateModel(model, cfg));
  Enclave<double> enclave(s.secrets);
  const auto result = RunSecure(s.bundle, enclave, s.transport,
                                RandomInput<double>(model.input_shape, 1), &model);
  const auto& rows = result.trace.layers;
  ASSERT_EQ(rows.size(), model.layers.size());
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].layer_id, i);
    total += rows[i].bytes;
  }
  EXPECT_EQ(rows[0].mode, LayerMode::kProtected);
  EXPECT_EQ(rows[1].mode, LayerMode::kEnclave);
  EXPECT_EQ(rows[1].bytes, 0u);
  EXPECT_EQ(rows[2].mode, LayerMode::kPlain);
  EXPECT_GT(rows[0].flop_ratio, 1.0);
  EXPECT_EQ(rows[2].flop_ratio, 1.0);
  EXPECT_EQ(total, result.trace.transport_bytes);
  EXPECT_EQ(total, s.transport.total_bytes());

  std::ostringstream tsv;
  WriteTraceTsv(tsv, result.trace);
  std::istringstream lines(tsv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "layer\tmode\tbytes\tflop_ratio\tdelta");
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);
    ++count;
  }
  EXPECT_EQ(count, model.layers.size());
}

TEST(PipelineTest, ForkedWorkerGivesIdenticalOutput) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 34);
  Session<float> s(ObfuscateModel(model, AllLayers(4)));
  const auto x = RandomInput<float>(model.input_shape, 2);
  Enclave<float> local_enclave(s.secrets);
  const auto local = RunSecure(s.bundle, local_enclave, s.transport, x);

  auto remote_transport = SocketTransport::Fork([&](int fd) {
    const Worker<float> worker(s.bundle);
    ServeFrames(fd, [&](std::span<const std::uint8_t> req) { return worker.Handle(req); });
  });
  Enclave<float> remote_enclave(s.secrets);
  const auto remote = RunSecure(s.bundle, remote_enclave, *remote_transport, x);
  EXPECT_EQ(remote.output, local.output);
  EXPECT_EQ(remote.trace.transport_bytes, local.trace.transport_bytes);
}

TEST(PipelineTest, PlainBundleIsBitIdenticalToBaseline) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 35);
  const auto bundle = MakePlainBundle(model);
  SealedSecrets<float> secrets;
  secrets.bundle_digest = DigestBundle(bundle);
  Session<float> s({bundle, secrets});
  Enclave<float> enclave(s.secrets);
  const auto x = RandomInput<float>(model.input_shape, 3);
  EXPECT_EQ(RunSecure(s.bundle, enclave, s.transport, x).output, RunBaseline(model, x));
}

TEST(PipelineTest, TamperedBundleFailsBeforeAnyTraffic) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 36);
  Session<float> s(ObfuscateModel(model, AllLayers(5)));
  auto tampered = s.bundle;
  std::get<ObfuscatedLayer<float>>(tampered.layers[0]).damaged.weights()[3] *= 1.5f;
  Enclave<float> enclave(s.secrets);
  EXPECT_THROW(RunSecure(tampered, enclave, s.transport,
                         RandomInput<float>(model.input_shape, 1)),
               IntegrityError);
  EXPECT_EQ(s.transport.total_bytes(), 0u);
}

TEST(PipelineTest, WrongInputShapeIsDimensionError) {
  const auto model = MakeToyModel<float>(ToyModelSpec{}, 37);
  Session<float> s(ObfuscateModel(model, AllLayers(6)));
  Enclave<float> enclave(s.secrets);
  EXPECT_THROW(RunSecure(s.bundle, enclave, s.transport, Tensor<float>(Shape4{1, 1, 2, 2})),
               DimensionError);
  EXPECT_THROW(RunBaseline(model, Tensor<float>(Shape4{1, 1, 2, 2})), DimensionError);
}

TEST(PipelineTest, ZeroInputWithZeroMasksIsExact) {
  ModelDescriptor<float> model;
  model.name = "one";
  model.input_shape = Shape4{1, 3, 5, 5};
  SeededRng rng(1, 0);
  model.layers.push_back(LayerDescriptor<float>::Conv(RandomKernels<float>(6, 3, 3, 3, rng),
                                                      ConvGeometry{1, 1}));
  ObfuscationConfig cfg = AllLayers(7);
  cfg.mask_scale = 0.0;
  Session<float> s(ObfuscateModel(model, cfg));
  Enclave<float> enclave(s.secrets);
  const Tensor<float> zero(model.input_shape);
  EXPECT_EQ(RunSecure(s.bundle, enclave, s.transport, zero).output, RunBaseline(model, zero));
}

TEST(PipelineTest, BatchVerifyAgrees) {
  const auto model = MakeToyModel<double>(ToyModelSpec{}, 38);
  BatchVerifyOptions options;
  options.trials = 3;
  const auto report = BatchVerify(model, AllLayers(8), options);
  EXPECT_EQ(report.trials, 3u);
  EXPECT_EQ(report.agreement_rate(), 1.0);
  EXPECT_LE(report.max_relative_delta, 1e-12);
  options.trials = 0;
  EXPECT_THROW(BatchVerify(model, AllLayers(8), options), ConfigError);
}

TEST(TransportTest, FramesRoundTripThroughChild) {
  auto transport = SocketTransport::Fork([](int fd) {
    ServeFrames(fd, [](std::span<const std::uint8_t> req) {
      Bytes out(req.rbegin(), req.rend());
      return out;
    });
  });
  const Bytes request = {1, 2, 3, 4, 5};
  EXPECT_EQ(transport->Exchange(request), (Bytes{5, 4, 3, 2, 1}));
  EXPECT_EQ(transport->Exchange(Bytes{}), Bytes{});
  EXPECT_EQ(transport->bytes_sent(), 5u);
  EXPECT_EQ(transport->bytes_received(), 5u);
}

}  // namespace
}  // namespace convshatter
