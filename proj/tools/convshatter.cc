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

// Command-line front end. Exit codes: 0 ok, 2 input/config error,
// 3 integrity error, 4 shape or protocol error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "convshatter/attack.h"
#include "convshatter/bundle.h"
#include "convshatter/config.h"
#include "convshatter/enclave.h"
#include "convshatter/error.h"
#include "convshatter/model.h"
#include "convshatter/obfuscator.h"
#include "convshatter/pipeline.h"
#include "convshatter/serialization.h"
#include "convshatter/stats.h"
#include "convshatter/toy_models.h"
#include "convshatter/transport.h"
#include "convshatter/worker.h"

namespace fs = std::filesystem;
using namespace convshatter;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitIntegrity = 3;
constexpr int kExitShape = 4;

// The CLI works on f32 artifacts.
using Real = float;

void RequireFile(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) throw IoError(std::string(what) + " not found: " + path.string());
}

std::uint64_t DefaultSeed() {
  if (const char* env = std::getenv("CONVSHATTER_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("CONVSHATTER_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

bool LooksLikeContainer(const Bytes& bytes) {
  return bytes.size() >= kMagic.size() &&
         std::equal(kMagic.begin(), kMagic.end(), bytes.begin());
}

// Tensor container, or comma/whitespace separated values laid out in the
// expected shape.
Tensor<Real> LoadInput(const fs::path& path, const Shape4& shape) {
  RequireFile(path, "input");
  const Bytes bytes = ReadFileBytes(path);
  if (LooksLikeContainer(bytes)) {
    Tensor<Real> t = DeserializeTensor<Real>(bytes);
    if (t.shape() != shape) {
      throw DimensionError("input has shape " + t.shape().ToString() + ", expected " +
                           shape.ToString());
    }
    return t;
  }
  std::string text(bytes.begin(), bytes.end());
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::vector<Real> values;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      values.push_back(std::stof(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw FormatError("input CSV: bad value '" + token + "'");
    }
  }
  if (values.size() != shape.count()) {
    throw DimensionError("input CSV has " + std::to_string(values.size()) +
                         " values, expected " + std::to_string(shape.count()) + " for " +
                         shape.ToString());
  }
  Tensor<Real> t(shape);
  std::copy(values.begin(), values.end(), t.data().begin());
  return t;
}

void WriteOutput(const fs::path& path, const Tensor<Real>& t) {
  if (path.extension() == ".csv") {
    std::ostringstream out;
    out << std::setprecision(9);
    const auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      out << data[i] << ((i + 1) % t.width() == 0 ? '\n' : ',');
    }
    const std::string s = out.str();
    WriteFileAtomic(path, Bytes(s.begin(), s.end()));
  } else {
    WriteFileAtomic(path, SerializeTensor(t));
  }
}

// Accepts a bundle file or a plain model file (shipped unprotected).
ObfuscatedBundle<Real> LoadBundleOrModel(const fs::path& path) {
  RequireFile(path, "bundle");
  const Bytes bytes = ReadFileBytes(path);
  if (Container::Parse(bytes).kind() == "model") {
    return MakePlainBundle(DeserializeModel<Real>(bytes));
  }
  return DeserializeBundle<Real>(bytes);
}

std::size_t SealedBytes(const SealedLayer<Real>& s) {
  std::size_t n = s.coefficients.size() + s.bias.size() + s.output_scale.size();
  for (const auto& m : s.masks) n += m.size();
  for (const auto& e : s.noise) n += e.size();
  return n * sizeof(Real);
}

std::unique_ptr<Transport> MakeTransport(const std::string& kind,
                                         const Worker<Real>& worker,
                                         const fs::path& bundle_path) {
  if (kind == "inproc") {
    return std::make_unique<InProcessTransport>(
        [&worker](std::span<const std::uint8_t> request) { return worker.Handle(request); });
  }
  if (kind == "ipc") {
    return SocketTransport::Spawn({"/proc/self/exe", "serve-worker", "--bundle",
                                   fs::absolute(bundle_path).string(), "--fd", "{fd}"});
  }
  throw ConfigError("unknown transport '" + kind + "' (expected inproc or ipc)");
}

struct ObfuscateFlags {
  std::string model;
  std::string out_bundle;
  std::string out_secrets;
  std::string config;
  std::size_t k_pub = 0;
  std::size_t k_fake = 0;
  std::string layers;
  std::uint64_t seed = 0;
  std::size_t mask_pool = 0;
  bool orthogonalize = true;
  bool shape_decoys = true;
  bool per_output = false;
  std::size_t jobs = 1;
};

int RunObfuscate(const ObfuscateFlags& f, const CLI::App& cmd) {
  RequireFile(f.model, "model");
  const ModelDescriptor<Real> model = LoadModel<Real>(f.model);
  ObfuscationConfig cfg;
  cfg.seed = DefaultSeed();
  if (!f.config.empty()) {
    RequireFile(f.config, "config");
    cfg = LoadConfigFile(f.config, cfg);
  }
  auto given = [&cmd](const char* name) { return cmd.count(name) > 0; };
  if (given("--k-pub")) cfg.k_pub = f.k_pub;
  if (given("--k-fake")) cfg.k_fake = f.k_fake;
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--mask-pool")) cfg.mask_pool = f.mask_pool;
  if (given("--orthogonalize")) cfg.orthogonalize = f.orthogonalize;
  if (given("--shape-decoys")) cfg.shape_decoys = f.shape_decoys;
  if (given("--per-output")) cfg.per_output_coefficients = f.per_output;
  if (given("--jobs")) cfg.jobs = f.jobs;
  const bool none = f.layers == "none";
  if (given("--layers") && !none) cfg.selector = LayerSelector::Parse(f.layers);
  if (cfg.selector.mode() == LayerSelector::Mode::kModelFlags &&
      std::none_of(model.layers.begin(), model.layers.end(),
                   [](const auto& l) { return l.protect; })) {
    cfg.selector = LayerSelector::All();
  }
  cfg.Validate();

  ObfuscatedBundle<Real> bundle;
  SealedSecrets<Real> secrets;
  if (none) {
    bundle = MakePlainBundle(model);
    secrets.bundle_digest = DigestBundle(bundle);
  } else {
    std::tie(bundle, secrets) = ObfuscateModel(model, cfg);
  }
  SaveBundle(f.out_bundle, bundle);
  SaveSecrets(f.out_secrets, secrets);

  const Worker<Real> worker(bundle);
  std::cout << "layer\tkind\tk_pub\tk_fake\tflop_ratio\tsecrets_bytes\n";
  for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
    if (!IsLinear(KindOf(bundle.layers[i]))) continue;
    std::cout << i << '\t' << LayerKindName(KindOf(bundle.layers[i])) << '\t';
    if (const SealedLayer<Real>* s = secrets.Find(i)) {
      const auto& obf = std::get<ObfuscatedLayer<Real>>(bundle.layers[i]);
      std::cout << s->k_pub() << '\t' << obf.k_total() - s->k_pub() << '\t';
      std::cout << std::fixed << std::setprecision(4) << worker.Report(i).ratio()
                << std::defaultfloat << '\t' << SealedBytes(*s) << '\n';
    } else {
      std::cout << "-\t-\t1.0000\t0\n";
    }
  }
  std::cout << "wrote " << f.out_bundle << " and " << f.out_secrets << '\n';
  return kExitOk;
}

struct InferFlags {
  std::string bundle;
  std::string secrets;
  std::string input;
  std::string verify_against;
  std::string output;
  std::string trace;
  std::string transport = "inproc";
  std::uint64_t seed = 0;
};

int RunInfer(const InferFlags& f, const CLI::App& cmd) {
  RequireFile(f.secrets, "secrets");
  const ObfuscatedBundle<Real> bundle = LoadBundleOrModel(f.bundle);
  SealedSecrets<Real> secrets = LoadSecrets<Real>(f.secrets);
  std::optional<ModelDescriptor<Real>> reference;
  if (!f.verify_against.empty()) {
    RequireFile(f.verify_against, "model");
    reference = LoadModel<Real>(f.verify_against);
  }
  const Tensor<Real> input = LoadInput(f.input, bundle.input_shape);
  const std::uint64_t seed = cmd.count("--seed") > 0 ? f.seed : DefaultSeed();

  Enclave<Real> enclave(std::move(secrets), MaskReusePolicy::kNoConsecutiveReuse, seed);
  enclave.VerifyBundle(bundle);
  const Worker<Real> worker(bundle);
  auto transport = MakeTransport(f.transport, worker, f.bundle);
  const SecureResult<Real> result =
      RunSecure(bundle, enclave, *transport, input, reference ? &*reference : nullptr);

  if (!f.output.empty()) WriteOutput(f.output, result.output);
  if (!f.trace.empty()) {
    std::ostringstream tsv;
    WriteTraceTsv(tsv, result.trace);
    const std::string s = tsv.str();
    WriteFileAtomic(f.trace, Bytes(s.begin(), s.end()));
  }
  std::cout << "transport_bytes " << result.trace.transport_bytes << '\n';
  if (reference) {
    const Tensor<Real> expected = RunBaseline(*reference, input);
    const auto a = ArgmaxPerSample(result.output);
    const auto b = ArgmaxPerSample(expected);
    std::size_t same = 0;
    for (std::size_t n = 0; n < a.size(); ++n) same += a[n] == b[n] ? 1 : 0;
    const double pct = a.empty() ? 100.0 : 100.0 * static_cast<double>(same) /
                                               static_cast<double>(a.size());
    std::cout << "agreement " << pct << "%, max_delta " << std::scientific
              << std::setprecision(3) << MaxRelativeDelta(result.output, expected)
              << std::defaultfloat << '\n';
  }
  return kExitOk;
}

int RunBaselineCmd(const std::string& model_path, const std::string& input_path,
                   const std::string& output) {
  RequireFile(model_path, "model");
  const ModelDescriptor<Real> model = LoadModel<Real>(model_path);
  const Tensor<Real> input = LoadInput(input_path, model.input_shape);
  const Tensor<Real> out = RunBaseline(model, input);
  if (!output.empty()) WriteOutput(output, out);
  const auto classes = ArgmaxPerSample(out);
  std::cout << "argmax";
  for (std::size_t c : classes) std::cout << ' ' << c;
  std::cout << '\n';
  return kExitOk;
}

struct AttackFlags {
  std::string bundle;
  std::string public_model;
  std::string ground_truth;
  std::string report;
  std::string matrix_dir;
  double correlation = 1.0;
  std::uint64_t seed = 0;
  std::size_t anomaly_trials = 200;
};

int RunAttack(const AttackFlags& f, const CLI::App& cmd) {
  RequireFile(f.public_model, "public model");
  const ObfuscatedBundle<Real> bundle = LoadBundleOrModel(f.bundle);
  ModelDescriptor<Real> pub = LoadModel<Real>(f.public_model);
  std::optional<SealedSecrets<Real>> truth;
  if (!f.ground_truth.empty()) {
    RequireFile(f.ground_truth, "ground truth");
    truth = LoadSecrets<Real>(f.ground_truth);
    if (truth->bundle_digest != DigestBundle(bundle)) {
      throw IntegrityError("ground truth was sealed for a different bundle");
    }
  }
  if (pub.layers.size() != bundle.layers.size()) {
    throw DimensionError("public model has " + std::to_string(pub.layers.size()) +
                         " layers, bundle has " + std::to_string(bundle.layers.size()));
  }
  const std::uint64_t seed = cmd.count("--seed") > 0 ? f.seed : DefaultSeed();
  LeakageOptions options;
  options.seed = seed;
  options.anomaly_trials = f.anomaly_trials;

  std::vector<LeakageReport> reports;
  for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
    if (!IsLinear(KindOf(bundle.layers[i]))) continue;
    if (!IsLinear(pub.layers[i].kind)) {
      throw DimensionError("public model layer " + std::to_string(i) + " is not linear");
    }
    KernelSet<Real> kernels = pub.layers[i].kernels;
    if (f.correlation < 1.0) {
      SeededRng rng(seed, StreamId(i, StreamPurpose::kModel));
      kernels = SynthesizeCounterpart(kernels, f.correlation, rng);
    }
    const SealedLayer<Real>* sealed = truth ? truth->Find(i) : nullptr;
    reports.push_back(AnalyzeLayer(i, kernels, bundle.layers[i], sealed, options));
  }

  std::ostringstream text;
  WriteLeakageReport(text, reports);
  if (f.report.empty()) {
    std::cout << text.str();
  } else {
    const std::string s = text.str();
    WriteFileAtomic(f.report, Bytes(s.begin(), s.end()));
    std::cout << "wrote " << f.report << '\n';
  }
  if (!f.matrix_dir.empty()) {
    fs::create_directories(f.matrix_dir);
    for (const auto& r : reports) {
      std::ostringstream m;
      WriteSimilarityMatrix(m, r.similarity);
      const std::string s = m.str();
      WriteFileAtomic(fs::path(f.matrix_dir) /
                          ("similarity_layer" + std::to_string(r.layer_id) + ".tsv"),
                      Bytes(s.begin(), s.end()));
    }
  }
  return kExitOk;
}

struct BenchFlags {
  std::string bundle;
  std::string secrets;
  std::size_t trials = 1;
  std::string transport = "inproc";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

double Quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return SortedQuantile(v, q);
}

int RunBench(const BenchFlags& f, const CLI::App& cmd) {
  if (f.trials == 0) throw ConfigError("--trials must be >= 1");
  RequireFile(f.secrets, "secrets");
  const ObfuscatedBundle<Real> bundle = LoadBundleOrModel(f.bundle);
  const SealedSecrets<Real> secrets = LoadSecrets<Real>(f.secrets);
  const std::uint64_t seed = cmd.count("--seed") > 0 ? f.seed : DefaultSeed();
  const Worker<Real> worker(bundle);

  std::vector<InferenceTrace> traces(f.trials);
  auto run_trial = [&](std::size_t t) {
    // Fresh enclave per trial, as for an independent inference session.
    Enclave<Real> enclave(secrets, MaskReusePolicy::kNoConsecutiveReuse, seed + t);
    auto transport = MakeTransport(f.transport, worker, f.bundle);
    const Tensor<Real> input = RandomInput<Real>(bundle.input_shape, seed + t);
    traces[t] = RunSecure(bundle, enclave, *transport, input).trace;
  };
  const std::size_t jobs = f.transport == "inproc" ? std::max<std::size_t>(1, f.jobs) : 1;
  if (jobs == 1) {
    for (std::size_t t = 0; t < f.trials; ++t) run_trial(t);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j] {
        try {
          for (std::size_t t = j; t < f.trials; t += jobs) run_trial(t);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::cout << "layer\tmode\tmedian_ms\tp95_ms\tbytes\tflop_ratio\n";
  const std::size_t rows = traces.front().layers.size();
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> ms;
    std::vector<double> bytes;
    for (const auto& tr : traces) {
      ms.push_back(1e3 * tr.layers[r].seconds);
      bytes.push_back(static_cast<double>(tr.layers[r].bytes));
    }
    const LayerTrace& row = traces.front().layers[r];
    std::cout << row.layer_id << '\t' << LayerModeName(row.mode) << '\t' << std::fixed
              << std::setprecision(3) << Quantile(ms, 0.5) << '\t' << Quantile(ms, 0.95)
              << '\t' << std::setprecision(0) << Quantile(bytes, 0.5) << '\t'
              << std::setprecision(4) << row.flop_ratio << std::defaultfloat << '\n';
  }
  return kExitOk;
}

struct MakeModelFlags {
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::size_t> channels = {8, 16, 16};
  std::size_t input_channels = 3;
  std::size_t spatial = 8;
  std::size_t batch = 1;
  std::size_t classes = 10;
  bool no_pool = false;
};

int RunMakeModel(const MakeModelFlags& f, const CLI::App& cmd) {
  ToyModelSpec spec;
  spec.channels = f.channels;
  spec.input_channels = f.input_channels;
  spec.spatial = f.spatial;
  spec.batch = f.batch;
  spec.classes = f.classes;
  spec.pooling = !f.no_pool;
  const std::uint64_t seed = cmd.count("--seed") > 0 ? f.seed : DefaultSeed();
  const ModelDescriptor<Real> model = MakeToyModel<Real>(spec, seed);
  ValidateModel(model);
  SaveModel(f.out, model);
  std::cout << "wrote " << f.out << " (" << model.layers.size() << " layers, input "
            << model.input_shape.ToString() << ")\n";
  return kExitOk;
}

int RunMakeInput(const std::string& model_path, const std::string& out,
                 std::uint64_t seed_flag, const CLI::App& cmd) {
  RequireFile(model_path, "model");
  const Bytes bytes = ReadFileBytes(model_path);
  const Shape4 shape = Container::Parse(bytes).kind() == "model"
                           ? DeserializeModel<Real>(bytes).input_shape
                           : DeserializeBundle<Real>(bytes).input_shape;
  const std::uint64_t seed = cmd.count("--seed") > 0 ? seed_flag : DefaultSeed();
  WriteOutput(out, RandomInput<Real>(shape, seed));
  std::cout << "wrote " << out << '\n';
  return kExitOk;
}

int RunServeWorker(const std::string& bundle_path, int fd) {
  const Worker<Real> worker(LoadBundleOrModel(bundle_path));
  ServeFrames(fd, [&worker](std::span<const std::uint8_t> request) {
    return worker.Handle(request);
  });
  return kExitOk;
}

int ExitCodeFor(const std::exception& e) {
  if (dynamic_cast<const IntegrityError*>(&e) != nullptr ||
      dynamic_cast<const CorruptionError*>(&e) != nullptr) {
    return kExitIntegrity;
  }
  if (dynamic_cast<const DimensionError*>(&e) != nullptr ||
      dynamic_cast<const ProtocolError*>(&e) != nullptr ||
      dynamic_cast<const PermutationError*>(&e) != nullptr ||
      dynamic_cast<const MaskExhaustedError*>(&e) != nullptr ||
      dynamic_cast<const NumericError*>(&e) != nullptr ||
      dynamic_cast<const SizeError*>(&e) != nullptr ||
      dynamic_cast<const DegenerateKernelError*>(&e) != nullptr) {
    return kExitShape;
  }
  return kExitInput;
}

std::string Prefix(const std::exception& e) {
  if (ExitCodeFor(e) == kExitIntegrity) return "integrity failure: ";
  return "error: ";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convshatter: obfuscated split inference for convolutional models"};
  app.require_subcommand(1);

  ObfuscateFlags obf;
  auto* obfuscate = app.add_subcommand("obfuscate", "Obfuscate a model into bundle + secrets");
  obfuscate->add_option("--model", obf.model, "Model file")->required();
  obfuscate->add_option("--out-bundle", obf.out_bundle, "Public bundle output")->required();
  obfuscate->add_option("--out-secrets", obf.out_secrets, "Sealed secrets output")->required();
  obfuscate->add_option("--config", obf.config, "key = value config file; flags win");
  obfuscate->add_option("--k-pub", obf.k_pub, "Patch bases per layer");
  obfuscate->add_option("--k-fake", obf.k_fake, "Decoy kernels per layer");
  obfuscate->add_option("--layers", obf.layers,
                        "flags | all | none | ordinal list (0,2) | fraction (0.5, 50%)");
  obfuscate->add_option("--seed", obf.seed, "Seed (default $CONVSHATTER_SEED or 0)");
  obfuscate->add_option("--mask-pool", obf.mask_pool, "Masks per protected layer");
  obfuscate->add_option("--orthogonalize", obf.orthogonalize, "true/false");
  obfuscate->add_option("--shape-decoys", obf.shape_decoys, "true/false");
  obfuscate->add_flag("--per-output", obf.per_output, "One coefficient row per kernel");
  obfuscate->add_option("--jobs", obf.jobs, "Layers obfuscated in parallel");

  InferFlags inf;
  auto* infer = app.add_subcommand("infer", "Run secure inference");
  infer->add_option("--bundle", inf.bundle, "Bundle file")->required();
  infer->add_option("--secrets", inf.secrets, "Secrets file")->required();
  infer->add_option("--input", inf.input, "Input tensor file or CSV")->required();
  infer->add_option("--verify-against", inf.verify_against, "Plaintext model to compare with");
  infer->add_option("--output", inf.output, "Output file (.csv for text)");
  infer->add_option("--trace", inf.trace, "Per-layer trace TSV");
  infer->add_option("--transport", inf.transport, "inproc | ipc");
  infer->add_option("--seed", inf.seed, "Mask selection seed");

  std::string base_model;
  std::string base_input;
  std::string base_output;
  auto* baseline = app.add_subcommand("baseline", "Plaintext forward pass");
  baseline->add_option("--model", base_model, "Model file")->required();
  baseline->add_option("--input", base_input, "Input tensor file or CSV")->required();
  baseline->add_option("--output", base_output, "Output file (.csv for text)");

  AttackFlags atk;
  auto* attack = app.add_subcommand("attack", "Similarity leakage analysis");
  attack->add_option("--bundle", atk.bundle, "Bundle (or model) file")->required();
  attack->add_option("--public", atk.public_model, "Public counterpart model")->required();
  attack->add_option("--ground-truth", atk.ground_truth, "Secrets for evaluation mode");
  attack->add_option("--report", atk.report, "Report path (default stdout)");
  attack->add_option("--matrix-dir", atk.matrix_dir, "Directory for similarity TSV dumps");
  attack->add_option("--correlation", atk.correlation,
                     "Perturb public kernels to this correlation (default 1: as is)");
  attack->add_option("--seed", atk.seed, "Seed for perturbation and baselines");
  attack->add_option("--anomaly-trials", atk.anomaly_trials, "Monte-Carlo baseline size");

  BenchFlags bn;
  auto* bench = app.add_subcommand("bench", "Per-layer timing, bytes and FLOP ratios");
  bench->add_option("--bundle", bn.bundle, "Bundle file")->required();
  bench->add_option("--secrets", bn.secrets, "Secrets file")->required();
  bench->add_option("--trials", bn.trials, "Number of inferences");
  bench->add_option("--transport", bn.transport, "inproc | ipc");
  bench->add_option("--seed", bn.seed, "Seed for inputs and mask selection");
  bench->add_option("--jobs", bn.jobs, "Parallel trials (inproc only)");

  MakeModelFlags mm;
  auto* make_model = app.add_subcommand("make-model", "Write a random toy model");
  make_model->add_option("--out", mm.out, "Output model file")->required();
  make_model->add_option("--seed", mm.seed, "Seed");
  make_model->add_option("--channels", mm.channels, "Conv output channels")->delimiter(',');
  make_model->add_option("--input-channels", mm.input_channels, "Input channels");
  make_model->add_option("--spatial", mm.spatial, "Input height = width");
  make_model->add_option("--batch", mm.batch, "Batch size");
  make_model->add_option("--classes", mm.classes, "Classifier outputs");
  make_model->add_flag("--no-pool", mm.no_pool, "Skip max pooling");

  std::string mi_model;
  std::string mi_out;
  std::uint64_t mi_seed = 0;
  auto* make_input = app.add_subcommand("make-input", "Write a random N(0, 1) input");
  make_input->add_option("--model", mi_model, "Model or bundle file")->required();
  make_input->add_option("--out", mi_out, "Output file (.csv for text)")->required();
  make_input->add_option("--seed", mi_seed, "Seed");

  std::string sw_bundle;
  int sw_fd = -1;
  auto* serve = app.add_subcommand("serve-worker", "");
  serve->group("");
  serve->add_option("--bundle", sw_bundle)->required();
  serve->add_option("--fd", sw_fd)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*obfuscate) return RunObfuscate(obf, *obfuscate);
    if (*infer) return RunInfer(inf, *infer);
    if (*baseline) return RunBaselineCmd(base_model, base_input, base_output);
    if (*attack) return RunAttack(atk, *attack);
    if (*bench) return RunBench(bn, *bench);
    if (*make_model) return RunMakeModel(mm, *make_model);
    if (*make_input) return RunMakeInput(mi_model, mi_out, mi_seed, *make_input);
    if (*serve) return RunServeWorker(sw_bundle, sw_fd);
  } catch (const std::exception& e) {
    std::cerr << Prefix(e) << e.what() << '\n';
    return ExitCodeFor(e);
  }
  return kExitInput;
}
