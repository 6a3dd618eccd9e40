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


// Drives the convshatter binary end to end and checks exit codes and output.

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "convshatter/serialization.h"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr
};

CliRun Cli(const std::vector<std::string>& args, const std::string& env = "") {
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += CONVSHATTER_CLI_PATH;
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " 2>&1";
  CliRun run;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return run;
  std::array<char, 4096> buffer{};
  std::size_t n;
  while ((n = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) run.output.append(buffer.data(), n);
  const int status = pclose(pipe);
  run.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return run;
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("convshatter_cli_test_" + std::to_string(getpid()));
    fs::create_directories(dir_);
    ASSERT_EQ(Cli({"make-model", "--out", P("model.cst"), "--seed", "3"}).code, 0);
    ASSERT_EQ(Cli({"make-input", "--model", P("model.cst"), "--out", P("input.cst"), "--seed",
                   "1"}).code,
              0);
    ASSERT_EQ(Cli({"obfuscate", "--model", P("model.cst"), "--out-bundle", P("bundle.cst"),
                   "--out-secrets", P("secrets.cst"), "--layers", "all", "--seed", "2"})
                  .code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string P(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
};

fs::path CliTest::dir_;

TEST_F(CliTest, SecureInferenceAgreesWithBaseline) {
  const CliRun run = Cli({"infer", "--bundle", P("bundle.cst"), "--secrets", P("secrets.cst"),
                       "--input", P("input.cst"), "--verify-against", P("model.cst"),
                       "--trace", P("trace.tsv")});
  EXPECT_EQ(run.code, 0) << run.output;
  EXPECT_NE(run.output.find("agreement 100%"), std::string::npos) << run.output;
  EXPECT_NE(run.output.find("transport_bytes "), std::string::npos);
  EXPECT_EQ(ReadText(P("trace.tsv")).rfind("layer\tmode\tbytes\tflop_ratio\tdelta\n", 0), 0u);
}

TEST_F(CliTest, IpcTransportAgrees) {
  const CliRun run = Cli({"infer", "--bundle", P("bundle.cst"), "--secrets", P("secrets.cst"),
                       "--input", P("input.cst"), "--verify-against", P("model.cst"),
                       "--transport", "ipc"});
  EXPECT_EQ(run.code, 0) << run.output;
  EXPECT_NE(run.output.find("agreement 100%"), std::string::npos) << run.output;
}

TEST_F(CliTest, MissingModelExitsWithTwo) {
  const CliRun run = Cli({"obfuscate", "--model", P("absent.cst"), "--out-bundle", P("b.cst"),
                       "--out-secrets", P("s.cst")});
  EXPECT_EQ(run.code, 2);
  EXPECT_NE(run.output.find("model not found"), std::string::npos) << run.output;
}

TEST_F(CliTest, BadArgumentsExitWithTwo) {
  EXPECT_EQ(Cli({"obfuscate", "--model", P("model.cst")}).code, 2);
  EXPECT_EQ(Cli({"no-such-command"}).code, 2);
  std::ofstream(P("bad.cfg")) << "colour = blue\n";
  EXPECT_EQ(Cli({"obfuscate", "--model", P("model.cst"), "--out-bundle", P("b.cst"),
                 "--out-secrets", P("s.cst"), "--config", P("bad.cfg")})
                .code,
            2);
  EXPECT_EQ(Cli({"obfuscate", "--model", P("model.cst"), "--out-bundle", P("b.cst"),
                 "--out-secrets", P("s.cst"), "--k-pub", "99"})
                .code,
            2);
}

TEST_F(CliTest, TamperedBundleExitsWithThree) {
  convshatter::Bytes bytes = convshatter::ReadFileBytes(P("bundle.cst"));
  bytes[bytes.size() / 2] ^= 0x10;
  convshatter::WriteFileAtomic(P("tampered.cst"), bytes);
  const CliRun run = Cli({"infer", "--bundle", P("tampered.cst"), "--secrets", P("secrets.cst"),
                       "--input", P("input.cst")});
  EXPECT_EQ(run.code, 3) << run.output;
  EXPECT_NE(run.output.find("integrity failure"), std::string::npos) << run.output;
}

TEST_F(CliTest, WrongInputShapeExitsWithFour) {
  ASSERT_EQ(Cli({"make-model", "--out", P("other.cst"), "--spatial", "12"}).code, 0);
  ASSERT_EQ(Cli({"make-input", "--model", P("other.cst"), "--out", P("other_in.cst")}).code, 0);
  const CliRun run = Cli({"infer", "--bundle", P("bundle.cst"), "--secrets", P("secrets.cst"),
                       "--input", P("other_in.cst")});
  EXPECT_EQ(run.code, 4) << run.output;
}

TEST_F(CliTest, PlainBundleReproducesBaselineExactly) {
  ASSERT_EQ(Cli({"obfuscate", "--model", P("model.cst"), "--out-bundle", P("plain.cst"),
                 "--out-secrets", P("plain_secrets.cst"), "--layers", "none"})
                .code,
            0);
  ASSERT_EQ(Cli({"infer", "--bundle", P("plain.cst"), "--secrets", P("plain_secrets.cst"),
                 "--input", P("input.cst"), "--output", P("secure.csv")})
                .code,
            0);
  ASSERT_EQ(Cli({"baseline", "--model", P("model.cst"), "--input", P("input.cst"), "--output",
                 P("plain.csv")})
                .code,
            0);
  EXPECT_EQ(ReadText(P("secure.csv")), ReadText(P("plain.csv")));
  EXPECT_FALSE(ReadText(P("plain.csv")).empty());
}

TEST_F(CliTest, CsvInputIsAccepted) {
  ASSERT_EQ(Cli({"make-input", "--model", P("model.cst"), "--out", P("input.csv"), "--seed",
                 "1"})
                .code,
            0);
  const CliRun run = Cli({"infer", "--bundle", P("bundle.cst"), "--secrets", P("secrets.cst"),
                       "--input", P("input.csv"), "--verify-against", P("model.cst")});
  EXPECT_EQ(run.code, 0) << run.output;
  EXPECT_NE(run.output.find("agreement 100%"), std::string::npos);
  std::ofstream(P("short.csv")) << "1,2,3\n";
  EXPECT_EQ(Cli({"infer", "--bundle", P("bundle.cst"), "--secrets", P("secrets.cst"), "--input",
                 P("short.csv")})
                .code,
            4);
}

TEST_F(CliTest, AttackOnPlainBundleAlignsPerfectly) {
  ASSERT_EQ(Cli({"obfuscate", "--model", P("model.cst"), "--out-bundle", P("open.cst"),
                 "--out-secrets", P("open_secrets.cst"), "--layers", "none"})
                .code,
            0);
  const CliRun run = Cli({"attack", "--bundle", P("open.cst"), "--public", P("model.cst"),
                       "--ground-truth", P("open_secrets.cst"), "--anomaly-trials", "10",
                       "--matrix-dir", P("matrices")});
  EXPECT_EQ(run.code, 0) << run.output;
  EXPECT_NE(run.output.find("alignment_accuracy: 1\n"), std::string::npos) << run.output;
  EXPECT_EQ(run.output.find("alignment_accuracy: 0"), std::string::npos) << run.output;
  EXPECT_FALSE(fs::is_empty(P("matrices")));

  const CliRun mismatch = Cli({"attack", "--bundle", P("open.cst"), "--public", P("model.cst"),
                            "--ground-truth", P("secrets.cst"), "--anomaly-trials", "10"});
  EXPECT_EQ(mismatch.code, 3) << mismatch.output;
}

TEST_F(CliTest, AttackReportOnProtectedBundle) {
  const CliRun run = Cli({"attack", "--bundle", P("bundle.cst"), "--public", P("model.cst"),
                       "--ground-truth", P("secrets.cst"), "--correlation", "0.9",
                       "--anomaly-trials", "10", "--report", P("report.txt")});
  EXPECT_EQ(run.code, 0) << run.output;
  const std::string report = ReadText(P("report.txt"));
  EXPECT_NE(report.find("protected: true"), std::string::npos);
  EXPECT_NE(report.find("decoy_accuracy:"), std::string::npos);
}

TEST_F(CliTest, BenchSingleTrial) {
  const CliRun run = Cli({"bench", "--bundle", P("bundle.cst"), "--secrets", P("secrets.cst"),
                       "--trials", "1"});
  EXPECT_EQ(run.code, 0) << run.output;
  EXPECT_EQ(run.output.rfind("layer\tmode\tmedian_ms\tp95_ms\tbytes\tflop_ratio\n", 0), 0u)
      << run.output;
}

TEST_F(CliTest, SeedComesFromEnvironment) {
  const std::vector<std::string> base = {"obfuscate", "--model", P("model.cst"), "--layers",
                                         "all"};
  auto with = [&](const std::string& name, std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--out-bundle", P(name + "_b.cst"), "--out-secrets",
                             P(name + "_s.cst")});
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
  };
  ASSERT_EQ(Cli(with("env", {}), "CONVSHATTER_SEED=7").code, 0);
  ASSERT_EQ(Cli(with("flag", {"--seed", "7"})).code, 0);
  ASSERT_EQ(Cli(with("other", {"--seed", "8"})).code, 0);
  EXPECT_EQ(ReadText(P("env_b.cst")), ReadText(P("flag_b.cst")));
  EXPECT_EQ(ReadText(P("env_s.cst")), ReadText(P("flag_s.cst")));
  EXPECT_NE(ReadText(P("env_b.cst")), ReadText(P("other_b.cst")));
  EXPECT_EQ(Cli(with("bad", {}), "CONVSHATTER_SEED=abc").code, 2);
}

}  // namespace
