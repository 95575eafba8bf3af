// Copyright 2026 The conmamba Authors
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

#include "cli.hpp"

#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace conmamba::cli {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "conmamba");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

constexpr const char* kTinyConfig = R"({
  "seed": 4,
  "encoder": {"image_size": 8, "patch_size": 4, "d_model": 6, "n_blocks": 1,
              "d_inner": 6, "n_state": 3, "proj_dim": 4},
  "train": {"epochs": 2, "batch_size": 4, "lr": 0.01},
  "probe": {"steps": 20},
  "data": {"source": "synthetic", "n_classes": 2, "per_class": 6}
})";

fs::path write_config(const TempDir& dir, const std::string& text) {
  const fs::path p = dir / "cfg.json";
  std::ofstream(p) << text;
  return p;
}

TEST(Cli, NoSubcommandIsUsageError) {
  const Result r = invoke({});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_EQ(r.err.rfind("error: usage:", 0), 0u) << r.err;
}

TEST(Cli, HelpSucceeds) {
  const Result r = invoke({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("pretrain"), std::string::npos);
}

TEST(Cli, MissingRequiredConfigFieldExitsTwoNamingField) {
  TempDir dir("cli-missing");
  const auto cfg = write_config(dir, R"({"data": {"source": "folder"}})");
  const Result r = invoke({"pretrain", "--config", cfg.string(), "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("field=data.root"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
}

TEST(Cli, UnknownConfigFieldExitsTwo) {
  TempDir dir("cli-unknown");
  const auto cfg = write_config(dir, R"({"train": {"epoch": 3}})");
  const Result r = invoke({"pretrain", "--config", cfg.string(), "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("field=train.epoch"), std::string::npos) << r.err;
}

TEST(Cli, EvalBeforeProbeIsRuntimeError) {
  TempDir dir("cli-eval-first");
  const auto cfg = write_config(dir, kTinyConfig);
  const fs::path run_dir = dir / "run";
  ASSERT_EQ(invoke({"pretrain", "--config", cfg.string(), "--out", run_dir.string()}).code, kExitOk);
  const Result r = invoke({"eval", "--run", run_dir.string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("missing checkpoint"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find(kProbeFile), std::string::npos) << r.err;
}

TEST(Cli, MissingRunDirectoryIsRuntimeError) {
  TempDir dir("cli-no-run");
  const Result r = invoke({"probe", "--run", (dir / "nothing").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_EQ(r.err.rfind("error: runtime:", 0), 0u) << r.err;
}

TEST(Cli, BenchScanRejectsZeroRepeats) {
  const Result r = invoke({"bench-scan", "--repeats", "0", "--lengths", "16"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("field=repeats"), std::string::npos) << r.err;
}

TEST(Cli, BenchScanWritesCsv) {
  const Result r = invoke({"bench-scan", "--repeats", "2", "--lengths", "16,32"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream lines(r.out);
  std::string header, row1, row2;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  EXPECT_EQ(header, "L,sequential_ns,parallel_ns,max_abs_diff");
  EXPECT_EQ(row1.rfind("16,", 0), 0u);
  EXPECT_EQ(row2.rfind("32,", 0), 0u);
}

TEST(Cli, BenchScanRowsAgree) {
  const auto rows = bench_scan({64, 100}, 1, 4, 4, 3);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_LT(r.max_abs_diff, 1e-10);
    EXPECT_GT(r.sequential_ns, 0.0);
  }
}

TEST(Cli, GradcheckListsEveryComponentOnce) {
  const Result r = invoke({"gradcheck"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::vector<std::string> names;
  while (std::getline(lines, line)) {
    if (line.empty() || line.rfind("component", 0) == 0) continue;  // header row
    names.push_back(line.substr(0, line.find(' ')));
    EXPECT_NE(line.find("PASS"), std::string::npos) << line;
  }
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "micro_encoder"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "total_loss"), names.end());
}

TEST(Cli, GradcheckInjectedFaultFails) {
  const Result r = invoke({"gradcheck", "--inject-fault"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("faulty_cube"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, FullPipelineProducesArtifacts) {
  TempDir dir("cli-pipeline");
  const auto cfg = write_config(dir, kTinyConfig);
  const fs::path run_dir = dir / "run";
  Result r = invoke({"pretrain", "--config", cfg.string(), "--out", run_dir.string(), "--epochs", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("epoch 1/1"), std::string::npos) << r.err;
  for (const char* f : {kConfigFile, kCheckpointFile, kLossFile}) {
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  }
  // The echoed config carries the flag override.
  const RunConfig echoed = parse_run_config(slurp(run_dir / kConfigFile));
  EXPECT_EQ(echoed.train.epochs, 1u);
  EXPECT_EQ(echoed.train.seed, 4u);

  r = invoke({"probe", "--run", run_dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  r = invoke({"eval", "--run", run_dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(slurp(run_dir / kMetricsFile).find("macro_f1"), std::string::npos);
  EXPECT_TRUE(fs::exists(run_dir / kMetricsTableFile));
  r = invoke({"embed", "--run", run_dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = slurp(run_dir / kEmbeddingsFile);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(Cli, SameSeedSameLossHistory) {
  TempDir dir("cli-determinism");
  const auto cfg = write_config(dir, kTinyConfig);
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(invoke({"pretrain", "--config", cfg.string(), "--out", (dir / name).string(),
                      "--device-threads", "1"})
                  .code,
              kExitOk);
  }
  ASSERT_EQ(invoke({"pretrain", "--config", cfg.string(), "--out", (dir / "c").string(),
                    "--seed", "5"})
                .code,
            kExitOk);
  const std::string a = slurp(dir / "a" / kLossFile);
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / kLossFile));
  EXPECT_NE(a, slurp(dir / "c" / kLossFile));
}

TEST(Cli, ResumeContinuesToSameHistory) {
  TempDir dir("cli-resume");
  const auto cfg = write_config(dir, kTinyConfig);
  ASSERT_EQ(invoke({"pretrain", "--config", cfg.string(), "--out", (dir / "full").string()}).code,
            kExitOk);
  ASSERT_EQ(invoke({"pretrain", "--config", cfg.string(), "--out", (dir / "half").string(),
                    "--epochs", "1"})
                .code,
            kExitOk);
  // Resuming the one-epoch checkpoint under the two-epoch config finishes
  // the run exactly as the uninterrupted one did.
  const Result r = invoke({"pretrain", "--config", cfg.string(), "--out", (dir / "rest").string(),
                           "--resume", (dir / "half" / kCheckpointFile).string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("resuming from step 2"), std::string::npos) << r.err;
  const std::string full = slurp(dir / "full" / kLossFile);
  const std::string half = slurp(dir / "half" / kLossFile);
  EXPECT_EQ(full.substr(0, half.size()), half);
  EXPECT_EQ(slurp(dir / "rest" / kLossFile), full);
  EXPECT_EQ(slurp(dir / "rest" / kCheckpointFile), slurp(dir / "full" / kCheckpointFile));
}

TEST(Cli, SynthWritesPngTree) {
  TempDir dir("cli-synth");
  const auto cfg = write_config(dir, kTinyConfig);
  const Result r = invoke({"synth", "--config", cfg.string(), "--out", dir.path().string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "dataset" / "manifest.json"));
  EXPECT_TRUE(fs::is_directory(dir / "dataset" / "class_0"));
  const Dataset back = load_folder_dataset(dir / "dataset", 8);
  EXPECT_EQ(back.images.size(), 12u);
}

}  // namespace
}  // namespace conmamba::cli
