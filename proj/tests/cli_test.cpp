#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "seedcl/checkpoint.hpp"
#include "seedcl/manifest.hpp"
#include "support/scratch_dir.hpp"

namespace seedcl {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args, const fs::path& log_dir) {
  const fs::path log = log_dir / "cli_stdout.txt";
  const std::string cmd = "env -u SEEDCL_THREADS \"" SEEDCL_CLI_PATH "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testing::slurp(log);
  return r;
}

std::vector<nlohmann::json> read_jsonl(const fs::path& file) {
  std::vector<nlohmann::json> rows;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

std::size_t count_lines(const fs::path& file) {
  std::ifstream in(file);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

class Cli : public ::testing::Test {
 protected:
  testing::ScratchDir dir{"seedcl_cli"};

  fs::path generate(const std::string& name, const std::string& extra = "") {
    const fs::path out = dir / name;
    const auto r = run_cli("gen-synthetic --toy-classes 3 --per-class 10 --size 32 --seed 5 " + extra + " --out \"" +
                               out.string() + "\"",
                           dir.path());
    EXPECT_EQ(r.exit_code, 0) << r.out;
    return out;
  }
};

TEST_F(Cli, GenSyntheticSmallToyDataset) {
  const fs::path out = generate("data");
  const auto manifest = read_manifest(out / "manifest.jsonl");
  EXPECT_EQ(manifest.records.size(), 30u);
  EXPECT_EQ(manifest.count(Split::train), 24u);
  EXPECT_EQ(manifest.count(Split::val), 6u);
  std::size_t pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(out / "images")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 30u);

  const auto records = read_jsonl(out / "run_records.jsonl");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0]["command"], "gen-synthetic");
  EXPECT_EQ(records[0]["exit_code"], 0);
}

TEST_F(Cli, GenSyntheticIsReproducible) {
  const fs::path a = generate("a");
  const fs::path b = generate("b");
  EXPECT_EQ(testing::slurp(a / "manifest.jsonl"), testing::slurp(b / "manifest.jsonl"));
  EXPECT_EQ(testing::slurp(a / "placements.jsonl"), testing::slurp(b / "placements.jsonl"));
  EXPECT_EQ(testing::slurp(a / "images" / "toy0" / "toy0_00003.png"),
            testing::slurp(b / "images" / "toy0" / "toy0_00003.png"));
}

TEST_F(Cli, UnknownFrameworkIsAUsageError) {
  const fs::path data = generate("data");
  const auto r = run_cli("pretrain --framework swav --data \"" + (data / "manifest.jsonl").string() + "\" --out \"" +
                             (dir / "run").string() + "\"",
                         dir.path());
  EXPECT_EQ(r.exit_code, 2) << r.out;
}

TEST_F(Cli, MissingRequiredFlagIsAUsageError) {
  EXPECT_EQ(run_cli("gen-synthetic --toy-classes 3", dir.path()).exit_code, 2);
  EXPECT_EQ(run_cli("no-such-command", dir.path()).exit_code, 2);
}

TEST_F(Cli, BadSplitFailsAndStillWritesARunRecord) {
  const fs::path out = dir / "bad";
  const auto r = run_cli("gen-synthetic --toy-classes 3 --per-class 10 --split 0.9,0.3 --out \"" + out.string() + "\"",
                         dir.path());
  EXPECT_EQ(r.exit_code, 2) << r.out;
  const auto records = read_jsonl(out / "run_records.jsonl");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0]["status"], "error");
  EXPECT_EQ(records[0]["exit_code"], 2);
  EXPECT_FALSE(records[0]["error"].get<std::string>().empty());
}

TEST_F(Cli, RuntimeFailureExitsWithOne) {
  const fs::path out = dir / "run";
  std::ofstream(dir / "empty.jsonl") << "";
  const auto r =
      run_cli("pretrain --framework simclr --data \"" + (dir / "empty.jsonl").string() + "\" --out \"" + out.string() +
                  "\"",
              dir.path());
  EXPECT_NE(r.exit_code, 0);
  const auto records = read_jsonl(out / "run_records.jsonl");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0]["exit_code"].get<int>(), r.exit_code);
}

TEST_F(Cli, PretrainMocoWritesReadableCheckpointAndLossRows) {
  const fs::path data = generate("data");
  const fs::path out = dir / "moco";
  const auto r = run_cli("pretrain --framework moco --epochs 2 --batch-size 8 --seed 3 --data \"" +
                             (data / "manifest.jsonl").string() + "\" --out \"" + out.string() + "\"",
                         dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const Checkpoint ckpt = read_checkpoint(out / "checkpoint");
  EXPECT_EQ(ckpt.meta.framework, "moco");
  EXPECT_GT(ckpt.params.count_prefix("encoder."), 0u);
  EXPECT_GT(ckpt.params.count_prefix("head.projection."), 0u);
  const int steps_per_epoch = ckpt.meta.extra["steps_per_epoch"].get<int>();
  EXPECT_EQ(steps_per_epoch, 3);  // 24 train records, batch 8
  EXPECT_EQ(count_lines(out / "loss.csv"), 1u + 2u * static_cast<std::size_t>(steps_per_epoch));
  EXPECT_EQ(count_lines(out / "loss_epochs.csv"), 3u);

  const fs::path again = dir / "roundtrip";
  write_checkpoint(again, ckpt.params, ckpt.meta);
  EXPECT_EQ(testing::slurp(again / "params.bin"), testing::slurp(out / "checkpoint" / "params.bin"));
  EXPECT_EQ(testing::slurp(again / "meta.json"), testing::slurp(out / "checkpoint" / "meta.json"));
}

TEST_F(Cli, ProbeLeavesEncoderBytesUnchangedAndEvalReports) {
  const fs::path data = generate("data");
  const fs::path pre = dir / "pre";
  ASSERT_EQ(run_cli("pretrain --framework simclr --epochs 1 --batch-size 8 --data \"" +
                        (data / "manifest.jsonl").string() + "\" --out \"" + pre.string() + "\"",
                    dir.path())
                .exit_code,
            0);
  const fs::path probe = dir / "probe";
  const auto r = run_cli("probe --ckpt \"" + (pre / "checkpoint").string() + "\" --data \"" +
                             (data / "manifest.jsonl").string() + "\" --out \"" + probe.string() +
                             "\" --per-class 6 --per-class-val 2 --epochs 5 --lr 0.01",
                         dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const Checkpoint before = read_checkpoint(pre / "checkpoint");
  const Checkpoint after = read_checkpoint(probe / "encoder");
  ParamStore<float> encoder_before = before.params.subset("encoder.");
  ParamStore<float> encoder_after = after.params.subset("encoder.");
  encoder_before.set_trainable_prefix("encoder.", false);
  encoder_after.set_trainable_prefix("encoder.", false);
  EXPECT_TRUE(encoder_before == encoder_after);
  EXPECT_EQ(after.params.count_prefix("head."), 0u);
  EXPECT_EQ(count_lines(probe / "probe_curve.csv"), 6u);

  const fs::path report = dir / "report.txt";
  const auto e = run_cli("eval --ckpt \"" + (probe / "encoder").string() + "\" --probe \"" +
                             (probe / "probe").string() + "\" --data \"" + (data / "manifest.jsonl").string() +
                             "\" --split val --report-out \"" + report.string() + "\"",
                         dir.path());
  ASSERT_EQ(e.exit_code, 0) << e.out;
  const std::string text = testing::slurp(report);
  EXPECT_NE(text.find("macro avg"), std::string::npos);
  const auto j = nlohmann::json::parse(testing::slurp(report.string() + ".json"));
  EXPECT_EQ(j["total"].get<int>(), 6);
}

TEST_F(Cli, EvalOnPerfectPredictionsReportsAccuracyOne) {
  {
    std::ofstream csv(dir / "pred.csv");
    csv << "truth,prediction\ncanola,canola\nsoy,soy\nwheat,wheat\nsoy,soy\n";
  }
  const auto r = run_cli("eval --predictions \"" + (dir / "pred.csv").string() + "\"", dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  std::istringstream lines(r.out);
  std::string line;
  bool found = false;
  while (std::getline(lines, line))
    if (line.find("accuracy") != std::string::npos) found = line.find("1.00") != std::string::npos;
  EXPECT_TRUE(found) << r.out;
}

TEST_F(Cli, HistCompareOfAFileWithItselfIsZero) {
  const fs::path data = generate("data");
  const std::string png = (data / "images" / "toy1" / "toy1_00000.png").string();
  const auto r = run_cli("hist-compare \"" + png + "\" \"" + png + "\"", dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  EXPECT_EQ(r.out, "0.000000\n");
}

TEST_F(Cli, LrFindWritesSweep) {
  const fs::path data = generate("data");
  const fs::path pre = dir / "pre";
  ASSERT_EQ(run_cli("pretrain --framework byol --epochs 1 --batch-size 8 --data \"" +
                        (data / "manifest.jsonl").string() + "\" --out \"" + pre.string() + "\"",
                    dir.path())
                .exit_code,
            0);
  const fs::path out = dir / "lr";
  const auto r = run_cli("lr-find --ckpt \"" + (pre / "checkpoint").string() + "\" --data \"" +
                             (data / "manifest.jsonl").string() + "\" --out \"" + out.string() +
                             "\" --per-class 6 --per-class-val 2 --steps 20",
                         dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("suggested learning rate"), std::string::npos);
  EXPECT_GE(count_lines(out / "lr_sweep.csv"), 2u);
}

}  // namespace
}  // namespace seedcl
