#include <gtest/gtest.h>

#include <fstream>

#include "seedcl/config.hpp"
#include "seedcl/error.hpp"
#include "support/scratch_dir.hpp"

namespace seedcl {
namespace {

TEST(RunConfig, DeskProfileDefaults) {
  const RunConfig c = RunConfig::desk(Framework::moco);
  EXPECT_EQ(c.profile, Profile::desk);
  EXPECT_EQ(c.encoder.input_size, 32);
  EXPECT_EQ(c.encoder.feature_dim, 128);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.epochs, 20);
  EXPECT_EQ(c.framework.queue_capacity, 64);
  EXPECT_EQ(c.augmentation.output_size, 32);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_DOUBLE_EQ(RunConfig::desk(Framework::byol).train.learning_rate, 3e-4);
  EXPECT_DOUBLE_EQ(RunConfig::reference(Framework::byol).train.learning_rate, 1e-3);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ReferenceProfileDefaults) {
  const RunConfig c = RunConfig::reference(Framework::moco);
  EXPECT_EQ(c.encoder.input_size, 224);
  EXPECT_EQ(c.encoder.feature_dim, 2048);
  EXPECT_EQ(c.train.batch_size, 192);
  EXPECT_EQ(c.train.epochs, 50);
  EXPECT_EQ(c.framework.queue_capacity, 256);
  EXPECT_EQ(c.labels.per_class, 50);
  EXPECT_EQ(c.labels.per_class_val, 10);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, JsonRoundTripIsExact) {
  for (Framework f : {Framework::simclr, Framework::moco, Framework::byol}) {
    RunConfig c = RunConfig::desk(f);
    c.train.seed = 1234;
    c.probe.learning_rate = 0.05;
    c.labels.fraction = 0.25;
    const auto j = to_json(c);
    const RunConfig back = run_config_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
  }
  const auto ref = to_json(RunConfig::reference(Framework::byol));
  EXPECT_EQ(to_json(run_config_from_json(ref)).dump(), ref.dump());
}

TEST(RunConfig, PartialDocumentOverridesOnlyGivenFields) {
  const auto doc = nlohmann::json::parse(R"({"framework": {"name": "byol"}, "train": {"epochs": 3}})");
  const RunConfig c = run_config_from_json(doc);
  EXPECT_EQ(c.framework.framework, Framework::byol);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.batch_size, RunConfig::desk(Framework::byol).train.batch_size);
}

TEST(RunConfig, UnknownKeysAndBadTypesAreRejected) {
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"trian": {}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"epoch": 3}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"epochs": "many"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"profile": "laptop"})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"framework": {"name": "swav"}})")), ConfigError);
}

TEST(RunConfig, ValidateCatchesCrossSectionMismatches) {
  RunConfig c = RunConfig::desk(Framework::simclr);
  c.augmentation.output_size = 48;
  EXPECT_THROW(c.validate(), ConfigError);

  c = RunConfig::desk(Framework::moco);
  c.framework.queue_capacity = 16;
  EXPECT_THROW(c.validate(), ConfigError);

  c = RunConfig::desk(Framework::simclr);
  c.labels.fraction = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, LoadsFromFile) {
  testing::ScratchDir dir;
  const auto path = dir / "run.json";
  {
    std::ofstream out(path);
    out << R"({"profile": "desk", "framework": {"name": "moco", "momentum": 0.99}})";
  }
  const RunConfig c = load_run_config(path);
  EXPECT_EQ(c.framework.framework, Framework::moco);
  EXPECT_DOUBLE_EQ(c.framework.momentum, 0.99);
  EXPECT_THROW(load_run_config(dir / "missing.json"), ConfigError);
  {
    std::ofstream out(dir / "broken.json");
    out << "{not json";
  }
  EXPECT_THROW(load_run_config(dir / "broken.json"), ConfigError);
}

TEST(Profile, ParsesKnownNames) {
  EXPECT_EQ(parse_profile("desk"), Profile::desk);
  EXPECT_EQ(parse_profile("reference"), Profile::reference);
  EXPECT_THROW(parse_profile("gpu"), ConfigError);
}

}  // namespace
}  // namespace seedcl
