#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "penex/cli.hpp"
#include "penex/config.hpp"
#include "penex/errors.hpp"

namespace penex {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("penex_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ::unsetenv("PENEX_OUTPUT_DIR");
    ::unsetenv("PENEX_SEED");
  }
  void TearDown() override { fs::remove_all(dir_); }

  // A small, fast experiment.
  fs::path write_config(json extra = json::object()) {
    json j = {{"dataset", {{"kind", "blobs"}, {"n", 80}}},
              {"train", {{"epochs", 3}, {"batch_size", 16}, {"model", {{"hidden_dims", {4}}}},
                         {"optim", {{"learning_rate", 0.01}}}}},
              {"rounds", 5}};
    j.merge_patch(extra);
    const fs::path p = dir_ / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
  }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, TrainWritesOneRowPerEpochAndSplit) {
  const fs::path cfg = write_config();
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "r").string()}), 0) << err_.str();
  const auto rows = lines(slurp(dir_ / "r" / "metrics.csv"));
  EXPECT_EQ(rows[0], "epoch,split,acc,ece,ce,brier,mean_margin,rho");
  EXPECT_EQ(rows.size(), 1u + 2u * 4u);
  for (const char* f : {"steps.csv", "margins.csv", "summary.json", "model.json"})
    EXPECT_TRUE(fs::exists(dir_ / "r" / f)) << f;
  const json summary = json::parse(slurp(dir_ / "r" / "summary.json"));
  EXPECT_TRUE(summary.contains("config"));
}

TEST_F(CliTest, RhoColumnFollowsLossKind) {
  const fs::path cfg = write_config();
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "p").string()}), 0);
  const auto penex_rows = lines(slurp(dir_ / "p" / "metrics.csv"));
  for (std::size_t i = 1; i < penex_rows.size(); ++i) {
    const double rho = std::stod(fields(penex_rows[i]).at(7));
    EXPECT_GE(rho, 1e-6);
    EXPECT_LE(rho, 100.0);
  }
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--loss", "ce", "--out", (dir_ / "c").string()}), 0);
  const auto ce_rows = lines(slurp(dir_ / "c" / "metrics.csv"));
  for (std::size_t i = 1; i < ce_rows.size(); ++i) EXPECT_EQ(fields(ce_rows[i]).at(7), "");
}

TEST_F(CliTest, TrainIsByteReproducible) {
  const fs::path cfg = write_config();
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--seed", "9", "--out", (dir_ / "a").string()}), 0);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--seed", "9", "--out", (dir_ / "b").string()}), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "metrics.csv"), slurp(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "steps.csv"), slurp(dir_ / "b" / "steps.csv"));
}

TEST_F(CliTest, EvalReadsSavedModel) {
  const fs::path cfg = write_config();
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "r").string()}), 0);
  ASSERT_EQ(run({"eval", "--config", cfg.string(), "--out", (dir_ / "r").string()}), 0) << err_.str();
  const auto rows = lines(slurp(dir_ / "r" / "eval.csv"));
  ASSERT_GE(rows.size(), 2u);
  const json j = json::parse(out_.str());
  EXPECT_TRUE(j.is_object());
}

TEST_F(CliTest, SweepRowsPerAlpha) {
  const fs::path cfg = write_config({{"sweep", {0.2, 0.8}}});
  ASSERT_EQ(run({"sweep", "--config", cfg.string(), "--out", (dir_ / "s").string()}), 0) << err_.str();
  const auto rows = lines(slurp(dir_ / "s" / "sweep.csv"));
  EXPECT_EQ(rows[0], "alpha,epoch,split,acc,ece,ce,brier,mean_margin,rho");
  EXPECT_EQ(rows.size(), 1u + 2u * 2u * 4u);
  EXPECT_TRUE(fs::exists(dir_ / "s" / "alpha_0.2" / "metrics.csv"));
}

TEST_F(CliTest, AlphaFlagNarrowsSweep) {
  const fs::path cfg = write_config();
  ASSERT_EQ(run({"sweep", "--config", cfg.string(), "--alpha", "0.4", "--out", (dir_ / "s").string()}), 0);
  EXPECT_EQ(lines(slurp(dir_ / "s" / "sweep.csv")).size(), 1u + 2u * 4u);
}

TEST_F(CliTest, AblateAndBoostWriteTables) {
  const fs::path cfg = write_config();
  ASSERT_EQ(run({"ablate", "--config", cfg.string(), "--out", (dir_ / "a").string()}), 0) << err_.str();
  EXPECT_TRUE(fs::exists(dir_ / "a" / "ablation.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "ablation_summary.csv"));
  ASSERT_EQ(run({"boost", "--config", cfg.string(), "--rounds", "4", "--out", (dir_ / "b").string()}), 0)
      << err_.str();
  EXPECT_LE(lines(slurp(dir_ / "b" / "boost_rounds.csv")).size(), 5u);
  EXPECT_TRUE(fs::exists(dir_ / "b" / "margins.csv"));
}

TEST_F(CliTest, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run({"train", "--epochs", "many"}), cli::kExitUsage);
  EXPECT_EQ(run({"train", "--config", (dir_ / "missing.json").string()}), cli::kExitUsage);
  EXPECT_EQ(run({"train", "--loss", "hinge"}), cli::kExitUsage);
  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << "{\"trian\": {}}";
  EXPECT_EQ(run({"train", "--config", bad.string()}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("trian"), std::string::npos);
}

TEST_F(CliTest, VerifyPassesAndWritesReportOnlyWithOut) {
  EXPECT_EQ(run({"verify"}), cli::kExitOk) << err_.str();
  EXPECT_TRUE(json::parse(out_.str()).at("passed").get<bool>());
  EXPECT_EQ(run({"verify", "--out", (dir_ / "v").string()}), cli::kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "v" / "verify.json"));
}

TEST(VerifyExitCode, HardFailureMapsToTwo) {
  std::vector<CheckOutcome> checks{{"a", true, true, "", 0.0}, {"b", false, false, "", 0.0}};
  EXPECT_EQ(cli::verify_exit_code(checks), cli::kExitOk);
  checks.push_back({"c", false, true, "", 0.0});
  EXPECT_EQ(cli::verify_exit_code(checks), cli::kExitVerifyFailed);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.name = "rt";
  c.seed = 77;
  c.dataset.kind = "rings";
  c.train.loss.kind = LossKind::kFocal;
  c.train.loss.rho = 0.3;
  c.train.optim.grad_clip_value = 5.0;
  c.train.model.hidden_dims = {7, 3};
  c.sweep = {0.5};
  c.ablations = {LossKind::kEx};
  const json j = to_json(c);
  EXPECT_EQ(to_json(experiment_from_json(j)), j);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(experiment_from_json(json{{"sed", 1}}), ParameterError);
  EXPECT_THROW(experiment_from_json(json{{"train", {{"loss", {{"alhpa", 1}}}}}}), ParameterError);
  EXPECT_NO_THROW(experiment_from_json(json::object()));
}

TEST(Config, EnvironmentOverridesSitBetweenFileAndFlags) {
  ::setenv("PENEX_SEED", "123", 1);
  ::setenv("PENEX_OUTPUT_DIR", "/tmp/penex_env_out", 1);
  cli::Overrides o;
  ExperimentConfig c = cli::resolve_config(o);
  EXPECT_EQ(c.seed, 123u);
  EXPECT_EQ(c.output_dir, fs::path("/tmp/penex_env_out"));
  o.seed = 5;
  EXPECT_EQ(cli::resolve_config(o).seed, 5u);
  ::setenv("PENEX_SEED", "12x", 1);
  EXPECT_THROW(cli::resolve_config(cli::Overrides{}), ParameterError);
  ::unsetenv("PENEX_SEED");
  ::unsetenv("PENEX_OUTPUT_DIR");
}

TEST(Config, DatasetFromConfigIsDeterministic) {
  ExperimentConfig c;
  c.noise_fraction = 0.2;
  const Dataset a = make_dataset(c), b = make_dataset(c);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.features, b.features);
  auto [tr, va] = make_split(c);
  EXPECT_EQ(tr.n + va.n, c.dataset.n);
}

}  // namespace
}  // namespace penex
