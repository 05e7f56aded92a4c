#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "penex/boosting.hpp"
#include "penex/config.hpp"
#include "penex/train.hpp"
#include "penex/verification.hpp"

namespace penex::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerifyFailed = 2;

/// Command-line overrides; each one wins over the config file and the environment.
struct Overrides {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> loss;
  std::optional<double> alpha;
  std::optional<int> epochs;
  std::optional<int> rounds;
};

/// Config file (or defaults), then PENEX_* environment variables, then flags.
ExperimentConfig resolve_config(const Overrides& overrides);

/// Trains once on the experiment's split. The model's input and output widths
/// are taken from the data.
RunReport run_experiment(const ExperimentConfig& config, const TrainConfig& train_config);

/// metrics.csv, steps.csv, margins.csv, summary.json and model.json under `dir`.
void write_run(const RunReport& report, const ExperimentConfig& config,
               const std::vector<std::string>& warnings, const std::filesystem::path& dir);

std::string metrics_csv(const RunReport& report);

void save_model(const std::filesystem::path& path, const TrainConfig& config,
                const Parameters& params);
/// Reads a model written by save_model; `config` receives the loss and model specs.
Parameters load_model(const std::filesystem::path& path, TrainConfig& config);

int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_eval(const ExperimentConfig& config, const std::filesystem::path& model_path,
             std::ostream& out, std::ostream& err);
int cmd_sweep(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_ablate(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_boost(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
/// kExitOk when every hard check passed, kExitVerifyFailed otherwise.
int verify_exit_code(const std::vector<CheckOutcome>& checks);

/// `write_report` controls whether verify.json is written to the output directory.
int cmd_verify(const ExperimentConfig& config, bool write_report, std::ostream& out,
               std::ostream& err);

/// Parses argv-style arguments (without the program name) and dispatches.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace penex::cli
