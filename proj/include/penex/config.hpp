#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "penex/dataset.hpp"
#include "penex/losses.hpp"
#include "penex/train.hpp"

namespace penex {

/// Where the data for an experiment comes from.
struct DatasetSpec {
  /// "blobs", "rings", "categorical" or "csv".
  std::string kind = "blobs";
  std::size_t n = 400;
  int classes = 2;
  std::size_t dim = 2;
  double spread = kBlobsFivePercentSpread;
  /// Radial noise of the rings generator.
  double noise = 0.1;
  /// Class probabilities of the categorical generator.
  std::vector<double> probs{0.8, 0.2};
  std::filesystem::path path;
  bool standardize = false;

  void validate() const;
};

/// The alpha grid swept by default.
inline const std::vector<double> kDefaultSweepAlphas{1e-5, 0.2, 0.4, 0.8, 1.6, 3.2};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  double noise_fraction = 0.0;
  double split_ratio = 0.8;
  TrainConfig train;
  std::vector<double> sweep = kDefaultSweepAlphas;
  std::vector<LossKind> ablations{LossKind::kPenex, LossKind::kConexSqPenalty,
                                  LossKind::kConexAugLagrangian, LossKind::kConexHard,
                                  LossKind::kEx};
  int rounds = 50;
  std::filesystem::path output_dir = "runs";
  /// Master seed: data generation, splitting and training derive from it.
  std::uint64_t seed = 0;

  ExperimentConfig();
  /// Range checks plus existence of referenced files.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys raise ParameterError.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Applies PENEX_OUTPUT_DIR and PENEX_SEED when set.
void apply_env_overrides(ExperimentConfig& config);

nlohmann::json to_json(const LossSpec& spec);
nlohmann::json to_json(const ModelSpec& spec);
nlohmann::json to_json(const TrainConfig& config);
/// Fields absent from `j` keep the values of `base`.
LossSpec loss_spec_from_json(const nlohmann::json& j, LossSpec base = {});
ModelSpec model_spec_from_json(const nlohmann::json& j, ModelSpec base = {});

/// Data for an experiment after optional label noise.
Dataset make_dataset(const ExperimentConfig& config, std::vector<std::string>* warnings = nullptr);

/// Train/validation partition used by every command.
std::pair<Dataset, Dataset> make_split(const ExperimentConfig& config,
                                       std::vector<std::string>* warnings = nullptr);

}  // namespace penex
