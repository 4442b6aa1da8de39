#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dmh/tensor.hpp"

namespace dmh {

struct FeatureSeries {
  std::string name;
  std::vector<double> values;
};

/// One run's multivariate feature series plus the power target series.
/// All feature series and the power series have equal length.
struct Trial {
  std::string name;
  std::vector<FeatureSeries> features;
  std::vector<double> power;
  std::string target_name = "power";

  std::size_t length() const { return power.size(); }
  std::size_t feature_count() const { return features.size(); }
};

struct SyntheticSpec {
  std::size_t trials = 5;
  std::size_t length = 500;
  std::size_t informative = 6;
  std::size_t noise_features = 10;
  double noise_level = 0.05;
  std::uint64_t seed = 1;
  std::string rule = "ar1-linear-v1";
};

struct DatasetSchema {
  std::string name;
  std::vector<std::string> feature_columns;
  std::string target_column = "power";
  std::vector<std::string> trial_files;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::optional<SyntheticSpec> synthetic;  // generated dataset instead of files
};

struct LoadStats {
  std::size_t dropped_rows = 0;
  std::vector<std::pair<std::string, std::size_t>> per_file;
};

DatasetSchema load_schema(const std::string& path);
void save_schema(const DatasetSchema& schema, const std::string& path);

/// One trial per file; rows with unparseable numerics are dropped and counted.
Trial load_trial_file(const std::string& path, const std::vector<std::string>& feature_columns,
                      const std::string& target_column, std::size_t* dropped = nullptr);
std::vector<Trial> load_trials(const DatasetSchema& schema, const std::string& dir,
                               LoadStats* stats = nullptr);
void save_trial(const Trial& trial, const std::string& path);

/// Seeded disjoint partition into (train, test).
std::pair<std::vector<Trial>, std::vector<Trial>> split_dataset(const std::vector<Trial>& trials,
                                                                std::size_t n_train,
                                                                std::size_t n_test,
                                                                std::uint64_t seed);

/// Informative features follow a seeded AR(1) process; power is a fixed linear
/// combination of them at the same time step plus Gaussian observation noise.
/// Noise features are independent AR(1) processes that never enter the target.
std::vector<Trial> generate_synthetic(const SyntheticSpec& spec);

/// The linear-combination weights the generator uses (deterministic per spec).
std::vector<double> synthetic_true_weights(const SyntheticSpec& spec);

/// Synthetic schemas generate; file schemas load from dir.
std::vector<Trial> realize_trials(const DatasetSchema& schema, const std::string& dir,
                                  LoadStats* stats = nullptr);

}  // namespace dmh
