#pragma once

#include <string>
#include <vector>

#include "dmh/engine.hpp"
#include "dmh/split.hpp"

namespace dmh {

/// One experiment, fully determined by these fields plus the dataset.
/// Loaded from a flat key=value file; command-line flags override file values.
struct ExperimentConfig {
  std::string schema;                           // dataset schema path
  std::string data_dir;                         // trial-file directory (file schemas)
  std::string system = "T";                     // T | E | BS | FS-A | FS-S
  HeadKind head = HeadKind::Mlp;
  std::vector<double> thresholds;               // empty -> default_thresholds()
  std::size_t W = 5;
  std::size_t horizon = 1;
  std::size_t epochs = 1000;
  std::size_t batch_size = 64;
  double lr = 0.1;
  std::uint64_t seed = 1;
  bool balancing = true;
  TransportKind transport = TransportKind::InProcess;
  std::size_t clients = 1;
  std::string out_dir;                          // empty -> $DMH_OUT or ./runs

  bool is_baseline() const;
  DmhMode dmh_mode() const;                     // valid only when !is_baseline()
  BaselineKind baseline() const;                // valid only when is_baseline()
  TrainConfig train_config() const;
  std::vector<double> effective_thresholds() const;
};

std::string canonical_system(const std::string& s);  // throws ConfigError
std::string to_string(DmhMode m);

/// Parses `key = value` lines; '#' starts a comment; unknown keys are errors.
ExperimentConfig load_experiment_config(const std::string& path);
void validate_config(const ExperimentConfig& cfg);

}  // namespace dmh
