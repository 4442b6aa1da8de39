#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmh/data.hpp"
#include "dmh/tensor.hpp"

namespace dmh {

/// Population-std Pearson coefficient; nullopt when either series is constant.
std::optional<double> pearson_correlation(const std::vector<double>& f,
                                          const std::vector<double>& p);

/// Per-feature correlation with power over the concatenation of the given
/// trials (training trials only — grouping must never see test data).
std::vector<std::optional<double>> correlations_to_power(const std::vector<Trial>& trials);

/// Absolute: group by |C| (default). Signed: group by raw C, with C < 0
/// falling through to group 1.
enum class GroupingMode { Absolute, Signed };

struct GroupSpec {
  std::vector<double> thresholds;                // T_0..T_H, T_0=0, T_H=1
  std::vector<std::vector<std::size_t>> groups;  // feature indices per group
  std::vector<double> coefficients;              // per feature; degenerate -> 0
  GroupingMode mode = GroupingMode::Absolute;

  std::size_t group_count() const { return groups.size(); }
  std::size_t feature_count() const { return coefficients.size(); }
  std::vector<std::size_t> sizes() const;
  void validate() const;  // partition + threshold invariants
};

std::vector<double> default_thresholds();  // {0, 0.05, 0.20, 1}, H = 3

/// Feature m joins group h iff T_{h-1} <= key < T_h (half-open); key = 1
/// closes into the top group.
GroupSpec group_features(const std::vector<double>& coefficients,
                         const std::vector<double>& thresholds,
                         GroupingMode mode = GroupingMode::Absolute);

void save_group_spec(const GroupSpec& spec, const std::vector<std::string>& feature_names,
                     const std::string& path);
GroupSpec load_group_spec(const std::string& path,
                          std::vector<std::string>* feature_names = nullptr);

/// Min-max map to [0,1], fitted on training trials only. Constant columns map
/// to 0.5 and invert to their constant.
struct Normalizer {
  std::vector<double> feat_min, feat_max;
  double power_min = 0.0, power_max = 1.0;

  double apply_feature(std::size_t m, double x) const;
  double invert_feature(std::size_t m, double y) const;
  double apply_power(double x) const;
  double invert_power(double y) const;
  Trial apply(const Trial& trial) const;
};

Normalizer fit_normalizer(const std::vector<Trial>& training);

/// Inputs for target time t cover times t-d-W+1 .. t-d (oldest column first).
/// Head targets are that group's feature values at time t itself.
struct WindowedSample {
  std::vector<Tensor> blocks;        // per group, (n_h, W)
  std::vector<Tensor> head_targets;  // per group, (n_h)
  double power_target = 0.0;
  std::size_t target_time = 0;
};

std::vector<WindowedSample> pack_windows(const Trial& trial, const GroupSpec& spec,
                                         std::size_t W, std::size_t horizon);

}  // namespace dmh
