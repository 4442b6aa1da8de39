#pragma once

#include <cstdint>
#include <vector>

#include "dmh/tensor.hpp"

namespace dmh {

struct AdamConfig {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter Adam state with bias correction.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
};

/// Owns optimizer state for a fixed list of parameters. step() consumes the
/// parameters' accumulated gradients and zeroes them afterwards. A step with
/// any non-finite gradient is rejected before touching any parameter.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg);

  void step();

  const AdamConfig& config() const { return cfg_; }
  const AdamState& state(std::size_t i) const { return states_[i]; }
  std::size_t parameter_count() const { return params_.size(); }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
};

/// Single-tensor update, exposed for tests and one-off use.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

}  // namespace dmh
