#include "dmh/adam.hpp"

#include <cmath>

namespace dmh {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
  if (!param.same_shape(grad)) {
    throw DimensionError("adam_step: grad " + shape_str(grad.shape()) +
                         " does not match parameter " + shape_str(param.shape()));
  }
  if (state.m.size() != param.size()) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
    state.t = 0;
  }
  if (!grad.all_finite()) {
    throw NonFiniteError("adam_step: non-finite gradient, step rejected");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  states_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    states_[i].m = Tensor(params_[i]->value.shape());
    states_[i].v = Tensor(params_[i]->value.shape());
  }
}

void AdamOptimizer::step() {
  for (Parameter* p : params_) {
    if (!p->grad.all_finite()) {
      throw NonFiniteError("adam step rejected: non-finite gradient in '" + p->name + "'");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(params_[i]->value, params_[i]->grad, states_[i], cfg_);
    params_[i]->zero_grad();
  }
}

}  // namespace dmh
