#include "partstyle/optimizer.hpp"

#include "partstyle/common.hpp"

#include <cmath>

namespace partstyle {

Adam::Adam(AdamConfig config, Eigen::Index size) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw InputError("learning rate must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw InputError("Adam betas must lie in [0, 1)");
  }
  state_.m = Eigen::VectorXd::Zero(size);
  state_.v = Eigen::VectorXd::Zero(size);
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size() || grad.size() != state_.m.size()) throw Error("Adam: size mismatch");
  ++state_.step;
  const auto t = static_cast<double>(state_.step);
  state_.m = config_.beta1 * state_.m + (1.0 - config_.beta1) * grad;
  state_.v = config_.beta2 * state_.v + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  params.array() -= config_.learning_rate * (state_.m.array() / c1) /
                    ((state_.v.array() / c2).sqrt() + config_.epsilon);
}

void Adam::set_state(AdamState state) {
  if (state.m.size() != state_.m.size() || state.v.size() != state_.v.size()) {
    throw InputError("optimizer state does not match the parameter count");
  }
  state_ = std::move(state);
}

}  // namespace partstyle
