#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace partstyle {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam over a flat parameter vector.
class Adam {
 public:
  Adam(AdamConfig config, Eigen::Index size);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  [[nodiscard]] const AdamState& state() const { return state_; }
  void set_state(AdamState state);
  [[nodiscard]] const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  AdamState state_;
};

}  // namespace partstyle
