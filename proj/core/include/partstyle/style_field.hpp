#pragma once

#include "partstyle/common.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace partstyle {

struct FieldConfig {
  int num_frequencies = 6;
  double frequency_scale = 1.0;
  int hidden_width = 256;
  /// Shared trunk layers (Linear + ReLU).
  int depth = 4;
  std::uint64_t seed = 0;

  bool operator==(const FieldConfig&) const = default;
};

void validate(const FieldConfig& config);

/// [p | sin(2^k s p) for k, axis | cos(2^k s p) for k, axis]; width 3 + 6F.
Eigen::MatrixXd positional_encode(const VertexTable& points, const FieldConfig& config);

inline int encoding_width(const FieldConfig& config) { return 3 + 6 * config.num_frequencies; }

struct FieldOutput {
  VertexTable colors;              // in [0,1]
  Eigen::VectorXd displacements;   // in [-1,1], before the 0.1 scale
};

/// Neural style field: positional encoding, a ReLU trunk, and two linear
/// heads squashed by tanh (color mapped to [0,1]).
class StyleField {
 public:
  struct Linear {
    Eigen::MatrixXd weight;  // out × in
    Eigen::VectorXd bias;
  };

  /// Activations kept by forward() for backward().
  struct Tape {
    std::vector<Eigen::MatrixXd> activations;  // input encoding, then each trunk output
    Eigen::MatrixXd color_pre;
    Eigen::VectorXd disp_pre;
  };

  /// Trunk drawn from config.seed; both head output layers start at zero, so
  /// a fresh field is the identity style (gray, no displacement).
  explicit StyleField(const FieldConfig& config);

  [[nodiscard]] FieldOutput evaluate(const VertexTable& vertices) const;
  FieldOutput forward(const VertexTable& vertices, Tape& tape) const;

  /// Flat gradient (parameter order) of a loss given its gradients with
  /// respect to the outputs of the matching forward().
  [[nodiscard]] Eigen::VectorXd backward(const Tape& tape, const VertexTable& d_colors,
                                         const Eigen::VectorXd& d_displacements) const;

  [[nodiscard]] Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);
  [[nodiscard]] Eigen::Index parameter_count() const;
  [[nodiscard]] const FieldConfig& config() const { return config_; }
  [[nodiscard]] const std::vector<Linear>& trunk() const { return trunk_; }
  [[nodiscard]] const Linear& color_head() const { return color_head_; }
  [[nodiscard]] const Linear& displacement_head() const { return disp_head_; }

 private:
  template <typename Fn>
  void for_each_block(Fn&& fn);
  template <typename Fn>
  void for_each_block(Fn&& fn) const;

  FieldConfig config_;
  std::vector<Linear> trunk_;
  Linear color_head_;
  Linear disp_head_;
};

}  // namespace partstyle
