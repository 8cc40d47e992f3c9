#include "partstyle/style_field.hpp"

#include "partstyle/rng.hpp"

#include <fmt/format.h>

#include <cmath>

namespace partstyle {

void validate(const FieldConfig& config) {
  if (config.num_frequencies < 0) throw InputError("num_frequencies must be >= 0");
  if (!(config.frequency_scale > 0.0)) throw InputError("frequency_scale must be positive");
  if (config.hidden_width < 8) throw InputError("hidden_width must be >= 8");
  if (config.depth < 1) throw InputError("depth must be >= 1");
}

Eigen::MatrixXd positional_encode(const VertexTable& points, const FieldConfig& config) {
  const int f = config.num_frequencies;
  Eigen::MatrixXd out(points.rows(), encoding_width(config));
  out.leftCols(3) = points;
  for (int k = 0; k < f; ++k) {
    const double freq = std::ldexp(config.frequency_scale, k);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      for (int a = 0; a < 3; ++a) {
        const double t = freq * points(i, a);
        out(i, 3 + 3 * k + a) = std::sin(t);
        out(i, 3 + 3 * f + 3 * k + a) = std::cos(t);
      }
    }
  }
  return out;
}

namespace {

StyleField::Linear make_linear(int in, int out, Rng* rng) {
  StyleField::Linear layer;
  layer.weight = Eigen::MatrixXd::Zero(out, in);
  layer.bias = Eigen::VectorXd::Zero(out);
  if (rng) {
    // He-uniform weights for ReLU, PyTorch-style bias range.
    const double wb = std::sqrt(6.0 / in);
    const double bb = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = rng->uniform(-wb, wb);
    }
    for (int r = 0; r < out; ++r) layer.bias(r) = rng->uniform(-bb, bb);
  }
  return layer;
}

}  // namespace

StyleField::StyleField(const FieldConfig& config) : config_(config) {
  validate(config_);
  Rng rng(config_.seed);
  int in = encoding_width(config_);
  for (int l = 0; l < config_.depth; ++l) {
    trunk_.push_back(make_linear(in, config_.hidden_width, &rng));
    in = config_.hidden_width;
  }
  color_head_ = make_linear(in, 3, nullptr);
  disp_head_ = make_linear(in, 1, nullptr);
}

FieldOutput StyleField::forward(const VertexTable& vertices, Tape& tape) const {
  tape.activations.clear();
  tape.activations.push_back(positional_encode(vertices, config_));
  for (const auto& layer : trunk_) {
    Eigen::MatrixXd z = tape.activations.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    tape.activations.push_back(z.cwiseMax(0.0));
  }
  const Eigen::MatrixXd& h = tape.activations.back();
  tape.color_pre = h * color_head_.weight.transpose();
  tape.color_pre.rowwise() += color_head_.bias.transpose();
  tape.disp_pre = h * disp_head_.weight.row(0).transpose();
  tape.disp_pre.array() += disp_head_.bias(0);

  FieldOutput out;
  out.colors = (0.5 + 0.5 * tape.color_pre.array().tanh()).matrix();
  out.displacements = tape.disp_pre.array().tanh().matrix();
  return out;
}

FieldOutput StyleField::evaluate(const VertexTable& vertices) const {
  Tape tape;
  return forward(vertices, tape);
}

Eigen::VectorXd StyleField::backward(const Tape& tape, const VertexTable& d_colors,
                                     const Eigen::VectorXd& d_displacements) const {
  const Eigen::MatrixXd& h = tape.activations.back();
  // d/dz of 0.5 + 0.5 tanh(z) and tanh(z).
  const Eigen::MatrixXd g_color =
      (d_colors.array() * 0.5 * (1.0 - tape.color_pre.array().tanh().square())).matrix();
  const Eigen::VectorXd g_disp =
      (d_displacements.array() * (1.0 - tape.disp_pre.array().tanh().square())).matrix();

  Linear d_color_head{g_color.transpose() * h, g_color.colwise().sum().transpose()};
  Linear d_disp_head{g_disp.transpose() * h, Eigen::VectorXd::Constant(1, g_disp.sum())};

  Eigen::MatrixXd g = g_color * color_head_.weight + g_disp * disp_head_.weight;
  std::vector<Linear> d_trunk(trunk_.size());
  for (int l = static_cast<int>(trunk_.size()) - 1; l >= 0; --l) {
    // ReLU mask from the layer output.
    g = (tape.activations[l + 1].array() > 0.0).select(g, 0.0);
    d_trunk[l].weight = g.transpose() * tape.activations[l];
    d_trunk[l].bias = g.colwise().sum().transpose();
    if (l > 0) g = g * trunk_[l].weight;
  }

  Eigen::VectorXd flat(parameter_count());
  Eigen::Index offset = 0;
  auto append = [&](const Linear& block) {
    for (Eigen::Index c = 0; c < block.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < block.weight.rows(); ++r) flat(offset++) = block.weight(r, c);
    }
    flat.segment(offset, block.bias.size()) = block.bias;
    offset += block.bias.size();
  };
  for (const auto& block : d_trunk) append(block);
  append(d_color_head);
  append(d_disp_head);
  return flat;
}

template <typename Fn>
void StyleField::for_each_block(Fn&& fn) {
  for (auto& block : trunk_) fn(block);
  fn(color_head_);
  fn(disp_head_);
}

template <typename Fn>
void StyleField::for_each_block(Fn&& fn) const {
  for (const auto& block : trunk_) fn(block);
  fn(color_head_);
  fn(disp_head_);
}

Eigen::Index StyleField::parameter_count() const {
  Eigen::Index n = 0;
  for_each_block([&](const Linear& b) { n += b.weight.size() + b.bias.size(); });
  return n;
}

Eigen::VectorXd StyleField::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index offset = 0;
  for_each_block([&](const Linear& b) {
    flat.segment(offset, b.weight.size()) = Eigen::Map<const Eigen::VectorXd>(b.weight.data(), b.weight.size());
    offset += b.weight.size();
    flat.segment(offset, b.bias.size()) = b.bias;
    offset += b.bias.size();
  });
  return flat;
}

void StyleField::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) {
    throw Error(fmt::format("parameter vector has {} entries, field expects {}", flat.size(), parameter_count()));
  }
  Eigen::Index offset = 0;
  for_each_block([&](Linear& b) {
    Eigen::Map<Eigen::VectorXd>(b.weight.data(), b.weight.size()) = flat.segment(offset, b.weight.size());
    offset += b.weight.size();
    b.bias = flat.segment(offset, b.bias.size());
    offset += b.bias.size();
  });
}

}  // namespace partstyle
