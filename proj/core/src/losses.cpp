#include "partstyle/losses.hpp"

#include "partstyle/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <limits>
#include <map>

namespace partstyle {

std::string to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::l2: return "l2";
    case DistanceKind::mse: return "mse";
    case DistanceKind::bce: return "bce";
    case DistanceKind::neg_mean: return "neg-mean";
  }
  return "l2";
}

DistanceKind parse_distance_kind(const std::string& text) {
  if (text == "l2") return DistanceKind::l2;
  if (text == "mse") return DistanceKind::mse;
  if (text == "bce") return DistanceKind::bce;
  if (text == "neg-mean" || text == "neg_mean") return DistanceKind::neg_mean;
  throw InputError("unknown distance kind '" + text + "' (expected l2, mse, bce, neg-mean)");
}

void validate(const LossConfig& c) {
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw InputError("loss threshold must lie in (0, 1)");
  if (c.n_global_augs < 0 || c.n_local_augs < 0) throw InputError("augmentation counts must be >= 0");
  if (c.crop_pad < 0) throw InputError("crop_pad must be >= 0");
  if (!(c.min_local_fraction > 0.0 && c.min_local_fraction <= 1.0)) {
    throw InputError("min_local_fraction must lie in (0, 1]");
  }
  if (!(c.perspective_strength >= 0.0 && c.perspective_strength < 1.0)) {
    throw InputError("perspective_strength must lie in [0, 1)");
  }
}

std::vector<double> gather_alignment(const AlignmentMap& map, const SpatialLocationSet& locations) {
  std::vector<double> out;
  out.reserve(locations.entries.size());
  for (const auto& e : locations.entries) {
    if (e.x < 0 || e.y < 0 || e.x >= map.grid_w || e.y >= map.grid_h || e.phrase < 0 ||
        e.phrase >= map.num_phrases()) {
      throw Error(fmt::format("location ({}, {}, {}) lies outside the {}x{}x{} alignment map; "
                              "content and styled renders disagree",
                              e.x, e.y, e.phrase, map.grid_w, map.grid_h, map.num_phrases()));
    }
    out.push_back(map.at(e.x, e.y, e.phrase));
  }
  return out;
}

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

LossValue part_style_loss(std::span<const double> gathered, const LossConfig& config) {
  if (gathered.empty()) throw Error("no localized regions");
  const double t = config.target_value;
  const auto k = static_cast<double>(gathered.size());
  LossValue out;
  out.gradient.resize(gathered.size());
  switch (config.distance) {
    case DistanceKind::l2: {
      double ss = 0.0;
      for (double s : gathered) ss += (sigmoid(s) - t) * (sigmoid(s) - t);
      out.value = std::sqrt(ss);
      for (std::size_t i = 0; i < gathered.size(); ++i) {
        const double p = sigmoid(gathered[i]);
        out.gradient[i] = out.value > 0.0 ? (p - t) / out.value * p * (1.0 - p) : 0.0;
      }
      break;
    }
    case DistanceKind::mse: {
      for (std::size_t i = 0; i < gathered.size(); ++i) {
        const double p = sigmoid(gathered[i]);
        out.value += (p - t) * (p - t) / k;
        out.gradient[i] = 2.0 * (p - t) / k * p * (1.0 - p);
      }
      break;
    }
    case DistanceKind::bce: {
      // −[t log σ(s) + (1−t) log(1−σ(s))] = t·softplus(−s) + (1−t)·softplus(s)
      for (std::size_t i = 0; i < gathered.size(); ++i) {
        const double s = gathered[i];
        out.value += (t * softplus(-s) + (1.0 - t) * softplus(s)) / k;
        out.gradient[i] = (sigmoid(s) - t) / k;
      }
      break;
    }
    case DistanceKind::neg_mean: {
      out.value = t;
      for (std::size_t i = 0; i < gathered.size(); ++i) {
        const double p = sigmoid(gathered[i]);
        out.value -= p / k;
        out.gradient[i] = -p * (1.0 - p) / k;
      }
      break;
    }
  }
  return out;
}

Eigen::MatrixXd scatter_alignment_gradient(const AlignmentMap& map, const SpatialLocationSet& locations,
                                           std::span<const double> d_gathered) {
  if (d_gathered.size() != locations.entries.size()) throw Error("gradient length does not match locations");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(map.scores.rows(), map.scores.cols());
  for (std::size_t i = 0; i < d_gathered.size(); ++i) {
    const auto& e = locations.entries[i];
    d(e.y * map.grid_w + e.x, e.phrase) += d_gathered[i];
  }
  return d;
}

namespace {

Image extract(const Image& img, const PixelBox& r) {
  Image out(r.width(), r.height());
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) out.set_pixel(x - r.x0, y - r.y0, img.pixel(x, y));
  }
  return out;
}

}  // namespace

CropSet crop_regions(const RenderedImage& image, const SpatialLocationSet& locations, int grid_stride, int crop_pad,
                     int num_parts) {
  if (grid_stride < 1) throw InputError("grid stride must be positive");
  const Image& img = image.pixels;
  std::map<int, PixelBox> rects;
  for (const auto& e : locations.entries) {
    const PixelBox cell{e.x * grid_stride, e.y * grid_stride, (e.x + 1) * grid_stride, (e.y + 1) * grid_stride};
    auto [it, fresh] = rects.try_emplace(e.phrase, cell);
    if (!fresh) {
      auto& r = it->second;
      r.x0 = std::min(r.x0, cell.x0);
      r.y0 = std::min(r.y0, cell.y0);
      r.x1 = std::max(r.x1, cell.x1);
      r.y1 = std::max(r.y1, cell.y1);
    }
  }
  CropSet out;
  out.source_width = img.width;
  out.source_height = img.height;
  for (auto [part, r] : rects) {
    r.x0 = std::clamp(r.x0 - crop_pad, 0, img.width);
    r.y0 = std::clamp(r.y0 - crop_pad, 0, img.height);
    r.x1 = std::clamp(r.x1 + crop_pad, 0, img.width);
    r.y1 = std::clamp(r.y1 + crop_pad, 0, img.height);
    if (r.area() == 0) continue;
    out.crops.push_back({part, r, extract(img, r)});
  }
  for (int p = 0; p < num_parts; ++p) {
    if (!rects.count(p)) out.skipped_parts.push_back(p);
  }
  return out;
}

CropSet whole_image_crop(const RenderedImage& image) {
  CropSet out;
  out.source_width = image.pixels.width;
  out.source_height = image.pixels.height;
  const PixelBox r{0, 0, image.pixels.width, image.pixels.height};
  out.crops.push_back({0, r, image.pixels});
  return out;
}

namespace {

/// Homography taking the unit square corners (0,0),(1,0),(1,1),(0,1) to q.
Mat3 square_to_quad(const std::array<Vec2, 4>& q) {
  const std::array<Vec2, 4> s{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double u = s[i].x(), v = s[i].y(), x = q[i].x(), y = q[i].y();
    a.row(2 * i) << u, v, 1, 0, 0, 0, -u * x, -v * x;
    a.row(2 * i + 1) << 0, 0, 0, u, v, 1, -u * y, -v * y;
    b(2 * i) = x;
    b(2 * i + 1) = y;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Mat3 m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

template <typename Map>
AugmentedPatch resample(const Image& source, const PixelBox& rect, int part, int crop, int size, Map&& map_uv) {
  AugmentedPatch p;
  p.part = part;
  p.crop = crop;
  p.rect = rect;
  p.image = Image(size, size);
  p.source.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 at = map_uv((x + 0.5) / size, (y + 0.5) / size);
      p.source[static_cast<std::size_t>(y) * size + x] = at;
      p.image.set_pixel(x, y, sample_bilinear(source, rect, at));
    }
  }
  return p;
}

struct Taps {
  int x0, y0, x1, y1;
  double fx, fy;
};

Taps taps(const PixelBox& rect, const Vec2& at) {
  const double cx = std::clamp(at.x() - 0.5, static_cast<double>(rect.x0), static_cast<double>(rect.x1 - 1));
  const double cy = std::clamp(at.y() - 0.5, static_cast<double>(rect.y0), static_cast<double>(rect.y1 - 1));
  Taps t;
  t.x0 = static_cast<int>(std::floor(cx));
  t.y0 = static_cast<int>(std::floor(cy));
  t.x1 = std::min(t.x0 + 1, rect.x1 - 1);
  t.y1 = std::min(t.y0 + 1, rect.y1 - 1);
  t.fx = cx - t.x0;
  t.fy = cy - t.y0;
  return t;
}

}  // namespace

Rgb sample_bilinear(const Image& image, const PixelBox& rect, const Vec2& at) {
  const Taps t = taps(rect, at);
  return (1 - t.fx) * (1 - t.fy) * image.pixel(t.x0, t.y0) + t.fx * (1 - t.fy) * image.pixel(t.x1, t.y0) +
         (1 - t.fx) * t.fy * image.pixel(t.x0, t.y1) + t.fx * t.fy * image.pixel(t.x1, t.y1);
}

std::vector<AugmentedPatch> augment(const CropSet& crops, const LossConfig& config, int output_size, Rng& rng) {
  if (output_size < 1) throw InputError("augmentation output size must be positive");
  // Patches sample the full source image within the crop rectangle so that
  // their source coordinates are image coordinates.
  Image source(crops.source_width, crops.source_height);
  for (const auto& c : crops.crops) {
    for (int y = 0; y < c.rect.height(); ++y) {
      for (int x = 0; x < c.rect.width(); ++x) source.set_pixel(c.rect.x0 + x, c.rect.y0 + y, c.patch.pixel(x, y));
    }
  }
  std::vector<AugmentedPatch> out;
  for (std::size_t ci = 0; ci < crops.crops.size(); ++ci) {
    const auto& c = crops.crops[ci];
    const double w = c.rect.width(), h = c.rect.height();
    const Vec2 origin(c.rect.x0, c.rect.y0);
    for (int g = 0; g < config.n_global_augs; ++g) {
      const double jx = config.perspective_strength * w / 2.0;
      const double jy = config.perspective_strength * h / 2.0;
      std::array<Vec2, 4> q{Vec2(rng.uniform() * jx, rng.uniform() * jy),
                            Vec2(w - rng.uniform() * jx, rng.uniform() * jy),
                            Vec2(w - rng.uniform() * jx, h - rng.uniform() * jy),
                            Vec2(rng.uniform() * jx, h - rng.uniform() * jy)};
      const Mat3 hm = square_to_quad(q);
      out.push_back(resample(source, c.rect, c.part, static_cast<int>(ci), output_size, [&](double u, double v) {
        const Vec3 p = hm * Vec3(u, v, 1.0);
        return Vec2(origin + p.head<2>() / p.z());
      }));
    }
    for (int l = 0; l < config.n_local_augs; ++l) {
      const double fw = rng.uniform(config.min_local_fraction, 1.0) * w;
      const double fh = rng.uniform(config.min_local_fraction, 1.0) * h;
      const double ox = rng.uniform() * (w - fw);
      const double oy = rng.uniform() * (h - fh);
      out.push_back(resample(source, c.rect, c.part, static_cast<int>(ci), output_size, [&](double u, double v) {
        return Vec2(origin + Vec2(ox + u * fw, oy + v * fh));
      }));
    }
  }
  return out;
}

void accumulate_patch_gradient(const AugmentedPatch& patch, const Image& d_patch, Image& d_source) {
  if (d_patch.width != patch.image.width || d_patch.height != patch.image.height) {
    throw Error("patch gradient shape mismatch");
  }
  for (int y = 0; y < d_patch.height; ++y) {
    for (int x = 0; x < d_patch.width; ++x) {
      const Rgb g = d_patch.pixel(x, y);
      const Taps t = taps(patch.rect, patch.source[static_cast<std::size_t>(y) * d_patch.width + x]);
      const std::array<std::pair<int, int>, 4> at{{{t.x0, t.y0}, {t.x1, t.y0}, {t.x0, t.y1}, {t.x1, t.y1}}};
      const std::array<double, 4> wts{(1 - t.fx) * (1 - t.fy), t.fx * (1 - t.fy), (1 - t.fx) * t.fy, t.fx * t.fy};
      for (int k = 0; k < 4; ++k) {
        for (int ch = 0; ch < 3; ++ch) d_source.at(at[k].first, at[k].second, ch) += wts[k] * g[ch];
      }
    }
  }
}

EmbeddingLossValue clip_style_loss(const EmbeddingBackend& backend, const std::vector<AugmentedPatch>& patches,
                                   const std::vector<std::string>& style_phrases) {
  EmbeddingLossValue out;
  if (patches.empty()) return out;
  std::map<int, Eigen::VectorXd> text;
  for (const auto& p : patches) {
    if (p.part < 0 || p.part >= static_cast<int>(style_phrases.size())) {
      throw Error(fmt::format("patch part {} has no style phrase", p.part));
    }
    if (!text.count(p.part)) {
      Eigen::VectorXd t = backend.embed_text(style_phrases[p.part]);
      if (!(t.norm() > 0.0)) throw Error("zero-norm text embedding for '" + style_phrases[p.part] + "'");
      text.emplace(p.part, t.normalized());
    }
  }
  const double inv_n = 1.0 / static_cast<double>(patches.size());
  for (const auto& p : patches) {
    const Eigen::VectorXd e = backend.embed_image(p.image);
    const double n = e.norm();
    if (!(n > 0.0)) throw Error("zero-norm image embedding");
    const Eigen::VectorXd& t = text.at(p.part);
    if (t.size() != e.size()) throw Error("image and text embeddings differ in dimension");
    const double cos = e.dot(t) / n;
    out.value -= cos * inv_n;
    const Eigen::VectorXd d_e = -inv_n * (t - cos * e / n) / n;
    out.d_patches.push_back(backend.embed_image_backward(p.image, d_e));
  }
  return out;
}

}  // namespace partstyle
