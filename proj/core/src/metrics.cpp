#include "partstyle/metrics.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>

namespace partstyle {

namespace {

void check_same(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InputError(fmt::format("image sizes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height));
  }
  if (a.empty()) throw InputError("metrics need non-empty images");
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window(int w, int h) {
  std::vector<double> g(static_cast<std::size_t>(w) * h);
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - (w - 1) / 2.0, dy = y - (h - 1) / 2.0;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      g[static_cast<std::size_t>(y) * w + x] = v;
      sum += v;
    }
  }
  for (double& v : g) v /= sum;
  return g;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) {
  check_same(a, b);
  const int ww = std::min(kWindow, a.width);
  const int wh = std::min(kWindow, a.height);
  const auto g = gaussian_window(ww, wh);
  double total = 0.0;
  long count = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y0 = 0; y0 + wh <= a.height; ++y0) {
      for (int x0 = 0; x0 + ww <= a.width; ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = 0; y < wh; ++y) {
          for (int x = 0; x < ww; ++x) {
            const double w = g[static_cast<std::size_t>(y) * ww + x];
            const double va = a.at(x0 + x, y0 + y, c), vb = b.at(x0 + x, y0 + y, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

ImageMetrics image_metrics(const Image& a, const Image& b, const PerceptualMetric* perceptual) {
  ImageMetrics m;
  m.mse = mse(a, b);
  m.psnr = m.mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / m.mse));
  m.ssim = ssim(a, b);
  if (perceptual && perceptual->distance) m.perceptual = perceptual->distance(a, b);
  return m;
}

}  // namespace partstyle
