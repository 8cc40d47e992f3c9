#pragma once

#include "partstyle/image.hpp"

#include <functional>
#include <optional>
#include <string>

namespace partstyle {

/// PSNR reported for identical images instead of +inf.
inline constexpr double kPsnrCap = 100.0;

/// Learned perceptual distance (LPIPS-style). Not built in: callers register
/// one when they have the weights.
struct PerceptualMetric {
  std::string name;
  std::function<double(const Image&, const Image&)> distance;
};

struct ImageMetrics {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> perceptual;  // absent unless a PerceptualMetric is given
};

double mse(const Image& a, const Image& b);
/// 10·log10(1 / mse) for values in [0, 1], capped at kPsnrCap.
double psnr(const Image& a, const Image& b);
/// Mean SSIM over valid 11×11 windows (Gaussian σ = 1.5, C1 = 0.01²,
/// C2 = 0.03²), averaged over the three channels. Images smaller than the
/// window use one window covering the whole image.
double ssim(const Image& a, const Image& b);

/// Throws InputError when the dimensions differ.
ImageMetrics image_metrics(const Image& a, const Image& b, const PerceptualMetric* perceptual = nullptr);

}  // namespace partstyle
