#include "partstyle/toy_backend.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace partstyle {

ColorVocabulary::ColorVocabulary()
    : words_{{"red", Rgb(1.0, 0.0, 0.0)},    {"green", Rgb(0.0, 1.0, 0.0)},  {"blue", Rgb(0.0, 0.0, 1.0)},
             {"yellow", Rgb(1.0, 1.0, 0.0)}, {"cyan", Rgb(0.0, 1.0, 1.0)},   {"magenta", Rgb(1.0, 0.0, 1.0)},
             {"orange", Rgb(1.0, 0.5, 0.0)}, {"purple", Rgb(0.5, 0.0, 1.0)}, {"pink", Rgb(1.0, 0.4, 0.7)},
             {"brown", Rgb(0.6, 0.3, 0.1)},  {"gold", Rgb(1.0, 0.84, 0.0)},  {"teal", Rgb(0.0, 0.5, 0.5)}} {}

namespace {

std::vector<std::string> words_of(const std::string& phrase) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : phrase) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

bool ColorVocabulary::contains_word(const std::string& phrase) const {
  for (const auto& w : words_of(phrase)) {
    if (words_.count(w)) return true;
  }
  return false;
}

std::vector<Rgb> ColorVocabulary::lookup_all(const std::string& phrase) const {
  std::vector<Rgb> out;
  for (const auto& w : words_of(phrase)) {
    if (auto it = words_.find(w); it != words_.end()) out.push_back(it->second);
  }
  return out;
}

Rgb ColorVocabulary::lookup(const std::string& phrase) const {
  for (const auto& w : words_of(phrase)) {
    if (auto it = words_.find(w); it != words_.end()) return it->second;
  }
  throw InputError(fmt::format("phrase '{}' has no known color word; supported: {}", phrase, supported_words()));
}

std::string ColorVocabulary::supported_words() const {
  std::vector<std::string> keys;
  for (const auto& [k, v] : words_) keys.push_back(k);
  return fmt::format("{}", fmt::join(keys, ", "));
}

ToyGroundingBackend::ToyGroundingBackend(ToyOptions options, ColorVocabulary vocabulary)
    : options_(options), vocabulary_(std::move(vocabulary)) {
  if (options_.stride < 1) throw InputError("toy backend stride must be >= 1");
}

namespace {

void check_grid(const Image& img, int stride) {
  if (img.width % stride != 0 || img.height % stride != 0) {
    throw InputError(fmt::format("image {}x{} is not divisible by grid stride {}", img.width, img.height, stride));
  }
}

}  // namespace

FusedFeatures ToyGroundingBackend::encode(const RenderedImage& image, const std::vector<std::string>& phrases) const {
  if (phrases.empty()) throw InputError("encode needs at least one phrase");
  const Image& img = image.pixels;
  const int s = options_.stride;
  check_grid(img, s);
  FusedFeatures f;
  f.grid_w = img.width / s;
  f.grid_h = img.height / s;
  f.grid_stride = s;
  f.visual.resize(static_cast<Eigen::Index>(f.grid_w) * f.grid_h, 3);
  const double inv_area = 1.0 / (static_cast<double>(s) * s);
  for (int gy = 0; gy < f.grid_h; ++gy) {
    for (int gx = 0; gx < f.grid_w; ++gx) {
      Rgb sum = Rgb::Zero();
      for (int y = gy * s; y < (gy + 1) * s; ++y) {
        for (int x = gx * s; x < (gx + 1) * s; ++x) sum += img.pixel(x, y);
      }
      f.visual.row(f.cell(gx, gy)) = (options_.gain * chroma(sum * inv_area)).transpose();
    }
  }
  f.textual.resize(static_cast<Eigen::Index>(phrases.size()), 3);
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    f.textual.row(static_cast<Eigen::Index>(i)) = vocabulary_.lookup(phrases[i]).normalized().transpose();
  }
  apply_prompt_offset(phrases, f.textual);
  return f;
}

Image ToyGroundingBackend::encode_backward(const RenderedImage& image, const std::vector<std::string>&,
                                           const Eigen::MatrixXd& d_visual, const Eigen::MatrixXd&) const {
  const Image& img = image.pixels;
  const int s = options_.stride;
  check_grid(img, s);
  const int gw = img.width / s;
  const int gh = img.height / s;
  if (d_visual.rows() != static_cast<Eigen::Index>(gw) * gh || d_visual.cols() != 3) {
    throw Error("visual gradient shape does not match the toy grid");
  }
  Image grad(img.width, img.height);
  const double scale = options_.gain / (static_cast<double>(s) * s);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Rgb dv = d_visual.row(gy * gw + gx).transpose();
      // chroma is linear and self-adjoint: Jᵀ dv = dv - mean(dv).
      const Rgb dp = scale * chroma(dv);
      for (int y = gy * s; y < (gy + 1) * s; ++y) {
        for (int x = gx * s; x < (gx + 1) * s; ++x) grad.set_pixel(x, y, dp);
      }
    }
  }
  return grad;
}

}  // namespace partstyle
