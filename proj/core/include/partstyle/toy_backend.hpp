#pragma once

#include "partstyle/grounding.hpp"

#include <map>
#include <string>
#include <vector>

namespace partstyle {

/// Word → RGB table used by the toy grounding and embedding backends.
///
/// The default table has twelve chromatic words (red, green, blue, yellow,
/// cyan, magenta, orange, purple, pink, brown, gold, teal). Achromatic words
/// are left out on purpose: they have no chroma and would never respond.
class ColorVocabulary {
 public:
  ColorVocabulary();
  explicit ColorVocabulary(std::map<std::string, Rgb> words) : words_(std::move(words)) {}

  /// Adds or replaces a word.
  void set(const std::string& word, const Rgb& rgb) { words_[word] = rgb; }

  /// First token of `phrase` found in the table; throws InputError listing
  /// the supported words otherwise.
  [[nodiscard]] Rgb lookup(const std::string& phrase) const;
  /// Every color word of `phrase`, in order (possibly empty).
  [[nodiscard]] std::vector<Rgb> lookup_all(const std::string& phrase) const;
  [[nodiscard]] bool contains_word(const std::string& phrase) const;
  [[nodiscard]] std::string supported_words() const;
  [[nodiscard]] const std::map<std::string, Rgb>& words() const { return words_; }

 private:
  std::map<std::string, Rgb> words_;
};

/// RGB with the per-pixel gray level removed; zero for white, gray, black.
inline Rgb chroma(const Rgb& rgb) { return rgb.array() - rgb.mean(); }

struct ToyOptions {
  int stride = 8;
  double gain = 4.0;
};

/// Deterministic, differentiable stand-in for a grounding model.
///
/// Visual cell = gain · chroma(mean RGB of the cell's pixel patch); textual
/// row = unit RGB direction of the phrase's color word. A cell therefore
/// responds (logit > 0) to a phrase when its color leans toward the word's
/// color, and white background scores exactly 0.
class ToyGroundingBackend final : public GroundingBackend {
 public:
  explicit ToyGroundingBackend(ToyOptions options = {}, ColorVocabulary vocabulary = {});

  [[nodiscard]] std::string name() const override { return "toy"; }
  [[nodiscard]] int language_dim() const override { return 3; }
  [[nodiscard]] FusedFeatures encode(const RenderedImage& image,
                                     const std::vector<std::string>& phrases) const override;
  [[nodiscard]] bool differentiable() const override { return true; }
  [[nodiscard]] Image encode_backward(const RenderedImage& image, const std::vector<std::string>& phrases,
                                      const Eigen::MatrixXd& d_visual,
                                      const Eigen::MatrixXd& d_textual) const override;

  [[nodiscard]] const ColorVocabulary& vocabulary() const { return vocabulary_; }
  [[nodiscard]] const ToyOptions& options() const { return options_; }

 private:
  ToyOptions options_;
  ColorVocabulary vocabulary_;
};

}  // namespace partstyle
