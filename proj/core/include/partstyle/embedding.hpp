#pragma once

#include "partstyle/image.hpp"
#include "partstyle/toy_backend.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>

namespace partstyle {

/// Image and text encoders into one shared embedding space.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  [[nodiscard]] virtual std::string name() const = 0;
  /// Side length of the square patches embed_image() expects.
  [[nodiscard]] virtual int input_size() const = 0;
  [[nodiscard]] virtual Eigen::VectorXd embed_image(const Image& patch) const = 0;
  /// Pixel gradient given d(loss)/d(embedding).
  [[nodiscard]] virtual Image embed_image_backward(const Image& patch, const Eigen::VectorXd& d_embedding) const = 0;
  [[nodiscard]] virtual Eigen::VectorXd embed_text(const std::string& text) const = 0;
};

struct ToyEmbedderOptions {
  int input_size = 32;
  double gain = 4.0;
};

/// Color-word embedder.
///
/// Image: [gain · chroma(mean RGB), 1]. The constant last coordinate keeps
/// gray patches at nonzero norm and cosine 0 against any color.
/// Text: [unit mean of the unit chroma directions of every color word, 0].
class ToyEmbedder final : public EmbeddingBackend {
 public:
  explicit ToyEmbedder(ToyEmbedderOptions options = {}, ColorVocabulary vocabulary = {});

  [[nodiscard]] std::string name() const override { return "toy"; }
  [[nodiscard]] int input_size() const override { return options_.input_size; }
  [[nodiscard]] Eigen::VectorXd embed_image(const Image& patch) const override;
  [[nodiscard]] Image embed_image_backward(const Image& patch, const Eigen::VectorXd& d_embedding) const override;
  [[nodiscard]] Eigen::VectorXd embed_text(const std::string& text) const override;

 private:
  ToyEmbedderOptions options_;
  ColorVocabulary vocabulary_;
};

struct EmbeddingSettings {
  int input_size = 32;
  double toy_gain = 4.0;
  std::string server_url;
  std::string weights_path;
  std::string model_config_path;

  bool operator==(const EmbeddingSettings&) const = default;
};

/// key ∈ {toy, pretrained}.
std::unique_ptr<EmbeddingBackend> make_embedding_backend(const std::string& key, const EmbeddingSettings& settings);

}  // namespace partstyle
