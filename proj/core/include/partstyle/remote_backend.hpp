#pragma once

#include "partstyle/embedding.hpp"
#include "partstyle/grounding.hpp"

#include <memory>
#include <mutex>
#include <string>

namespace partstyle {

/// Connection settings for the pretrained-model server.
///
/// The pretrained grounding and embedding models run out of process behind a
/// small JSON-over-HTTP protocol (see README, "Model server protocol").
/// An empty server_url falls back to $PARTSTYLE_MODEL_SERVER.
struct RemoteOptions {
  std::string server_url;
  std::string weights_path;
  std::string model_config_path;
  int timeout_seconds = 300;
};

namespace detail {
class JsonClient;
}

/// Grounding adapter for a pretrained model served over HTTP. Calls are
/// serialized; the server owns the model in evaluation mode.
class RemoteGroundingBackend final : public GroundingBackend {
 public:
  explicit RemoteGroundingBackend(RemoteOptions options);
  ~RemoteGroundingBackend() override;

  [[nodiscard]] std::string name() const override { return "pretrained"; }
  [[nodiscard]] int language_dim() const override { return language_dim_; }
  [[nodiscard]] FusedFeatures encode(const RenderedImage& image,
                                     const std::vector<std::string>& phrases) const override;
  [[nodiscard]] bool differentiable() const override { return true; }
  [[nodiscard]] Image encode_backward(const RenderedImage& image, const std::vector<std::string>& phrases,
                                      const Eigen::MatrixXd& d_visual,
                                      const Eigen::MatrixXd& d_textual) const override;
  [[nodiscard]] std::vector<DetectedBox> detect_boxes(const RenderedImage& image,
                                                      const std::vector<std::string>& phrases) const override;

 private:
  std::unique_ptr<detail::JsonClient> client_;
  int language_dim_ = 0;
};

/// Embedding adapter for a pretrained image-text model served over HTTP.
class RemoteEmbedder final : public EmbeddingBackend {
 public:
  explicit RemoteEmbedder(RemoteOptions options);
  ~RemoteEmbedder() override;

  [[nodiscard]] std::string name() const override { return "pretrained"; }
  [[nodiscard]] int input_size() const override { return input_size_; }
  [[nodiscard]] Eigen::VectorXd embed_image(const Image& patch) const override;
  [[nodiscard]] Image embed_image_backward(const Image& patch, const Eigen::VectorXd& d_embedding) const override;
  [[nodiscard]] Eigen::VectorXd embed_text(const std::string& text) const override;

 private:
  std::unique_ptr<detail::JsonClient> client_;
  int input_size_ = 0;
};

}  // namespace partstyle
