#include "partstyle/embedding.hpp"

#include "partstyle/remote_backend.hpp"

#include <fmt/format.h>

namespace partstyle {

ToyEmbedder::ToyEmbedder(ToyEmbedderOptions options, ColorVocabulary vocabulary)
    : options_(options), vocabulary_(std::move(vocabulary)) {
  if (options_.input_size < 1) throw InputError("embedder input size must be positive");
}

Eigen::VectorXd ToyEmbedder::embed_image(const Image& patch) const {
  if (patch.empty()) throw InputError("cannot embed an empty patch");
  Rgb sum = Rgb::Zero();
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) sum += patch.pixel(x, y);
  }
  const Rgb mean = sum / (static_cast<double>(patch.width) * patch.height);
  Eigen::VectorXd e(4);
  e.head<3>() = options_.gain * chroma(mean);
  e(3) = 1.0;
  return e;
}

Image ToyEmbedder::embed_image_backward(const Image& patch, const Eigen::VectorXd& d_embedding) const {
  if (d_embedding.size() != 4) throw Error("toy embedding gradient must have 4 entries");
  const double scale = options_.gain / (static_cast<double>(patch.width) * patch.height);
  const Rgb dp = scale * chroma(d_embedding.head<3>());
  Image grad(patch.width, patch.height, dp);
  return grad;
}

Eigen::VectorXd ToyEmbedder::embed_text(const std::string& text) const {
  const auto colors = vocabulary_.lookup_all(text);
  if (colors.empty()) {
    // Reuse lookup() for its error message.
    (void)vocabulary_.lookup(text);
  }
  Rgb dir = Rgb::Zero();
  for (const auto& c : colors) {
    const Rgb ch = chroma(c);
    if (ch.norm() > 0.0) dir += ch.normalized();
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(4);
  if (dir.norm() > 0.0) e.head<3>() = dir.normalized();
  return e;
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const std::string& key, const EmbeddingSettings& settings) {
  if (key == "toy") return std::make_unique<ToyEmbedder>(ToyEmbedderOptions{settings.input_size, settings.toy_gain});
  if (key == "pretrained") {
    return std::make_unique<RemoteEmbedder>(
        RemoteOptions{settings.server_url, settings.weights_path, settings.model_config_path});
  }
  throw InputError("unknown embedding backend '" + key + "' (expected toy or pretrained)");
}

}  // namespace partstyle
