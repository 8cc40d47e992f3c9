#include "partstyle/remote_backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>

namespace partstyle {

using json = nlohmann::json;

namespace detail {

class JsonClient {
 public:
  explicit JsonClient(const RemoteOptions& options) : url_(options.server_url) {
    if (url_.empty()) {
      if (const char* env = std::getenv("PARTSTYLE_MODEL_SERVER")) url_ = env;
    }
    if (url_.empty()) {
      throw InputError("pretrained backend needs a model server URL (server_url or $PARTSTYLE_MODEL_SERVER)");
    }
    client_ = std::make_unique<httplib::Client>(url_);
    client_->set_read_timeout(options.timeout_seconds, 0);
    client_->set_write_timeout(options.timeout_seconds, 0);
  }

  json post(const std::string& path, const json& body) {
    std::lock_guard lock(mutex_);
    auto res = client_->Post(path, body.dump(), "application/json");
    if (!res) {
      throw Error("model server " + url_ + path + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error("model server " + url_ + path + " returned " + std::to_string(res->status) + ": " + res->body);
    }
    return json::parse(res->body);
  }

 private:
  std::string url_;
  std::unique_ptr<httplib::Client> client_;
  std::mutex mutex_;
};

}  // namespace detail

namespace {

json image_json(const Image& img) {
  return {{"width", img.width}, {"height", img.height}, {"data", img.data}};
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto flat = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw Error("model server returned a malformed matrix");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Image image_from(const json& j, int width, int height) {
  Image img(width, height);
  img.data = j.get<std::vector<double>>();
  if (img.data.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error("model server returned a malformed pixel gradient");
  }
  return img;
}

}  // namespace

RemoteGroundingBackend::RemoteGroundingBackend(RemoteOptions options)
    : client_(std::make_unique<detail::JsonClient>(options)) {
  const json res = client_->post("/v1/grounding/load",
                                 {{"weights", options.weights_path}, {"config", options.model_config_path}});
  language_dim_ = res.at("language_dim").get<int>();
}

RemoteGroundingBackend::~RemoteGroundingBackend() = default;

FusedFeatures RemoteGroundingBackend::encode(const RenderedImage& image,
                                             const std::vector<std::string>& phrases) const {
  if (phrases.empty()) throw InputError("encode needs at least one phrase");
  const json res = client_->post("/v1/grounding/encode", {{"image", image_json(image.pixels)}, {"phrases", phrases}});
  FusedFeatures f;
  f.grid_w = res.at("grid_w").get<int>();
  f.grid_h = res.at("grid_h").get<int>();
  f.grid_stride = res.at("grid_stride").get<int>();
  const int dim = res.at("dim").get<int>();
  f.visual = matrix_from(res.at("visual"), static_cast<Eigen::Index>(f.grid_w) * f.grid_h, dim);
  f.textual = matrix_from(res.at("textual"), static_cast<Eigen::Index>(phrases.size()), dim);
  apply_prompt_offset(phrases, f.textual);
  return f;
}

Image RemoteGroundingBackend::encode_backward(const RenderedImage& image, const std::vector<std::string>& phrases,
                                              const Eigen::MatrixXd& d_visual,
                                              const Eigen::MatrixXd& d_textual) const {
  const json res = client_->post("/v1/grounding/encode_vjp", {{"image", image_json(image.pixels)},
                                                              {"phrases", phrases},
                                                              {"d_visual", flatten(d_visual)},
                                                              {"d_textual", flatten(d_textual)}});
  return image_from(res.at("d_pixels"), image.pixels.width, image.pixels.height);
}

std::vector<DetectedBox> RemoteGroundingBackend::detect_boxes(const RenderedImage& image,
                                                              const std::vector<std::string>& phrases) const {
  const json res = client_->post("/v1/grounding/detect", {{"image", image_json(image.pixels)}, {"phrases", phrases}});
  std::vector<DetectedBox> out;
  for (const auto& b : res.at("boxes")) {
    const auto xyxy = b.at("box").get<std::vector<int>>();
    if (xyxy.size() != 4) throw Error("model server returned a malformed box");
    out.push_back({PixelBox{xyxy[0], xyxy[1], xyxy[2], xyxy[3]}, b.at("phrase").get<int>(),
                   b.at("confidence").get<double>()});
  }
  return out;
}

RemoteEmbedder::RemoteEmbedder(RemoteOptions options) : client_(std::make_unique<detail::JsonClient>(options)) {
  const json res = client_->post("/v1/embedding/load",
                                 {{"weights", options.weights_path}, {"config", options.model_config_path}});
  input_size_ = res.at("input_size").get<int>();
}

RemoteEmbedder::~RemoteEmbedder() = default;

Eigen::VectorXd RemoteEmbedder::embed_image(const Image& patch) const {
  const auto v = client_->post("/v1/embedding/image", {{"image", image_json(patch)}}).at("embedding").get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Image RemoteEmbedder::embed_image_backward(const Image& patch, const Eigen::VectorXd& d_embedding) const {
  const std::vector<double> d(d_embedding.data(), d_embedding.data() + d_embedding.size());
  const json res = client_->post("/v1/embedding/image_vjp", {{"image", image_json(patch)}, {"d_embedding", d}});
  return image_from(res.at("d_pixels"), patch.width, patch.height);
}

Eigen::VectorXd RemoteEmbedder::embed_text(const std::string& text) const {
  const auto v = client_->post("/v1/embedding/text", {{"text", text}}).at("embedding").get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace partstyle
