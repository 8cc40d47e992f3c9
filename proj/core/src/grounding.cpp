#include "partstyle/grounding.hpp"

#include "partstyle/oracle_backend.hpp"
#include "partstyle/remote_backend.hpp"
#include "partstyle/toy_backend.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

namespace partstyle {

AlignmentMap alignment_map(const FusedFeatures& features) {
  if (features.visual.cols() != features.textual.cols()) {
    throw Error(fmt::format("visual feature dim {} != textual feature dim {}", features.visual.cols(),
                            features.textual.cols()));
  }
  if (features.visual.rows() != static_cast<Eigen::Index>(features.grid_w) * features.grid_h) {
    throw Error("visual feature rows do not match the grid size");
  }
  AlignmentMap map;
  map.grid_w = features.grid_w;
  map.grid_h = features.grid_h;
  const Eigen::Index cells = features.visual.rows();
  const Eigen::Index n = features.textual.rows();
  const Eigen::Index d = features.visual.cols();
  map.scores.resize(cells, n);
  // Plain accumulation in index order keeps results bit-reproducible.
  for (Eigen::Index c = 0; c < cells; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) s += features.visual(c, k) * features.textual(i, k);
      map.scores(c, i) = s;
    }
  }
  return map;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::optional<int> PromptOffset::part_for(const std::string& phrase) const {
  const std::string p = lower(phrase);
  std::optional<int> best;
  std::size_t best_len = 0;
  for (const auto& [key, part] : phrase_to_part) {
    const bool exact = p == key;
    const bool suffix = p.size() > key.size() && p.compare(p.size() - key.size(), key.size(), key) == 0 &&
                        p[p.size() - key.size() - 1] == ' ';
    if ((exact || suffix) && key.size() > best_len) {
      best = part;
      best_len = key.size();
    }
  }
  return best;
}

PromptOffset zero_prompt_offset(const PartitionedMesh& mesh, int language_dim) {
  PromptOffset off;
  for (int p = 0; p < mesh.part_count(); ++p) {
    for (const auto& phrase : mesh.phrases_for(p)) off.phrase_to_part.emplace(lower(phrase), p);
  }
  off.offsets = Eigen::MatrixXd::Zero(mesh.part_count(), language_dim);
  return off;
}

void GroundingBackend::apply_prompt_offset(const std::vector<std::string>& phrases, Eigen::MatrixXd& textual) const {
  if (!offset_) return;
  if (offset_->offsets.cols() != textual.cols()) {
    throw Error(fmt::format("prompt offset dim {} != language dim {}", offset_->offsets.cols(), textual.cols()));
  }
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (auto part = offset_->part_for(phrases[i])) {
      textual.row(static_cast<Eigen::Index>(i)) += offset_->offsets.row(*part);
    }
  }
}

Image GroundingBackend::encode_backward(const RenderedImage&, const std::vector<std::string>&,
                                        const Eigen::MatrixXd&, const Eigen::MatrixXd&) const {
  throw Error("grounding backend '" + name() + "' is not differentiable with respect to pixels");
}

std::vector<DetectedBox> GroundingBackend::detect_boxes(const RenderedImage& image,
                                                        const std::vector<std::string>& phrases) const {
  const FusedFeatures features = encode(image, phrases);
  return boxes_from_scores(alignment_map(features), features.grid_stride, image.camera.image_size);
}

SpatialLocationSet locations_from_map(const AlignmentMap& map, int grid_stride, const Camera& camera,
                                      double threshold) {
  SpatialLocationSet set;
  set.source_camera = camera;
  set.grid_w = map.grid_w;
  set.grid_h = map.grid_h;
  set.grid_stride = grid_stride;
  if (map.num_phrases() == 0) return set;
  for (int y = 0; y < map.grid_h; ++y) {
    for (int x = 0; x < map.grid_w; ++x) {
      int best = 0;
      for (int i = 1; i < map.num_phrases(); ++i) {
        if (map.at(x, y, i) > map.at(x, y, best)) best = i;
      }
      if (sigmoid(map.at(x, y, best)) > threshold) set.entries.push_back({x, y, best});
    }
  }
  return set;
}

SpatialLocationSet localize(const GroundingBackend& backend, const RenderedImage& image,
                            const std::vector<std::string>& part_phrases, double threshold) {
  if (part_phrases.empty()) throw InputError("localize needs at least one phrase");
  const FusedFeatures features = backend.encode(image, part_phrases);
  return locations_from_map(alignment_map(features), features.grid_stride, image.camera, threshold);
}

std::vector<DetectedBox> boxes_from_scores(const AlignmentMap& map, int grid_stride, int image_size,
                                           double threshold) {
  std::vector<DetectedBox> out;
  for (int i = 0; i < map.num_phrases(); ++i) {
    int x0 = map.grid_w, y0 = map.grid_h, x1 = -1, y1 = -1;
    for (int y = 0; y < map.grid_h; ++y) {
      for (int x = 0; x < map.grid_w; ++x) {
        if (sigmoid(map.at(x, y, i)) <= threshold) continue;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    if (x1 < 0) continue;
    double sum = 0.0;
    int count = 0;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        sum += sigmoid(map.at(x, y, i));
        ++count;
      }
    }
    DetectedBox box;
    box.phrase = i;
    box.box = PixelBox{x0 * grid_stride, y0 * grid_stride, std::min(image_size, (x1 + 1) * grid_stride),
                       std::min(image_size, (y1 + 1) * grid_stride)};
    box.confidence = sum / count;
    out.push_back(box);
  }
  return out;
}

int select_anchor_view(const GroundingBackend& backend, const PartitionedMesh& mesh,
                       const std::vector<std::string>& part_phrases, std::span<const Camera> candidates,
                       const RenderOptions& options) {
  if (candidates.empty()) throw InputError("anchor selection needs at least one candidate camera");
  if (part_phrases.empty()) throw InputError("anchor selection needs at least one phrase");
  int best = 0;
  double best_score = -1.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const RenderedImage img = render(mesh, candidates[c], options);
    std::vector<double> per_phrase(part_phrases.size(), 0.0);
    for (const auto& box : backend.detect_boxes(img, part_phrases)) {
      auto& slot = per_phrase.at(static_cast<std::size_t>(box.phrase));
      slot = std::max(slot, box.confidence);
    }
    double score = 0.0;
    for (double s : per_phrase) score += s;
    score /= static_cast<double>(per_phrase.size());
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::unique_ptr<GroundingBackend> make_grounding_backend(const std::string& key, const PartitionedMesh& mesh,
                                                         const BackendSettings& settings) {
  if (key == "toy") return std::make_unique<ToyGroundingBackend>(ToyOptions{settings.stride, settings.toy_gain});
  if (key == "oracle") {
    return std::make_unique<OracleGroundingBackend>(
        mesh, OracleOptions{settings.stride, settings.oracle_min_side, settings.oracle_gain});
  }
  if (key == "pretrained") {
    return std::make_unique<RemoteGroundingBackend>(
        RemoteOptions{settings.server_url, settings.weights_path, settings.model_config_path});
  }
  throw InputError("unknown grounding backend '" + key + "' (expected toy, oracle or pretrained)");
}

}  // namespace partstyle
