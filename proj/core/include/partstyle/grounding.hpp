#pragma once

#include "partstyle/render.hpp"

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace partstyle {

/// Fused vision-language features on a w×h grid.
///
/// visual holds one d-dimensional row per grid cell (row index y·w + x);
/// textual holds one row per phrase. Cell (x, y) covers pixels
/// [x·stride, (x+1)·stride) × [y·stride, (y+1)·stride).
struct FusedFeatures {
  int grid_w = 0;
  int grid_h = 0;
  int grid_stride = 0;
  Eigen::MatrixXd visual;
  Eigen::MatrixXd textual;

  [[nodiscard]] int dim() const { return static_cast<int>(visual.cols()); }
  [[nodiscard]] int num_phrases() const { return static_cast<int>(textual.rows()); }
  [[nodiscard]] int cell(int x, int y) const { return y * grid_w + x; }
};

/// Region-word alignment logits, one row per grid cell, one column per phrase.
struct AlignmentMap {
  int grid_w = 0;
  int grid_h = 0;
  Eigen::MatrixXd scores;

  [[nodiscard]] int num_phrases() const { return static_cast<int>(scores.cols()); }
  [[nodiscard]] double at(int x, int y, int phrase) const { return scores(y * grid_w + x, phrase); }
};

/// scores[cell, i] = visual[cell] · textual[i].
AlignmentMap alignment_map(const FusedFeatures& features);

struct SpatialLocation {
  int x = 0;
  int y = 0;
  int phrase = 0;
  bool operator==(const SpatialLocation&) const = default;
};

/// Grid cells whose post-sigmoid best-phrase score exceeded the threshold on
/// the content render, in row-major cell order.
struct SpatialLocationSet {
  std::vector<SpatialLocation> entries;
  Camera source_camera;
  int grid_w = 0;
  int grid_h = 0;
  int grid_stride = 0;

  [[nodiscard]] bool empty() const { return entries.empty(); }
  bool operator==(const SpatialLocationSet&) const = default;
};

struct DetectedBox {
  PixelBox box;
  int phrase = 0;
  double confidence = 0.0;
};

/// Learnable language-side offsets, one vector per part, shared by every
/// phrase that names the part. Added to the phrase's language feature at
/// encode time; all-zero offsets leave encode() unchanged.
struct PromptOffset {
  std::map<std::string, int> phrase_to_part;
  Eigen::MatrixXd offsets;  // parts × language dim

  [[nodiscard]] std::optional<int> part_for(const std::string& phrase) const;
};

/// Builds a zero offset covering every name and synonym of the mesh parts.
PromptOffset zero_prompt_offset(const PartitionedMesh& mesh, int language_dim);

/// Vision-language grounding model: image + phrases → fused features, plus a
/// part detector.
///
/// encode() must be deterministic given its inputs and the current prompt
/// offset. Backends whose differentiable() is true implement
/// encode_backward(), mapping gradients on the fused features back to image
/// pixels.
class GroundingBackend {
 public:
  virtual ~GroundingBackend() = default;

  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual int language_dim() const = 0;
  [[nodiscard]] virtual FusedFeatures encode(const RenderedImage& image,
                                             const std::vector<std::string>& phrases) const = 0;

  [[nodiscard]] virtual bool differentiable() const { return false; }
  [[nodiscard]] virtual Image encode_backward(const RenderedImage& image, const std::vector<std::string>& phrases,
                                              const Eigen::MatrixXd& d_visual,
                                              const Eigen::MatrixXd& d_textual) const;

  /// Default: one box per phrase around its thresholded score cells,
  /// confidence = mean post-sigmoid score over the cells inside the box.
  [[nodiscard]] virtual std::vector<DetectedBox> detect_boxes(const RenderedImage& image,
                                                              const std::vector<std::string>& phrases) const;

  void set_prompt_offset(std::optional<PromptOffset> offset) { offset_ = std::move(offset); }
  [[nodiscard]] const PromptOffset* prompt_offset() const { return offset_ ? &*offset_ : nullptr; }

 protected:
  /// Adds the configured offset rows to the textual features in place.
  void apply_prompt_offset(const std::vector<std::string>& phrases, Eigen::MatrixXd& textual) const;

 private:
  std::optional<PromptOffset> offset_;
};

inline constexpr double kDefaultThreshold = 0.5;

/// Cells whose best-phrase sigmoid score exceeds `threshold`, tagged with the
/// argmax phrase.
SpatialLocationSet localize(const GroundingBackend& backend, const RenderedImage& image,
                            const std::vector<std::string>& part_phrases, double threshold = kDefaultThreshold);

/// Same, from an already computed map.
SpatialLocationSet locations_from_map(const AlignmentMap& map, int grid_stride, const Camera& camera,
                                      double threshold = kDefaultThreshold);

/// Box per phrase around cells with sigmoid score > threshold.
std::vector<DetectedBox> boxes_from_scores(const AlignmentMap& map, int grid_stride, int image_size,
                                           double threshold = kDefaultThreshold);

/// Renders the content mesh from every candidate and returns the index of the
/// camera with the highest mean per-phrase confidence (best box per phrase,
/// 0 when a phrase has no box). Ties keep the lowest index.
int select_anchor_view(const GroundingBackend& backend, const PartitionedMesh& mesh,
                       const std::vector<std::string>& part_phrases, std::span<const Camera> candidates,
                       const RenderOptions& options = {});

// --- factory ------------------------------------------------------------------

struct BackendSettings {
  int stride = 8;
  double toy_gain = 4.0;
  double oracle_gain = 8.0;
  int oracle_min_side = 1;
  /// Pretrained adapter: model server URL, weights and model config paths.
  std::string server_url;
  std::string weights_path;
  std::string model_config_path;

  bool operator==(const BackendSettings&) const = default;
};

/// key ∈ {toy, oracle, pretrained}. The oracle needs the mesh it answers for.
std::unique_ptr<GroundingBackend> make_grounding_backend(const std::string& key, const PartitionedMesh& mesh,
                                                         const BackendSettings& settings);

}  // namespace partstyle
