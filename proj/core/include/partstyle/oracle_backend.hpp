#pragma once

#include "partstyle/grounding.hpp"

namespace partstyle {

struct OracleOptions {
  int stride = 8;
  int min_side = 1;
  double gain = 8.0;
};

/// Geometry-derived grounding: re-rasterizes the part masks of the mesh it
/// was built for from the image's camera.
///
/// Visual cell k = 2·(fraction of the cell covered by part k) − 1; textual
/// row = gain · one-hot(part named by the phrase). A cell's logit is positive
/// exactly when the phrase's part covers more than half of it, so localize()
/// returns majority-part cells. Pixel values are ignored.
class OracleGroundingBackend final : public GroundingBackend {
 public:
  OracleGroundingBackend(PartitionedMesh mesh, OracleOptions options = {});

  [[nodiscard]] std::string name() const override { return "oracle"; }
  [[nodiscard]] int language_dim() const override { return mesh_.part_count(); }
  [[nodiscard]] FusedFeatures encode(const RenderedImage& image,
                                     const std::vector<std::string>& phrases) const override;
  /// project_part_bboxes() at the configured min_side, confidence 1.
  [[nodiscard]] std::vector<DetectedBox> detect_boxes(const RenderedImage& image,
                                                      const std::vector<std::string>& phrases) const override;

  /// Part named by a phrase (trailing-token match against names/synonyms).
  [[nodiscard]] int resolve(const std::string& phrase) const;
  [[nodiscard]] const OracleOptions& options() const { return options_; }

 private:
  PartitionedMesh mesh_;
  OracleOptions options_;
};

}  // namespace partstyle
