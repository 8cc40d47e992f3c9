#pragma once

#include "partstyle/embedding.hpp"
#include "partstyle/grounding.hpp"

#include <span>
#include <string>
#include <vector>

namespace partstyle {

class Rng;

enum class DistanceKind { l2, mse, bce, neg_mean };

std::string to_string(DistanceKind kind);
/// Accepts l2, mse, bce, neg-mean.
DistanceKind parse_distance_kind(const std::string& text);

struct LossConfig {
  double threshold = kDefaultThreshold;
  /// Fill value of the all-target vector the sigmoid scores are pulled to.
  double target_value = 1.0;
  DistanceKind distance = DistanceKind::l2;
  int crop_pad = 8;
  int n_global_augs = 4;
  int n_local_augs = 4;
  /// Smallest side of a local sub-crop relative to its crop.
  double min_local_fraction = 0.5;
  /// Corner jitter of the global perspective, relative to half the crop side.
  double perspective_strength = 0.5;

  bool operator==(const LossConfig&) const = default;
};

void validate(const LossConfig& config);

/// scores[x, y, part] for every entry, in entry order. Throws when an entry
/// lies outside the map grid, which means the styled and content renders do
/// not share a camera.
std::vector<double> gather_alignment(const AlignmentMap& map, const SpatialLocationSet& locations);

struct LossValue {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d input, same length as the input
};

/// distance(σ(gathered), target) with gradient with respect to the raw
/// scores. Throws Error("no localized regions") on empty input.
///   l2:       ‖σ − T‖₂
///   mse:      mean (σ − T)²
///   bce:      mean binary cross-entropy against T
///   neg-mean: T − mean σ
LossValue part_style_loss(std::span<const double> gathered, const LossConfig& config);

/// Map-shaped gradient for scores gathered at `locations`.
Eigen::MatrixXd scatter_alignment_gradient(const AlignmentMap& map, const SpatialLocationSet& locations,
                                           std::span<const double> d_gathered);

struct Crop {
  int part = 0;
  PixelBox rect;
  Image patch;
};

struct CropSet {
  std::vector<Crop> crops;
  /// Parts in [0, num_parts) with no location, hence no crop.
  std::vector<int> skipped_parts;
  int source_width = 0;
  int source_height = 0;
};

/// One crop per part present in `locations`: the bounding rectangle of its
/// cells in pixels, grown by `crop_pad` and clipped to the image.
CropSet crop_regions(const RenderedImage& image, const SpatialLocationSet& locations, int grid_stride,
                     int crop_pad, int num_parts = 0);

/// Crop around the whole image, tagged with part 0.
CropSet whole_image_crop(const RenderedImage& image);

/// Resampled view of a crop. source holds, per output pixel (row-major), the
/// continuous source-image coordinate it was bilinearly sampled from.
struct AugmentedPatch {
  int part = 0;
  int crop = 0;
  PixelBox rect;
  Image image;
  std::vector<Vec2> source;
};

/// For each crop: n_global random-perspective warps of the full crop, then
/// n_local random sub-crops, each resampled to output_size².
std::vector<AugmentedPatch> augment(const CropSet& crops, const LossConfig& config, int output_size, Rng& rng);

/// Bilinear sample at a continuous pixel coordinate (pixel centers at +0.5),
/// clamped to `rect`.
Rgb sample_bilinear(const Image& image, const PixelBox& rect, const Vec2& at);

/// Adds the source-image gradient of one patch into d_source.
void accumulate_patch_gradient(const AugmentedPatch& patch, const Image& d_patch, Image& d_source);

struct EmbeddingLossValue {
  double value = 0.0;
  std::vector<Image> d_patches;
};

/// −mean over patches of cos(embed(patch), embed(style_phrases[patch.part])).
/// Throws on a zero-norm embedding.
EmbeddingLossValue clip_style_loss(const EmbeddingBackend& backend, const std::vector<AugmentedPatch>& patches,
                                   const std::vector<std::string>& style_phrases);

}  // namespace partstyle
