#pragma once

#include "partstyle/grounding.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace partstyle {

struct FinetuneSample {
  Camera camera;
  RenderedImage render;
  /// One phrase per part (part order) and their comma-joined caption.
  std::vector<std::string> phrases;
  std::string caption;
  /// Ground truth from project_part_bboxes at the dataset's min_side.
  std::vector<PartBox> boxes;
};

struct FinetuneDataset {
  std::vector<FinetuneSample> samples;
  std::vector<std::string> part_names;
  /// Per part: canonical name followed by its synonyms.
  std::vector<std::vector<std::string>> synonyms;
  int min_side = 10;
};

struct DatasetOptions {
  int min_side = 10;
  /// Renders use these colors instead of the gray content shading.
  std::optional<VertexTable> vertex_colors;
  RenderOptions render;
};

/// One sample per viewpoint and synonym assignment. There are as many
/// assignments as the longest synonym list; assignment a gives part p its
/// phrase a mod |phrases of p|. Throws InputError when a part is not visible
/// from any viewpoint.
FinetuneDataset generate_dataset(const PartitionedMesh& mesh, std::span<const Camera> viewpoints,
                                 const DatasetOptions& options = {});

struct TuneOptions {
  int epochs = 200;
  double learning_rate = 0.05;
  /// Abort when the loss exceeds this multiple of the initial loss.
  double divergence_factor = 10.0;
};

struct TuneResult {
  PromptOffset offset;
  /// Loss before each epoch's update, then the final loss.
  std::vector<double> losses;
};

/// Learns one language-side offset per part with the backend frozen.
///
/// Objective: mean binary cross-entropy between σ(visual · (textual + offset))
/// and cell labels (1 where the cell center lies inside the part's box),
/// minimized by full-batch Adam. Visual features do not depend on the offset
/// and are computed once. The backend's own offset slot is left as it was.
TuneResult tune_offsets(GroundingBackend& backend, const FinetuneDataset& dataset, const TuneOptions& options = {});

struct ApReport {
  double ap = 0.0;
  /// Per part; empty when the part has no ground truth.
  std::vector<std::optional<double>> per_part;
  int ground_truths = 0;
  int detections = 0;
};

/// All-points interpolated average precision over every (sample, part) ground
/// truth. Detections are ranked by confidence and greedily matched to the
/// unmatched box of the same part and sample with the highest IoU ≥ threshold.
ApReport evaluate_ap(const GroundingBackend& backend, const FinetuneDataset& dataset, double iou_threshold = 0.5);

/// AP of already ranked detections; `matched[k]` tells whether detection k is
/// a true positive. Exposed for testing.
double average_precision(const std::vector<bool>& matched, int ground_truths);

/// Writes images/sample_XXXX.png and annotations.json (COCO-style images,
/// annotations with [x, y, w, h] boxes, categories with synonyms).
void save_dataset(const FinetuneDataset& dataset, const std::filesystem::path& dir);

/// Identity of a mesh for keying offsets: hex hash of positions, faces and
/// part labels.
std::string mesh_id(const PartitionedMesh& mesh);

/// Binary sidecar: "PSOF", u32 version, mesh id, backend id, phrase table,
/// offsets. load_offsets throws when the ids do not match.
void save_offsets(const PromptOffset& offset, const std::string& mesh_id, const std::string& backend_id,
                  const std::filesystem::path& path);
PromptOffset load_offsets(const std::filesystem::path& path, const std::string& mesh_id,
                          const std::string& backend_id);

}  // namespace partstyle
