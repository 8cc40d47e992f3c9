#pragma once

#include "partstyle/checkpoint.hpp"
#include "partstyle/embedding.hpp"
#include "partstyle/grounding.hpp"
#include "partstyle/losses.hpp"
#include "partstyle/optimizer.hpp"
#include "partstyle/prompt.hpp"
#include "partstyle/style_field.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace partstyle {

enum class LossKind { part_style, embedding };
std::string to_string(LossKind kind);

/// Which losses take part in training.
///   full:         alternate part-style and cropped embedding losses
///   no-embedding: part-style loss only
///   no-grounding: embedding loss on whole renders against the full prompt,
///                 no localization at all
enum class TrainMode { full, no_embedding, no_grounding };
std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

struct TrainConfig {
  int iterations = 2000;
  double learning_rate = 5e-4;
  /// Loss switches every `alternation_block` iterations; 1 is every-other.
  int alternation_block = 1;
  std::uint64_t seed = 0;
  /// Gaussian views sampled around the anchor each iteration.
  int sampled_views = 2;
  double view_sigma = 15.0 * kPi / 180.0;
  int snapshot_every = 100;
  TrainMode mode = TrainMode::full;

  /// Anchor candidates: n azimuths × elevations.
  int anchor_azimuths = 8;
  std::vector<double> anchor_elevations{-kPi / 6.0, 0.0, kPi / 6.0};
  int turntable_views = 8;

  double camera_distance = 2.5;
  double fov = kPi / 3.0;
  int image_size = 512;
  Rgb background = Rgb::Ones();

  /// Localizes parts on content renders (part phrases).
  std::string localizer = "oracle";
  /// Scores styled renders against style phrases; must be differentiable.
  std::string grounding = "toy";
  std::string embedding = "toy";

  FieldConfig field;
  LossConfig loss;
  BackendSettings backend;
  EmbeddingSettings embedder;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws InputError on the first invalid field.
void validate(const TrainConfig& config);

/// Loss used at `iteration` when alternating in blocks of `block`.
LossKind schedule_loss(std::int64_t iteration, int block);
/// Same, honoring the ablation mode.
LossKind schedule_loss(std::int64_t iteration, const TrainConfig& config);

struct ViewLoss {
  int camera_id = 0;  // 0 is the anchor, then sampled views in order
  Camera camera;
  double value = 0.0;
  bool dropped = false;         // empty localization
  double silhouette_iou = -1.0;  // content vs styled, -1 when not computed
};

struct StepReport {
  std::int64_t iteration = 0;
  LossKind kind = LossKind::part_style;
  double total = 0.0;
  std::vector<ViewLoss> views;
  double max_offset = 0.0;
};

/// Raised when no view of a step localizes anything. Holds the content
/// renders that failed so the caller can save them.
class LocalizationFailure : public Error {
 public:
  LocalizationFailure(const std::string& what, std::vector<RenderedImage> renders)
      : Error(what), renders_(std::move(renders)) {}
  [[nodiscard]] const std::vector<RenderedImage>& renders() const { return renders_; }

 private:
  std::vector<RenderedImage> renders_;
};

/// Optimization state plus the backends it trains against.
class Trainer {
 public:
  Trainer(TrainConfig config, PartitionedMesh mesh, PromptSpec prompt);
  Trainer(TrainConfig config, PartitionedMesh mesh, PromptSpec prompt, std::shared_ptr<GroundingBackend> localizer,
          std::shared_ptr<GroundingBackend> scorer, std::shared_ptr<EmbeddingBackend> embedder);

  /// Picks the anchor from the uniform candidate grid; returns its index.
  int select_anchor();
  void set_anchor(const Camera& anchor);
  [[nodiscard]] const std::optional<Camera>& anchor() const { return anchor_; }
  [[nodiscard]] std::vector<Camera> anchor_candidates() const;

  /// Cameras used at `iteration`: anchor first, then the sampled views.
  [[nodiscard]] std::vector<Camera> views_for(std::int64_t iteration) const;

  /// Content-image localization for a camera; cached for the anchor.
  [[nodiscard]] SpatialLocationSet content_locations(const Camera& camera) const;

  /// One scheduled loss over all views and one optimizer update.
  StepReport step();

  [[nodiscard]] std::int64_t iteration() const { return iteration_; }
  [[nodiscard]] StylizedMesh stylized() const;
  [[nodiscard]] const StyleField& field() const { return field_; }
  [[nodiscard]] const TrainConfig& config() const { return config_; }
  [[nodiscard]] const PartitionedMesh& mesh() const { return mesh_; }
  [[nodiscard]] const PromptSpec& prompt() const { return prompt_; }

  [[nodiscard]] Checkpoint checkpoint(std::string config_json) const;
  void restore(const Checkpoint& checkpoint);

  /// Loss value and parameter gradient for given cameras without updating
  /// anything. View k draws its augmentations from Rng::derive(stream, k).
  /// Used by step() and by gradient checks.
  struct Evaluation {
    double total = 0.0;
    Eigen::VectorXd gradient;
    std::vector<ViewLoss> views;
    double max_offset = 0.0;
  };
  [[nodiscard]] Evaluation evaluate(LossKind kind, const std::vector<Camera>& cameras,
                                    std::uint64_t stream) const;

 private:
  struct CachedView {
    Camera camera;
    SpatialLocationSet locations;
    RasterBuffer raster;
    RenderedImage render;
  };
  [[nodiscard]] CachedView localize_view(const Camera& camera) const;

  TrainConfig config_;
  PartitionedMesh mesh_;
  PromptSpec prompt_;
  std::shared_ptr<GroundingBackend> localizer_;
  std::shared_ptr<GroundingBackend> scorer_;
  std::shared_ptr<EmbeddingBackend> embedder_;
  StyleField field_;
  Adam adam_;
  std::int64_t iteration_ = 0;
  std::optional<Camera> anchor_;
  std::optional<CachedView> anchor_cache_;
};

struct LossRecord {
  std::int64_t iteration = 0;
  LossKind kind = LossKind::part_style;
  double value = 0.0;
  int camera_id = 0;
};

struct RunMetadata {
  std::string config_hash;
  std::uint64_t seed = 0;
  int anchor_index = -1;
  Camera anchor;
  std::int64_t start_iteration = 0;
  std::int64_t iterations = 0;
  std::string final_mesh_hash;
  double max_offset = 0.0;
};

struct RunArtifacts {
  std::filesystem::path run_dir;
  StylizedMesh final_mesh;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path loss_log;
  std::vector<std::filesystem::path> turntable;
  std::vector<LossRecord> losses;  // this invocation only
  RunMetadata metadata;
};

struct RunOptions {
  /// Run directory; nothing is written when empty.
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  /// Called after every step.
  std::function<void(const StepReport&, const Trainer&)> on_step;
  /// Overrides the anchor search (e.g. to share one anchor across runs).
  std::optional<Camera> anchor;
  /// Written as config.json; defaults to the training config.
  std::string config_snapshot;
  /// Skip turntable renders and PNG output (checkpoints and logs are kept).
  bool skip_renders = false;
};

/// Run directory layout:
///   config.json, loss_log.csv (iteration,loss_kind,value,camera_id),
///   diagnostics.csv, checkpoints/iter_XXXXXX.ckpt, renders/turntable_XX.png,
///   renders/anchor_content.png, renders/anchor_styled.png, final_mesh.ply,
///   metadata.json
RunArtifacts run(const TrainConfig& config, const PartitionedMesh& mesh, const PromptSpec& prompt,
                 const RunOptions& options = {});

/// Hex FNV-1a over faces, part labels, colors, and offsets.
std::string stylized_mesh_hash(const StylizedMesh& mesh);

}  // namespace partstyle
