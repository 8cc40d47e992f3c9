#include "partstyle/trainer.hpp"

#include "partstyle/config.hpp"
#include "partstyle/rng.hpp"
#include "partstyle/toy_backend.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <future>

namespace partstyle {

namespace fs = std::filesystem;

std::string to_string(LossKind kind) { return kind == LossKind::part_style ? "part_style" : "embedding"; }

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::full: return "full";
    case TrainMode::no_embedding: return "no-embedding";
    case TrainMode::no_grounding: return "no-grounding";
  }
  return "full";
}

TrainMode parse_train_mode(const std::string& text) {
  if (text == "full") return TrainMode::full;
  if (text == "no-embedding" || text == "no_embedding") return TrainMode::no_embedding;
  if (text == "no-grounding" || text == "no_grounding") return TrainMode::no_grounding;
  throw InputError("unknown training mode '" + text + "' (expected full, no-embedding, no-grounding)");
}

void validate(const TrainConfig& c) {
  if (c.iterations < 1) throw InputError("iterations must be >= 1");
  if (!(c.learning_rate >= 0.0)) throw InputError("learning_rate must be >= 0");
  if (c.alternation_block < 1) throw InputError("alternation_block must be >= 1");
  if (c.sampled_views < 0) throw InputError("sampled_views must be >= 0");
  if (!(c.view_sigma >= 0.0)) throw InputError("view_sigma must be >= 0");
  if (c.snapshot_every < 1) throw InputError("snapshot_every must be >= 1");
  if (c.anchor_azimuths < 1 || c.anchor_elevations.empty()) throw InputError("anchor grid is empty");
  if (c.turntable_views < 0) throw InputError("turntable_views must be >= 0");
  (void)make_camera(0.0, 0.0, c.camera_distance, c.fov, c.image_size);
  for (double e : c.anchor_elevations) (void)make_camera(0.0, e, c.camera_distance, c.fov, c.image_size);
  validate(c.field);
  validate(c.loss);
}

LossKind schedule_loss(std::int64_t iteration, int block) {
  if (block < 1) throw InputError("alternation block must be >= 1");
  return (iteration / block) % 2 == 0 ? LossKind::part_style : LossKind::embedding;
}

LossKind schedule_loss(std::int64_t iteration, const TrainConfig& config) {
  switch (config.mode) {
    case TrainMode::no_embedding: return LossKind::part_style;
    case TrainMode::no_grounding: return LossKind::embedding;
    case TrainMode::full: break;
  }
  return schedule_loss(iteration, config.alternation_block);
}

namespace {

FieldConfig seeded(FieldConfig f, std::uint64_t seed) {
  f.seed = seed;
  return f;
}

constexpr std::uint64_t kViewChannel = 0;
constexpr std::uint64_t kAugmentChannel = 1;

}  // namespace

Trainer::Trainer(TrainConfig config, PartitionedMesh mesh, PromptSpec prompt)
    : Trainer(std::move(config), std::move(mesh), std::move(prompt), nullptr, nullptr, nullptr) {}

Trainer::Trainer(TrainConfig config, PartitionedMesh mesh, PromptSpec prompt,
                 std::shared_ptr<GroundingBackend> localizer, std::shared_ptr<GroundingBackend> scorer,
                 std::shared_ptr<EmbeddingBackend> embedder)
    : config_(std::move(config)),
      mesh_(std::move(mesh)),
      prompt_(std::move(prompt)),
      localizer_(std::move(localizer)),
      scorer_(std::move(scorer)),
      embedder_(std::move(embedder)),
      field_(seeded(config_.field, config_.seed)),
      adam_(AdamConfig{config_.learning_rate}, field_.parameter_count()) {
  validate(config_);
  if (prompt_.pairs.empty()) throw InputError("prompt has no phrasal pairs");
  const bool grounded = config_.mode != TrainMode::no_grounding;
  if (grounded) {
    if (!localizer_) localizer_ = make_grounding_backend(config_.localizer, mesh_, config_.backend);
    if (!scorer_) scorer_ = make_grounding_backend(config_.grounding, mesh_, config_.backend);
    if (!scorer_->differentiable()) {
      throw InputError(fmt::format("grounding backend '{}' cannot score styled renders: it has no pixel gradients",
                                   scorer_->name()));
    }
    if (const auto* toy = dynamic_cast<const ToyGroundingBackend*>(scorer_.get())) {
      for (const auto& s : prompt_.style_phrases()) (void)toy->vocabulary().lookup(s);
    }
  }
  if (config_.mode != TrainMode::no_embedding) {
    if (!embedder_) embedder_ = make_embedding_backend(config_.embedding, config_.embedder);
    if (grounded) {
      for (const auto& s : prompt_.style_phrases()) (void)embedder_->embed_text(s);
    } else {
      (void)embedder_->embed_text(prompt_.text);
    }
  }
}

std::vector<Camera> Trainer::anchor_candidates() const {
  return uniform_viewpoints(config_.anchor_azimuths, config_.anchor_elevations, config_.camera_distance, config_.fov,
                            config_.image_size);
}

int Trainer::select_anchor() {
  const auto candidates = anchor_candidates();
  int index = 0;
  if (config_.mode != TrainMode::no_grounding) {
    index = select_anchor_view(*localizer_, mesh_, prompt_.part_phrases(), candidates,
                               RenderOptions{config_.background});
  }
  set_anchor(candidates[static_cast<std::size_t>(index)]);
  return index;
}

void Trainer::set_anchor(const Camera& anchor) {
  anchor_ = anchor;
  anchor_cache_.reset();
  if (config_.mode != TrainMode::no_grounding) anchor_cache_ = localize_view(anchor);
}

std::vector<Camera> Trainer::views_for(std::int64_t iteration) const {
  if (!anchor_) throw Error("no anchor view selected");
  Rng rng = Rng::derive(config_.seed, static_cast<std::uint64_t>(iteration) * 2 + kViewChannel);
  return sample_training_views(*anchor_, config_.view_sigma, config_.sampled_views, rng);
}

Trainer::CachedView Trainer::localize_view(const Camera& camera) const {
  CachedView v;
  v.camera = camera;
  v.render = render(mesh_, camera, RenderOptions{config_.background});
  v.raster = rasterize(mesh_.vertices, mesh_.faces, camera);
  v.locations = localize(*localizer_, v.render, prompt_.part_phrases(), config_.loss.threshold);
  return v;
}

SpatialLocationSet Trainer::content_locations(const Camera& camera) const {
  if (anchor_cache_ && anchor_cache_->camera == camera) return anchor_cache_->locations;
  return localize_view(camera).locations;
}

Trainer::Evaluation Trainer::evaluate(LossKind kind, const std::vector<Camera>& cameras,
                                      std::uint64_t stream) const {
  StyleField::Tape tape;
  const FieldOutput out = field_.forward(mesh_.vertices, tape);
  const VertexTable offsets =
      kDisplacementScale * (mesh_.vertex_normals.array().colwise() * out.displacements.array()).matrix();
  const VertexTable positions = mesh_.vertices + offsets;
  const bool grounded = config_.mode != TrainMode::no_grounding;
  if (kind == LossKind::embedding && !embedder_) throw Error("no embedding backend configured");
  if (kind == LossKind::part_style && !grounded) throw Error("part-style loss needs grounding");

  struct ViewResult {
    ViewLoss loss;
    std::optional<RenderedImage> failed_content;
    VertexTable d_positions;
    VertexTable d_colors;
  };

  auto run_view = [&](int id) {
    ViewResult r;
    r.loss.camera_id = id;
    r.loss.camera = cameras[static_cast<std::size_t>(id)];
    const Camera& cam = r.loss.camera;
    std::optional<CachedView> fresh;
    const CachedView* loc = nullptr;
    if (grounded) {
      if (anchor_cache_ && anchor_cache_->camera == cam) {
        loc = &*anchor_cache_;
      } else {
        fresh = localize_view(cam);
        loc = &*fresh;
      }
      if (loc->locations.empty()) {
        r.loss.dropped = true;
        r.failed_content = loc->render;
        return r;
      }
    }
    const DifferentiableRender dr(positions, out.colors, mesh_.faces, cam, RenderOptions{config_.background});
    const RenderedImage& img = dr.image();
    if (loc) r.loss.silhouette_iou = silhouette_iou(loc->raster, dr.raster());
    Image d_pixels(img.pixels.width, img.pixels.height);
    if (kind == LossKind::part_style) {
      const auto phrases = prompt_.style_phrases();
      const FusedFeatures feats = scorer_->encode(img, phrases);
      const AlignmentMap map = alignment_map(feats);
      if (map.grid_w != loc->locations.grid_w || map.grid_h != loc->locations.grid_h) {
        throw Error(fmt::format("localizer grid {}x{} differs from scorer grid {}x{}", loc->locations.grid_w,
                                loc->locations.grid_h, map.grid_w, map.grid_h));
      }
      const auto gathered = gather_alignment(map, loc->locations);
      const LossValue lv = part_style_loss(gathered, config_.loss);
      const Eigen::MatrixXd d_map = scatter_alignment_gradient(map, loc->locations, lv.gradient);
      const Eigen::MatrixXd d_visual = d_map * feats.textual;
      const Eigen::MatrixXd d_textual = d_map.transpose() * feats.visual;
      d_pixels = scorer_->encode_backward(img, phrases, d_visual, d_textual);
      r.loss.value = lv.value;
    } else {
      CropSet crops;
      std::vector<std::string> phrases;
      if (grounded) {
        crops = crop_regions(img, loc->locations, loc->locations.grid_stride, config_.loss.crop_pad,
                             static_cast<int>(prompt_.pairs.size()));
        phrases = prompt_.style_phrases();
      } else {
        crops = whole_image_crop(img);
        phrases = {prompt_.text};
      }
      Rng rng = Rng::derive(stream, static_cast<std::uint64_t>(id));
      const auto patches = augment(crops, config_.loss, embedder_->input_size(), rng);
      const EmbeddingLossValue el = clip_style_loss(*embedder_, patches, phrases);
      for (std::size_t k = 0; k < patches.size(); ++k) accumulate_patch_gradient(patches[k], el.d_patches[k], d_pixels);
      r.loss.value = el.value;
    }
    auto g = dr.backward(d_pixels);
    r.d_positions = std::move(g.d_positions);
    r.d_colors = std::move(g.d_colors);
    return r;
  };

  // Views are independent; results are summed in view order so the total is
  // the same however the jobs are scheduled.
  std::vector<std::future<ViewResult>> jobs;
  for (int id = 0; id < static_cast<int>(cameras.size()); ++id) {
    jobs.push_back(std::async(cameras.size() > 1 ? std::launch::async : std::launch::deferred, run_view, id));
  }

  Evaluation ev;
  VertexTable d_positions = VertexTable::Zero(mesh_.vertex_count(), 3);
  VertexTable d_colors = VertexTable::Zero(mesh_.vertex_count(), 3);
  std::vector<RenderedImage> failed;
  bool any = false;
  for (auto& job : jobs) {
    ViewResult r = job.get();
    if (r.loss.dropped) {
      spdlog::debug("view {} dropped: empty localization", r.loss.camera_id);
      failed.push_back(std::move(*r.failed_content));
    } else {
      any = true;
      ev.total += r.loss.value;
      d_positions += r.d_positions;
      d_colors += r.d_colors;
    }
    ev.views.push_back(r.loss);
  }
  if (!any) {
    throw LocalizationFailure(
        fmt::format("localization failed: none of {} views produced a localized region for '{}'", cameras.size(),
                    fmt::join(prompt_.part_phrases(), "', '")),
        std::move(failed));
  }
  Eigen::VectorXd d_disp(mesh_.vertex_count());
  for (int i = 0; i < mesh_.vertex_count(); ++i) {
    d_disp(i) = kDisplacementScale * mesh_.vertex_normals.row(i).dot(d_positions.row(i));
  }
  ev.gradient = field_.backward(tape, d_colors, d_disp);
  ev.max_offset = offsets.rows() > 0 ? offsets.rowwise().norm().maxCoeff() : 0.0;
  return ev;
}

StepReport Trainer::step() {
  if (!anchor_) select_anchor();
  StepReport report;
  report.iteration = iteration_;
  report.kind = schedule_loss(iteration_, config_);
  const auto cameras = views_for(iteration_);
  const std::uint64_t stream =
      Rng::derive(config_.seed, static_cast<std::uint64_t>(iteration_) * 2 + kAugmentChannel).next();
  Evaluation ev = evaluate(report.kind, cameras, stream);
  Eigen::VectorXd params = field_.parameters();
  adam_.step(params, ev.gradient);
  field_.set_parameters(params);
  report.total = ev.total;
  report.views = std::move(ev.views);
  report.max_offset = ev.max_offset;
  ++iteration_;
  return report;
}

StylizedMesh Trainer::stylized() const {
  const FieldOutput out = field_.evaluate(mesh_.vertices);
  return apply_style(mesh_, out.colors, out.displacements);
}

Checkpoint Trainer::checkpoint(std::string config_json) const {
  Checkpoint c;
  c.iteration = iteration_;
  c.parameters = field_.parameters();
  c.adam = adam_.state();
  c.config_json = std::move(config_json);
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (c.parameters.size() != field_.parameter_count()) {
    throw InputError(fmt::format("checkpoint has {} parameters, the configured field has {}", c.parameters.size(),
                                 field_.parameter_count()));
  }
  field_.set_parameters(c.parameters);
  adam_.set_state(c.adam);
  iteration_ = c.iteration;
}

std::string stylized_mesh_hash(const StylizedMesh& m) {
  std::uint64_t h = fnv1a(m.base.faces.data(), static_cast<std::size_t>(m.base.faces.size()) * sizeof(int));
  h = fnv1a(m.base.face_parts.data(), m.base.face_parts.size() * sizeof(int), h);
  h = fnv1a(m.vertex_colors.data(), static_cast<std::size_t>(m.vertex_colors.size()) * sizeof(double), h);
  h = fnv1a(m.vertex_offsets.data(), static_cast<std::size_t>(m.vertex_offsets.size()) * sizeof(double), h);
  return fmt::format("{:016x}", h);
}

namespace {

using json = nlohmann::ordered_json;

json camera_json(const Camera& c) {
  return {{"azimuth", c.azimuth}, {"elevation", c.elevation}, {"distance", c.distance},
          {"fov", c.fov},         {"image_size", c.image_size}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("failed writing " + path.string());
}

/// Keeps rows from before `start` when resuming and leaves the stream ready
/// for appending.
std::ofstream open_loss_log(const fs::path& path, std::int64_t start, bool resume) {
  std::vector<std::string> kept;
  if (resume && fs::exists(path)) {
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) < start) kept.push_back(line);
    }
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "iteration,loss_kind,value,camera_id\n";
  for (const auto& l : kept) os << l << '\n';
  return os;
}

fs::path rescue_path(const std::string& config_hash, std::int64_t iteration) {
  return fs::temp_directory_path() / fmt::format("partstyle-rescue-{}-{:06d}.ckpt", config_hash, iteration);
}

}  // namespace

RunArtifacts run(const TrainConfig& config, const PartitionedMesh& mesh, const PromptSpec& prompt,
                 const RunOptions& options) {
  validate(config);
  Trainer trainer(config, mesh, prompt);
  const std::string config_json = to_json(config);
  RunArtifacts art;
  art.metadata.config_hash = hash_hex(config_json);
  art.metadata.seed = config.seed;

  if (options.resume_from) {
    const Checkpoint ck = read_checkpoint(*options.resume_from);
    TrainConfig saved = train_config_from_json(ck.config_json);
    saved.iterations = config.iterations;
    if (!(saved == train_config_from_json(config_json))) {
      throw InputError(fmt::format("checkpoint {} was written with a different configuration",
                                   options.resume_from->string()));
    }
    trainer.restore(ck);
  }
  art.metadata.start_iteration = trainer.iteration();

  if (options.anchor) {
    trainer.set_anchor(*options.anchor);
  } else {
    art.metadata.anchor_index = trainer.select_anchor();
  }
  art.metadata.anchor = *trainer.anchor();

  const bool write = !options.out_dir.empty();
  const RenderOptions ropts{config.background};
  std::ofstream log;
  std::ofstream diag;
  if (write) {
    art.run_dir = options.out_dir;
    fs::create_directories(art.run_dir / "checkpoints");
    fs::create_directories(art.run_dir / "renders");
    write_text(art.run_dir / "config.json",
               options.config_snapshot.empty() ? config_json + "\n" : options.config_snapshot);
    art.loss_log = art.run_dir / "loss_log.csv";
    log = open_loss_log(art.loss_log, art.metadata.start_iteration, options.resume_from.has_value());
    const bool append = options.resume_from && fs::exists(art.run_dir / "diagnostics.csv");
    diag.open(art.run_dir / "diagnostics.csv", append ? std::ios::app : std::ios::trunc);
    if (!append) diag << "iteration,camera_id,silhouette_iou,dropped\n";
    if (!options.skip_renders) {
      write_png(render(mesh, *trainer.anchor(), ropts).pixels, art.run_dir / "renders/anchor_content.png");
    }
  }

  while (trainer.iteration() < config.iterations) {
    StepReport report;
    try {
      report = trainer.step();
    } catch (const LocalizationFailure& e) {
      if (write) {
        for (std::size_t k = 0; k < e.renders().size(); ++k) {
          write_png(e.renders()[k].pixels, art.run_dir / fmt::format("renders/localization_failure_{:02d}.png", k));
        }
      }
      throw;
    }
    art.metadata.max_offset = std::max(art.metadata.max_offset, report.max_offset);
    for (const auto& v : report.views) {
      if (!v.dropped) art.losses.push_back({report.iteration, report.kind, v.value, v.camera_id});
      if (write) {
        if (!v.dropped) {
          log << fmt::format("{},{},{:.17g},{}\n", report.iteration, to_string(report.kind), v.value, v.camera_id);
        }
        diag << fmt::format("{},{},{:.6f},{}\n", report.iteration, v.camera_id, v.silhouette_iou, v.dropped ? 1 : 0);
      }
    }
    if (write) log.flush();
    if (options.on_step) options.on_step(report, trainer);
    const std::int64_t done = trainer.iteration();
    if (write && (done % config.snapshot_every == 0 || done == config.iterations)) {
      const fs::path path = art.run_dir / fmt::format("checkpoints/iter_{:06d}.ckpt", done);
      try {
        write_checkpoint(trainer.checkpoint(config_json), path);
      } catch (const CheckpointWriteError& e) {
        const fs::path rescue = rescue_path(art.metadata.config_hash, done);
        std::string where = "could not be dumped";
        try {
          write_checkpoint(e.state(), rescue);
          where = "dumped to " + rescue.string();
        } catch (const std::exception&) {
        }
        throw CheckpointWriteError(fmt::format("{}; training state {}", e.what(), where), e.state());
      }
      art.checkpoints.push_back(path);
    }
  }
  art.metadata.iterations = trainer.iteration();
  art.final_mesh = trainer.stylized();
  art.metadata.final_mesh_hash = stylized_mesh_hash(art.final_mesh);
  art.metadata.max_offset =
      std::max(art.metadata.max_offset, art.final_mesh.vertex_offsets.rowwise().norm().maxCoeff());

  if (write) {
    export_mesh(art.final_mesh, art.run_dir / "final_mesh.ply");
    if (!options.skip_renders) {
      write_png(render(art.final_mesh, *trainer.anchor(), ropts).pixels, art.run_dir / "renders/anchor_styled.png");
      for (int k = 0; k < config.turntable_views; ++k) {
        const Camera cam = make_camera(2.0 * kPi * k / config.turntable_views, trainer.anchor()->elevation,
                                       config.camera_distance, config.fov, config.image_size);
        const fs::path p = art.run_dir / fmt::format("renders/turntable_{:02d}.png", k);
        write_png(render(art.final_mesh, cam, ropts).pixels, p);
        art.turntable.push_back(p);
      }
    }
    json meta;
    meta["config_hash"] = art.metadata.config_hash;
    meta["seed"] = art.metadata.seed;
    meta["anchor_index"] = art.metadata.anchor_index;
    meta["anchor"] = camera_json(art.metadata.anchor);
    meta["start_iteration"] = art.metadata.start_iteration;
    meta["iterations"] = art.metadata.iterations;
    meta["final_mesh_hash"] = art.metadata.final_mesh_hash;
    meta["max_offset"] = art.metadata.max_offset;
    meta["prompt"] = prompt.text;
    meta["backends"] = {{"localizer", config.localizer}, {"grounding", config.grounding},
                        {"embedding", config.embedding}};
    write_text(art.run_dir / "metadata.json", meta.dump(2) + "\n");
  }
  return art;
}

}  // namespace partstyle
