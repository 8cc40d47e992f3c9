#include "partstyle/finetune.hpp"

#include "partstyle/optimizer.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

namespace partstyle {

namespace fs = std::filesystem;

FinetuneDataset generate_dataset(const PartitionedMesh& mesh, std::span<const Camera> viewpoints,
                                 const DatasetOptions& options) {
  if (viewpoints.empty()) throw InputError("dataset generation needs at least one viewpoint");
  if (options.vertex_colors && options.vertex_colors->rows() != mesh.vertex_count()) {
    throw InputError("dataset vertex colors do not match the mesh");
  }
  FinetuneDataset ds;
  ds.part_names = mesh.part_names;
  ds.min_side = options.min_side;
  std::size_t assignments = 1;
  for (int p = 0; p < mesh.part_count(); ++p) {
    ds.synonyms.push_back(mesh.phrases_for(p));
    assignments = std::max(assignments, ds.synonyms.back().size());
  }

  std::vector<bool> seen(mesh.part_count(), false);
  const VertexTable gray = VertexTable::Constant(mesh.vertex_count(), 3, 0.5);
  for (const Camera& cam : viewpoints) {
    const DifferentiableRender dr(mesh.vertices, options.vertex_colors ? *options.vertex_colors : gray, mesh.faces,
                                  cam, options.render);
    RenderedImage img = dr.image();
    img.differentiable = false;
    const PartMaskImage mask = render_part_masks(mesh, cam);
    for (const auto& b : boxes_from_mask(mask, mesh.part_count(), 1)) seen[b.part] = true;
    const auto boxes = boxes_from_mask(mask, mesh.part_count(), options.min_side);
    for (std::size_t a = 0; a < assignments; ++a) {
      FinetuneSample s;
      s.camera = cam;
      s.render = img;
      for (int p = 0; p < mesh.part_count(); ++p) s.phrases.push_back(ds.synonyms[p][a % ds.synonyms[p].size()]);
      s.caption = fmt::format("{}", fmt::join(s.phrases, ", "));
      s.boxes = boxes;
      ds.samples.push_back(std::move(s));
    }
  }
  std::vector<std::string> missing;
  for (int p = 0; p < mesh.part_count(); ++p) {
    if (!seen[p]) missing.push_back(mesh.part_names[p]);
  }
  if (!missing.empty()) {
    throw InputError(fmt::format("part(s) {} not visible from any of the {} viewpoints", fmt::join(missing, ", "),
                                 viewpoints.size()));
  }
  return ds;
}

namespace {

struct CachedSample {
  Eigen::MatrixXd visual;   // cells × d
  Eigen::MatrixXd textual;  // parts × d, without offset
  Eigen::MatrixXd labels;   // cells × parts
};

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Mean BCE over every cell and part of every sample, and its gradient with
/// respect to the per-part offsets.
double tuning_loss(const std::vector<CachedSample>& cache, const Eigen::MatrixXd& offsets, Eigen::MatrixXd* grad) {
  double loss = 0.0;
  double count = 0.0;
  for (const auto& c : cache) count += static_cast<double>(c.labels.size());
  if (grad) *grad = Eigen::MatrixXd::Zero(offsets.rows(), offsets.cols());
  for (const auto& c : cache) {
    const Eigen::MatrixXd scores = c.visual * (c.textual + offsets).transpose();
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      for (Eigen::Index p = 0; p < scores.cols(); ++p) {
        const double s = scores(i, p), y = c.labels(i, p);
        loss += y * softplus(-s) + (1.0 - y) * softplus(s);
        if (grad) grad->row(p) += (sigmoid(s) - y) / count * c.visual.row(i);
      }
    }
  }
  return loss / count;
}

}  // namespace

TuneResult tune_offsets(GroundingBackend& backend, const FinetuneDataset& dataset, const TuneOptions& options) {
  if (dataset.samples.empty()) throw InputError("cannot tune on an empty dataset");
  if (options.epochs < 0) throw InputError("epochs must be >= 0");
  const int parts = static_cast<int>(dataset.part_names.size());
  const int dim = backend.language_dim();

  TuneResult result;
  for (int p = 0; p < parts; ++p) {
    for (const auto& phrase : dataset.synonyms[p]) {
      std::string key = phrase;
      std::transform(key.begin(), key.end(), key.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      result.offset.phrase_to_part.emplace(key, p);
    }
  }
  result.offset.offsets = Eigen::MatrixXd::Zero(parts, dim);

  std::optional<PromptOffset> saved;
  if (const PromptOffset* cur = backend.prompt_offset()) saved = *cur;
  backend.set_prompt_offset(std::nullopt);
  std::vector<CachedSample> cache;
  try {
    for (const auto& s : dataset.samples) {
      const FusedFeatures f = backend.encode(s.render, s.phrases);
      CachedSample c;
      c.visual = f.visual;
      c.textual = f.textual;
      c.labels = Eigen::MatrixXd::Zero(f.visual.rows(), parts);
      for (const auto& b : s.boxes) {
        for (int y = 0; y < f.grid_h; ++y) {
          for (int x = 0; x < f.grid_w; ++x) {
            const double cx = (x + 0.5) * f.grid_stride, cy = (y + 0.5) * f.grid_stride;
            if (b.box.contains(cx, cy)) c.labels(f.cell(x, y), b.part) = 1.0;
          }
        }
      }
      cache.push_back(std::move(c));
    }
  } catch (...) {
    backend.set_prompt_offset(saved);
    throw;
  }
  backend.set_prompt_offset(saved);

  Adam adam(AdamConfig{options.learning_rate}, static_cast<Eigen::Index>(parts) * dim);
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parts) * dim);
  double initial = 0.0;
  for (int epoch = 0; epoch <= options.epochs; ++epoch) {
    const Eigen::Map<const Eigen::MatrixXd> offsets(flat.data(), parts, dim);
    Eigen::MatrixXd grad;
    const double loss = tuning_loss(cache, offsets, epoch < options.epochs ? &grad : nullptr);
    result.losses.push_back(loss);
    if (epoch == 0) initial = loss;
    if (!std::isfinite(loss) || loss > options.divergence_factor * initial) {
      throw Error(fmt::format("offset tuning diverged at epoch {}: loss {:.6g} vs initial {:.6g} "
                              "(learning rate {}, {} samples)",
                              epoch, loss, initial, options.learning_rate, dataset.samples.size()));
    }
    if (epoch == options.epochs) break;
    const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size());
    adam.step(flat, g);
  }
  result.offset.offsets = Eigen::Map<const Eigen::MatrixXd>(flat.data(), parts, dim);
  return result;
}

double average_precision(const std::vector<bool>& matched, int ground_truths) {
  if (ground_truths <= 0) return 0.0;
  const std::size_t n = matched.size();
  std::vector<double> precision(n);
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += matched[k] ? 1 : 0;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Interpolated precision at rank k is the best precision at any rank >= k.
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  // Recall grows by 1/G at each true positive.
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (matched[k]) sum += precision[k];
  }
  return sum / static_cast<double>(ground_truths);
}

ApReport evaluate_ap(const GroundingBackend& backend, const FinetuneDataset& dataset, double iou_threshold) {
  if (dataset.samples.empty()) throw InputError("cannot evaluate AP on an empty dataset");
  const int parts = static_cast<int>(dataset.part_names.size());
  struct Det {
    std::size_t sample;
    int part;
    PixelBox box;
    double confidence;
  };
  std::vector<Det> dets;
  ApReport report;
  std::vector<int> gt_per_part(parts, 0);
  for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
    const auto& sample = dataset.samples[s];
    for (const auto& b : sample.boxes) ++gt_per_part[b.part];
    for (const auto& d : backend.detect_boxes(sample.render, sample.phrases)) {
      if (d.phrase < 0 || d.phrase >= parts) continue;
      dets.push_back({s, d.phrase, d.box, d.confidence});
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.confidence > b.confidence; });
  report.detections = static_cast<int>(dets.size());
  report.ground_truths = std::accumulate(gt_per_part.begin(), gt_per_part.end(), 0);

  std::vector<std::vector<bool>> used(dataset.samples.size());
  for (std::size_t s = 0; s < dataset.samples.size(); ++s) used[s].assign(dataset.samples[s].boxes.size(), false);
  std::vector<bool> matched;
  for (const auto& d : dets) {
    const auto& boxes = dataset.samples[d.sample].boxes;
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < boxes.size(); ++g) {
      if (boxes[g].part != d.part || used[d.sample][g]) continue;
      const double v = iou(d.box, boxes[g].box);
      if (v >= best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) used[d.sample][static_cast<std::size_t>(best)] = true;
    matched.push_back(best >= 0);
  }
  report.ap = average_precision(matched, report.ground_truths);
  report.per_part.resize(parts);
  for (int p = 0; p < parts; ++p) {
    if (gt_per_part[p] == 0) continue;
    std::vector<bool> mp;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      if (dets[k].part == p) mp.push_back(matched[k]);
    }
    report.per_part[p] = average_precision(mp, gt_per_part[p]);
  }
  return report;
}

void save_dataset(const FinetuneDataset& dataset, const fs::path& dir) {
  using json = nlohmann::ordered_json;
  fs::create_directories(dir / "images");
  json j;
  j["images"] = json::array();
  j["annotations"] = json::array();
  j["categories"] = json::array();
  for (std::size_t p = 0; p < dataset.part_names.size(); ++p) {
    j["categories"].push_back({{"id", p}, {"name", dataset.part_names[p]}, {"synonyms", dataset.synonyms[p]}});
  }
  int ann = 0;
  for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
    const auto& sample = dataset.samples[s];
    const std::string file = fmt::format("images/sample_{:04d}.png", s);
    write_png(sample.render.pixels, dir / file);
    const Camera& c = sample.camera;
    j["images"].push_back({{"id", s},
                           {"file_name", file},
                           {"width", sample.render.pixels.width},
                           {"height", sample.render.pixels.height},
                           {"caption", sample.caption},
                           {"phrases", sample.phrases},
                           {"camera",
                            {{"azimuth", c.azimuth},
                             {"elevation", c.elevation},
                             {"distance", c.distance},
                             {"fov", c.fov},
                             {"image_size", c.image_size}}}});
    for (const auto& b : sample.boxes) {
      j["annotations"].push_back({{"id", ann++},
                                  {"image_id", s},
                                  {"category_id", b.part},
                                  {"phrase", sample.phrases[static_cast<std::size_t>(b.part)]},
                                  {"bbox", {b.box.x0, b.box.y0, b.box.width(), b.box.height()}}});
    }
  }
  j["min_side"] = dataset.min_side;
  std::ofstream os(dir / "annotations.json");
  if (!os) throw Error("cannot write " + (dir / "annotations.json").string());
  os << j.dump(2) << '\n';
}

std::string mesh_id(const PartitionedMesh& mesh) {
  std::uint64_t h =
      fnv1a(mesh.vertices.data(), static_cast<std::size_t>(mesh.vertices.size()) * sizeof(double));
  h = fnv1a(mesh.faces.data(), static_cast<std::size_t>(mesh.faces.size()) * sizeof(int), h);
  h = fnv1a(mesh.face_parts.data(), mesh.face_parts.size() * sizeof(int), h);
  for (const auto& n : mesh.part_names) h = fnv1a(n.data(), n.size(), h);
  return fmt::format("{:016x}", h);
}

namespace {

constexpr char kOffsetMagic[4] = {'P', 'S', 'O', 'F'};
constexpr std::uint32_t kOffsetVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw InputError("truncated offset file");
  return v;
}
std::string get_str(std::istream& is) {
  const auto n = get_u64(is);
  if (n > (1u << 20)) throw InputError("corrupt offset file");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw InputError("truncated offset file");
  return s;
}

}  // namespace

void save_offsets(const PromptOffset& offset, const std::string& mesh, const std::string& backend,
                  const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os.write(kOffsetMagic, 4);
  os.write(reinterpret_cast<const char*>(&kOffsetVersion), sizeof kOffsetVersion);
  put_str(os, mesh);
  put_str(os, backend);
  put_u64(os, offset.phrase_to_part.size());
  for (const auto& [phrase, part] : offset.phrase_to_part) {
    put_str(os, phrase);
    put_u64(os, static_cast<std::uint64_t>(part));
  }
  put_u64(os, static_cast<std::uint64_t>(offset.offsets.rows()));
  put_u64(os, static_cast<std::uint64_t>(offset.offsets.cols()));
  for (Eigen::Index r = 0; r < offset.offsets.rows(); ++r) {
    for (Eigen::Index c = 0; c < offset.offsets.cols(); ++c) {
      const double v = offset.offsets(r, c);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!os) throw Error("failed writing " + path.string());
}

PromptOffset load_offsets(const fs::path& path, const std::string& mesh, const std::string& backend) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open offset file " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  if (!is.read(magic, 4) || std::memcmp(magic, kOffsetMagic, 4) != 0 ||
      !is.read(reinterpret_cast<char*>(&version), sizeof version)) {
    throw InputError(path.string() + " is not an offset file");
  }
  if (version != kOffsetVersion) throw InputError(fmt::format("unsupported offset file version {}", version));
  const std::string file_mesh = get_str(is);
  const std::string file_backend = get_str(is);
  if (file_mesh != mesh || file_backend != backend) {
    throw InputError(fmt::format("offsets in {} belong to mesh {} / backend {}, not mesh {} / backend {}",
                                 path.string(), file_mesh, file_backend, mesh, backend));
  }
  PromptOffset off;
  const auto n = get_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string phrase = get_str(is);
    off.phrase_to_part.emplace(std::move(phrase), static_cast<int>(get_u64(is)));
  }
  const auto rows = get_u64(is), cols = get_u64(is);
  if (rows > 4096 || cols > 65536) throw InputError("corrupt offset file");
  off.offsets.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < off.offsets.rows(); ++r) {
    for (Eigen::Index c = 0; c < off.offsets.cols(); ++c) {
      if (!is.read(reinterpret_cast<char*>(&off.offsets(r, c)), sizeof(double))) {
        throw InputError("truncated offset file");
      }
    }
  }
  return off;
}

}  // namespace partstyle
