#include "partstyle/oracle_backend.hpp"

#include <fmt/format.h>

namespace partstyle {

OracleGroundingBackend::OracleGroundingBackend(PartitionedMesh mesh, OracleOptions options)
    : mesh_(std::move(mesh)), options_(options) {
  if (options_.stride < 1) throw InputError("oracle backend stride must be >= 1");
}

int OracleGroundingBackend::resolve(const std::string& phrase) const {
  if (auto m = match_part_suffix(mesh_, phrase)) return m->part;
  throw InputError(fmt::format("phrase '{}' names no part; known parts: {}", phrase, describe_part_vocabulary(mesh_)));
}

FusedFeatures OracleGroundingBackend::encode(const RenderedImage& image,
                                             const std::vector<std::string>& phrases) const {
  if (phrases.empty()) throw InputError("encode needs at least one phrase");
  const int s = options_.stride;
  const int size = image.camera.image_size;
  if (size % s != 0) throw InputError(fmt::format("image size {} is not divisible by grid stride {}", size, s));
  const PartMaskImage mask = render_part_masks(mesh_, image.camera);
  const int n = mesh_.part_count();

  FusedFeatures f;
  f.grid_w = f.grid_h = size / s;
  f.grid_stride = s;
  f.visual = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(f.grid_w) * f.grid_h, n);
  const double inv_area = 1.0 / (static_cast<double>(s) * s);
  for (int gy = 0; gy < f.grid_h; ++gy) {
    for (int gx = 0; gx < f.grid_w; ++gx) {
      const int c = f.cell(gx, gy);
      for (int y = gy * s; y < (gy + 1) * s; ++y) {
        for (int x = gx * s; x < (gx + 1) * s; ++x) {
          const int p = mask.at(x, y);
          if (p >= 0) f.visual(c, p) += inv_area;
        }
      }
      f.visual.row(c) = (2.0 * f.visual.row(c).array() - 1.0).matrix();
    }
  }
  f.textual = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(phrases.size()), n);
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    f.textual(static_cast<Eigen::Index>(i), resolve(phrases[i])) = options_.gain;
  }
  apply_prompt_offset(phrases, f.textual);
  return f;
}

std::vector<DetectedBox> OracleGroundingBackend::detect_boxes(const RenderedImage& image,
                                                              const std::vector<std::string>& phrases) const {
  const auto boxes = project_part_bboxes(mesh_, image.camera, options_.min_side);
  std::vector<DetectedBox> out;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    const int part = resolve(phrases[i]);
    for (const auto& pb : boxes) {
      if (pb.part == part) out.push_back({pb.box, static_cast<int>(i), 1.0});
    }
  }
  return out;
}

}  // namespace partstyle
