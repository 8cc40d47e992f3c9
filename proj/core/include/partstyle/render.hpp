#pragma once

#include "partstyle/camera.hpp"
#include "partstyle/image.hpp"
#include "partstyle/mesh.hpp"

#include <algorithm>
#include <filesystem>
#include <vector>

namespace partstyle {

struct RenderOptions {
  Rgb background = Rgb::Ones();
};

/// Half-open pixel rectangle [x0, x1) × [y0, y1).
struct PixelBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  [[nodiscard]] int width() const { return x1 - x0; }
  [[nodiscard]] int height() const { return y1 - y0; }
  [[nodiscard]] long area() const { return static_cast<long>(std::max(0, width())) * std::max(0, height()); }
  [[nodiscard]] bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const PixelBox&) const = default;
};

double iou(const PixelBox& a, const PixelBox& b);

struct RenderedImage {
  Image pixels;
  Camera camera;
  /// True when produced by a DifferentiableRender whose backward() maps
  /// pixel gradients onto vertex colors and positions.
  bool differentiable = false;
};

/// Visible face and screen-space barycentrics for every pixel; face -1 is
/// background.
struct RasterBuffer {
  int width = 0;
  int height = 0;
  std::vector<int> face;
  std::vector<Vec3> barycentric;
  std::vector<double> depth;  // view-space distance along -z

  [[nodiscard]] int face_at(int x, int y) const { return face[static_cast<std::size_t>(y) * width + x]; }
};

/// Z-buffered rasterization at pixel centers. Triangles with any vertex in
/// front of the near plane are skipped; fragments beyond the far plane are
/// discarded. Ties keep the earlier face, so output is deterministic.
RasterBuffer rasterize(const VertexTable& positions, const FaceTable& faces, const Camera& camera);

/// Fraction of pixels covered in both buffers over pixels covered in either.
double silhouette_iou(const RasterBuffer& a, const RasterBuffer& b);

/// Vertex-colored, diffusely lit render that keeps what backward() needs.
///
/// Shading: pixel = shade · Σ b_k c_k with screen-space barycentrics b and
/// shade = ambient + Σ_l k_l max(0, ±n̂·l_l) for two camera-fixed lights, the
/// normal flipped toward the viewer; shade ≤ 1 so no clamping occurs.
/// Shading normals are recomputed from the given positions. Visibility
/// changes are not differentiated.
class DifferentiableRender {
 public:
  DifferentiableRender(VertexTable positions, VertexTable colors, FaceTable faces, const Camera& camera,
                       const RenderOptions& options = {});

  [[nodiscard]] const RenderedImage& image() const { return image_; }
  [[nodiscard]] const RasterBuffer& raster() const { return raster_; }

  struct Gradients {
    VertexTable d_positions;
    VertexTable d_colors;
  };
  [[nodiscard]] Gradients backward(const Image& d_pixels) const;

 private:
  struct PixelShading {
    Vec3 color;
    Vec3 normal;      // interpolated, unnormalized (camera space)
    double shade = 0;
    double facing = 1;  // +1 or -1
  };
  [[nodiscard]] PixelShading shade_pixel(int x, int y) const;

  VertexTable positions_;
  VertexTable colors_;
  FaceTable faces_;
  Camera camera_;
  RenderOptions options_;
  VertexTable world_normals_;
  VertexTable camera_normals_;
  Eigen::Matrix<double, Eigen::Dynamic, 2> screen_;
  VertexTable camera_positions_;
  RasterBuffer raster_;
  RenderedImage image_;
};

/// Content render: uniform 0.5 gray vertices.
RenderedImage render(const PartitionedMesh& mesh, const Camera& camera, const RenderOptions& options = {});
/// Stylized render with displaced positions and field colors.
RenderedImage render(const StylizedMesh& mesh, const Camera& camera, const RenderOptions& options = {});

/// Gradient of area-weighted, normalized vertex normals with respect to
/// positions.
VertexTable vertex_normals_backward(const VertexTable& positions, const FaceTable& faces,
                                    const VertexTable& d_normals);

struct PartMaskImage {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // -1 background, else part index

  [[nodiscard]] int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// Winning part per pixel using the same visibility as render().
PartMaskImage render_part_masks(const PartitionedMesh& mesh, const Camera& camera);

struct PartBox {
  int part = -1;
  PixelBox box;
  bool operator==(const PartBox&) const = default;
};

/// Tight box around each part's mask pixels; parts with no pixels or with a
/// box side below min_side are omitted. Sorted by part index.
std::vector<PartBox> boxes_from_mask(const PartMaskImage& mask, int num_parts, int min_side);
std::vector<PartBox> project_part_bboxes(const PartitionedMesh& mesh, const Camera& camera, int min_side);

/// Palette-colored PNG of a mask (background white).
void write_mask_png(const PartMaskImage& mask, const std::filesystem::path& path);

}  // namespace partstyle
