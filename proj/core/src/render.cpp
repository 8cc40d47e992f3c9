#include "partstyle/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace partstyle {

namespace {

constexpr double kAmbient = 0.35;

struct Light {
  Vec3 direction;  // camera space, pointing toward the light
  double weight;
};

const std::array<Light, 2>& lights() {
  static const std::array<Light, 2> kLights{
      Light{Vec3(0.3, 0.6, 1.0).normalized(), 0.45},
      Light{Vec3(-0.6, -0.2, 0.7).normalized(), 0.20},
  };
  return kLights;
}

double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Accumulates upstream · ∂edge(a,b,p) into the gradients of a, b and p.
void edge_backward(const Vec2& a, const Vec2& b, const Vec2& p, double upstream, Vec2* ga, Vec2* gb,
                   Vec2* gp) {
  if (ga) *ga += upstream * Vec2(b.y() - p.y(), p.x() - b.x());
  if (gb) *gb += upstream * Vec2(p.y() - a.y(), a.x() - p.x());
  if (gp) *gp += upstream * Vec2(a.y() - b.y(), b.x() - a.x());
}

Vec2 ndc_of_pixel(double px, double py, int size) {
  return {2.0 * px / size - 1.0, 1.0 - 2.0 * py / size};
}

}  // namespace

double iou(const PixelBox& a, const PixelBox& b) {
  const PixelBox inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  const double i = static_cast<double>(inter.area());
  const double u = static_cast<double>(a.area() + b.area()) - i;
  return u > 0.0 ? i / u : 0.0;
}

RasterBuffer rasterize(const VertexTable& positions, const FaceTable& faces, const Camera& camera) {
  const int size = camera.image_size;
  RasterBuffer rb;
  rb.width = rb.height = size;
  const std::size_t npix = static_cast<std::size_t>(size) * size;
  rb.face.assign(npix, -1);
  rb.barycentric.assign(npix, Vec3::Zero());
  rb.depth.assign(npix, std::numeric_limits<double>::infinity());
  std::vector<double> inv_depth(npix, 0.0);

  const Mat3 rot = camera.rotation();
  const Vec3 eye = camera.eye();
  const double f = camera.focal();
  const Eigen::Index nv = positions.rows();
  std::vector<Vec2> screen(nv);
  std::vector<double> view_depth(nv);
  for (Eigen::Index v = 0; v < nv; ++v) {
    const Vec3 pc = rot * (positions.row(v).transpose() - eye);
    const double zv = -pc.z();
    view_depth[v] = zv;
    const double safe = std::abs(zv) > 1e-12 ? zv : 1e-12;
    screen[v] = Vec2(0.5 * size * (1.0 + f * pc.x() / safe), 0.5 * size * (1.0 - f * pc.y() / safe));
  }

  for (int fi = 0; fi < faces.rows(); ++fi) {
    const int i0 = faces(fi, 0), i1 = faces(fi, 1), i2 = faces(fi, 2);
    const double z0 = view_depth[i0], z1 = view_depth[i1], z2 = view_depth[i2];
    if (z0 < camera.near_plane || z1 < camera.near_plane || z2 < camera.near_plane) continue;
    const Vec2& s0 = screen[i0];
    const Vec2& s1 = screen[i1];
    const Vec2& s2 = screen[i2];
    const double area = edge(s0, s1, s2);
    if (std::abs(area) < 1e-12) continue;
    const double minx = std::min({s0.x(), s1.x(), s2.x()});
    const double maxx = std::max({s0.x(), s1.x(), s2.x()});
    const double miny = std::min({s0.y(), s1.y(), s2.y()});
    const double maxy = std::max({s0.y(), s1.y(), s2.y()});
    const int x_begin = std::max(0, static_cast<int>(std::ceil(minx - 0.5)));
    const int x_end = std::min(size - 1, static_cast<int>(std::floor(maxx - 0.5)));
    const int y_begin = std::max(0, static_cast<int>(std::ceil(miny - 0.5)));
    const int y_end = std::min(size - 1, static_cast<int>(std::floor(maxy - 0.5)));
    for (int y = y_begin; y <= y_end; ++y) {
      for (int x = x_begin; x <= x_end; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        const double b0 = edge(s1, s2, p) / area;
        const double b1 = edge(s2, s0, p) / area;
        const double b2 = edge(s0, s1, p) / area;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        const double inv_z = b0 / z0 + b1 / z1 + b2 / z2;
        const double z = 1.0 / inv_z;
        if (z > camera.far_plane) continue;
        const std::size_t idx = static_cast<std::size_t>(y) * size + x;
        if (inv_z > inv_depth[idx]) {
          inv_depth[idx] = inv_z;
          rb.depth[idx] = z;
          rb.face[idx] = fi;
          rb.barycentric[idx] = Vec3(b0, b1, b2);
        }
      }
    }
  }
  return rb;
}

double silhouette_iou(const RasterBuffer& a, const RasterBuffer& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.face.size() && i < b.face.size(); ++i) {
    const bool ca = a.face[i] >= 0, cb = b.face[i] >= 0;
    inter += (ca && cb);
    uni += (ca || cb);
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

DifferentiableRender::DifferentiableRender(VertexTable positions, VertexTable colors, FaceTable faces,
                                           const Camera& camera, const RenderOptions& options)
    : positions_(std::move(positions)),
      colors_(std::move(colors)),
      faces_(std::move(faces)),
      camera_(camera),
      options_(options) {
  const int size = camera_.image_size;
  const Mat3 rot = camera_.rotation();
  const Vec3 eye = camera_.eye();
  const double f = camera_.focal();
  const Eigen::Index nv = positions_.rows();

  world_normals_ = compute_vertex_normals(positions_, faces_);
  camera_normals_ = world_normals_ * rot.transpose();
  camera_positions_ = (positions_.rowwise() - eye.transpose()) * rot.transpose();
  screen_.resize(nv, 2);
  for (Eigen::Index v = 0; v < nv; ++v) {
    const double zv = -camera_positions_(v, 2);
    const double safe = std::abs(zv) > 1e-12 ? zv : 1e-12;
    screen_(v, 0) = 0.5 * size * (1.0 + f * camera_positions_(v, 0) / safe);
    screen_(v, 1) = 0.5 * size * (1.0 - f * camera_positions_(v, 1) / safe);
  }

  raster_ = rasterize(positions_, faces_, camera_);
  image_.camera = camera_;
  image_.differentiable = true;
  image_.pixels = Image(size, size, options_.background);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (raster_.face_at(x, y) < 0) continue;
      const PixelShading ps = shade_pixel(x, y);
      image_.pixels.set_pixel(x, y, ps.shade * ps.color);
    }
  }
}

DifferentiableRender::PixelShading DifferentiableRender::shade_pixel(int x, int y) const {
  const std::size_t idx = static_cast<std::size_t>(y) * raster_.width + x;
  const int fi = raster_.face[idx];
  const Vec3& b = raster_.barycentric[idx];
  PixelShading ps;
  ps.color.setZero();
  ps.normal.setZero();
  for (int k = 0; k < 3; ++k) {
    const int v = faces_(fi, k);
    ps.color += b[k] * colors_.row(v).transpose();
    ps.normal += b[k] * camera_normals_.row(v).transpose();
  }
  ps.shade = kAmbient;
  const double len = ps.normal.norm();
  if (len < 1e-12) return ps;
  const Vec3 n = ps.normal / len;
  const Vec2 ndc = ndc_of_pixel(x + 0.5, y + 0.5, camera_.image_size);
  const Vec3 ray(ndc.x() / camera_.focal(), ndc.y() / camera_.focal(), -1.0);
  ps.facing = n.dot(ray) < 0.0 ? 1.0 : -1.0;
  for (const auto& light : lights()) {
    ps.shade += light.weight * std::max(0.0, ps.facing * n.dot(light.direction));
  }
  return ps;
}

DifferentiableRender::Gradients DifferentiableRender::backward(const Image& d_pixels) const {
  const int size = camera_.image_size;
  if (d_pixels.width != size || d_pixels.height != size) throw Error("pixel gradient has wrong dimensions");
  const Eigen::Index nv = positions_.rows();
  Gradients g;
  g.d_colors = VertexTable::Zero(nv, 3);
  g.d_positions = VertexTable::Zero(nv, 3);
  VertexTable d_cam_normals = VertexTable::Zero(nv, 3);
  Eigen::Matrix<double, Eigen::Dynamic, 2> d_screen = Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(nv, 2);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * size + x;
      const int fi = raster_.face[idx];
      if (fi < 0) continue;
      const Vec3 gp = d_pixels.pixel(x, y);
      if (gp.isZero(0.0)) continue;
      const Vec3& b = raster_.barycentric[idx];
      const PixelShading ps = shade_pixel(x, y);
      const int vi[3] = {faces_(fi, 0), faces_(fi, 1), faces_(fi, 2)};

      Vec3 d_bary = Vec3::Zero();
      for (int k = 0; k < 3; ++k) {
        g.d_colors.row(vi[k]) += (b[k] * ps.shade) * gp.transpose();
        d_bary[k] += ps.shade * gp.dot(colors_.row(vi[k]).transpose());
      }

      const double len = ps.normal.norm();
      if (len >= 1e-12) {
        const double d_shade = gp.dot(ps.color);
        const Vec3 n = ps.normal / len;
        Vec3 d_nhat = Vec3::Zero();
        for (const auto& light : lights()) {
          if (ps.facing * n.dot(light.direction) > 0.0) d_nhat += light.weight * ps.facing * light.direction;
        }
        d_nhat *= d_shade;
        const Vec3 d_normal = (d_nhat - n * n.dot(d_nhat)) / len;
        for (int k = 0; k < 3; ++k) {
          d_cam_normals.row(vi[k]) += b[k] * d_normal.transpose();
          d_bary[k] += d_normal.dot(camera_normals_.row(vi[k]).transpose());
        }
      }

      // Barycentrics b_k = E_k / A as functions of the three screen vertices.
      const Vec2 s0 = screen_.row(vi[0]).transpose();
      const Vec2 s1 = screen_.row(vi[1]).transpose();
      const Vec2 s2 = screen_.row(vi[2]).transpose();
      const Vec2 p(x + 0.5, y + 0.5);
      const double area = edge(s0, s1, s2);
      Vec2 g0 = Vec2::Zero(), g1 = Vec2::Zero(), g2 = Vec2::Zero();
      edge_backward(s1, s2, p, d_bary[0] / area, &g1, &g2, nullptr);
      edge_backward(s2, s0, p, d_bary[1] / area, &g2, &g0, nullptr);
      edge_backward(s0, s1, p, d_bary[2] / area, &g0, &g1, nullptr);
      const double d_area = -d_bary.dot(b) / area;
      edge_backward(s0, s1, s2, d_area, &g0, &g1, &g2);
      d_screen.row(vi[0]) += g0.transpose();
      d_screen.row(vi[1]) += g1.transpose();
      d_screen.row(vi[2]) += g2.transpose();
    }
  }

  const Mat3 rot = camera_.rotation();
  const double f = camera_.focal();
  const double half = 0.5 * size;
  VertexTable d_cam = VertexTable::Zero(nv, 3);
  for (Eigen::Index v = 0; v < nv; ++v) {
    const double xc = camera_positions_(v, 0), yc = camera_positions_(v, 1), zc = camera_positions_(v, 2);
    if (std::abs(zc) < 1e-12) continue;
    // sx = half (1 - f xc / zc), sy = half (1 + f yc / zc)
    const double dsx = d_screen(v, 0), dsy = d_screen(v, 1);
    d_cam(v, 0) = dsx * (-half * f / zc);
    d_cam(v, 1) = dsy * (half * f / zc);
    d_cam(v, 2) = dsx * (half * f * xc / (zc * zc)) + dsy * (-half * f * yc / (zc * zc));
  }
  g.d_positions = d_cam * rot;
  const VertexTable d_world_normals = d_cam_normals * rot;
  g.d_positions += vertex_normals_backward(positions_, faces_, d_world_normals);
  return g;
}

VertexTable vertex_normals_backward(const VertexTable& positions, const FaceTable& faces,
                                    const VertexTable& d_normals) {
  const Eigen::Index nv = positions.rows();
  VertexTable sums = VertexTable::Zero(nv, 3);
  for (int f = 0; f < faces.rows(); ++f) {
    const Vec3 p0 = positions.row(faces(f, 0));
    const Vec3 c = (Vec3(positions.row(faces(f, 1))) - p0).cross(Vec3(positions.row(faces(f, 2))) - p0);
    for (int k = 0; k < 3; ++k) sums.row(faces(f, k)) += c.transpose();
  }
  VertexTable d_sums = VertexTable::Zero(nv, 3);
  for (Eigen::Index v = 0; v < nv; ++v) {
    const Vec3 m = sums.row(v);
    const double len = m.norm();
    if (len <= 1e-300) continue;
    const Vec3 n = m / len;
    const Vec3 dn = d_normals.row(v);
    d_sums.row(v) = ((dn - n * n.dot(dn)) / len).transpose();
  }
  VertexTable d_pos = VertexTable::Zero(nv, 3);
  for (int f = 0; f < faces.rows(); ++f) {
    const int i0 = faces(f, 0), i1 = faces(f, 1), i2 = faces(f, 2);
    const Vec3 p0 = positions.row(i0);
    const Vec3 a = Vec3(positions.row(i1)) - p0;
    const Vec3 b = Vec3(positions.row(i2)) - p0;
    const Vec3 dc = Vec3(d_sums.row(i0)) + Vec3(d_sums.row(i1)) + Vec3(d_sums.row(i2));
    const Vec3 da = b.cross(dc);
    const Vec3 db = dc.cross(a);
    d_pos.row(i1) += da.transpose();
    d_pos.row(i2) += db.transpose();
    d_pos.row(i0) -= (da + db).transpose();
  }
  return d_pos;
}

RenderedImage render(const PartitionedMesh& mesh, const Camera& camera, const RenderOptions& options) {
  DifferentiableRender dr(mesh.vertices, VertexTable::Constant(mesh.vertex_count(), 3, 0.5), mesh.faces, camera,
                          options);
  RenderedImage out = dr.image();
  out.differentiable = false;
  return out;
}

RenderedImage render(const StylizedMesh& mesh, const Camera& camera, const RenderOptions& options) {
  DifferentiableRender dr(mesh.displaced_positions(), mesh.vertex_colors, mesh.base.faces, camera, options);
  RenderedImage out = dr.image();
  out.differentiable = false;
  return out;
}

PartMaskImage render_part_masks(const PartitionedMesh& mesh, const Camera& camera) {
  const RasterBuffer rb = rasterize(mesh.vertices, mesh.faces, camera);
  PartMaskImage mask;
  mask.width = rb.width;
  mask.height = rb.height;
  mask.labels.resize(rb.face.size());
  for (std::size_t i = 0; i < rb.face.size(); ++i) {
    mask.labels[i] = rb.face[i] < 0 ? -1 : mesh.face_parts[rb.face[i]];
  }
  return mask;
}

std::vector<PartBox> boxes_from_mask(const PartMaskImage& mask, int num_parts, int min_side) {
  std::vector<PixelBox> boxes(num_parts, PixelBox{mask.width, mask.height, -1, -1});
  std::vector<char> seen(num_parts, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int p = mask.at(x, y);
      if (p < 0 || p >= num_parts) continue;
      seen[p] = 1;
      auto& b = boxes[p];
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x + 1);
      b.y1 = std::max(b.y1, y + 1);
    }
  }
  std::vector<PartBox> out;
  for (int p = 0; p < num_parts; ++p) {
    if (!seen[p]) continue;
    if (boxes[p].width() < min_side || boxes[p].height() < min_side) continue;
    out.push_back({p, boxes[p]});
  }
  return out;
}

std::vector<PartBox> project_part_bboxes(const PartitionedMesh& mesh, const Camera& camera, int min_side) {
  return boxes_from_mask(render_part_masks(mesh, camera), mesh.part_count(), min_side);
}

void write_mask_png(const PartMaskImage& mask, const std::filesystem::path& path) {
  static const std::array<Rgb, 8> kPalette{Rgb(0.90, 0.10, 0.10), Rgb(0.10, 0.35, 0.90), Rgb(0.15, 0.70, 0.20),
                                           Rgb(0.95, 0.75, 0.10), Rgb(0.60, 0.20, 0.75), Rgb(0.10, 0.75, 0.75),
                                           Rgb(0.95, 0.45, 0.10), Rgb(0.45, 0.30, 0.15)};
  Image img(mask.width, mask.height, Rgb::Ones());
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int p = mask.at(x, y);
      if (p >= 0) img.set_pixel(x, y, kPalette[static_cast<std::size_t>(p) % kPalette.size()]);
    }
  }
  write_png(img, path);
}

}  // namespace partstyle
