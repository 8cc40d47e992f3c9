#include "fixtures.hpp"

#include <cmath>
#include <random>

namespace fixtures {

using partstyle::kPi;
using partstyle::make_mesh;
using partstyle::normalize_mesh;
using partstyle::Rgb;

namespace {

void push_vertex(VertexTable& v, const Vec3& p) {
  v.conservativeResize(v.rows() + 1, 3);
  v.row(v.rows() - 1) = p.transpose();
}

void push_face(FaceTable& f, int a, int b, int c) {
  f.conservativeResize(f.rows() + 1, 3);
  f.row(f.rows() - 1) << a, b, c;
}

std::vector<int> labels(const std::vector<int>& counts) {
  std::vector<int> out;
  for (std::size_t p = 0; p < counts.size(); ++p) out.insert(out.end(), counts[p], static_cast<int>(p));
  return out;
}

}  // namespace

PartitionedMesh unit_cube() {
  VertexTable v(8, 3);
  v << -1, -1, -1, 1, -1, -1, 1, 1, -1, -1, 1, -1, -1, -1, 1, 1, -1, 1, 1, 1, 1, -1, 1, 1;
  FaceTable f(12, 3);
  f << 0, 2, 1, 0, 3, 2,  // -z
      4, 5, 6, 4, 6, 7,   // +z
      0, 1, 5, 0, 5, 4,   // -y
      3, 7, 6, 3, 6, 2,   // +y
      0, 4, 7, 0, 7, 3,   // -x
      1, 2, 6, 1, 6, 5;   // +x
  return make_mesh(v, f, {"body"}, std::vector<int>(12, 0));
}

void append_sphere(VertexTable& v, FaceTable& f, const Vec3& c, double r, int rings, int segments) {
  const int base = static_cast<int>(v.rows());
  push_vertex(v, c + Vec3(0, r, 0));
  for (int i = 1; i <= rings; ++i) {
    const double theta = kPi * i / (rings + 1);
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * kPi * j / segments;
      push_vertex(v, c + r * Vec3(std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)));
    }
  }
  push_vertex(v, c + Vec3(0, -r, 0));
  const int south = base + 1 + rings * segments;
  auto at = [&](int ring, int seg) { return base + 1 + (ring - 1) * segments + (seg % segments); };
  for (int j = 0; j < segments; ++j) push_face(f, base, at(1, j), at(1, j + 1));
  for (int i = 1; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      push_face(f, at(i, j), at(i + 1, j), at(i + 1, j + 1));
      push_face(f, at(i, j), at(i + 1, j + 1), at(i, j + 1));
    }
  }
  for (int j = 0; j < segments; ++j) push_face(f, south, at(rings, j + 1), at(rings, j));
}

void append_cylinder(VertexTable& v, FaceTable& f, const Vec3& b, double r, double h, int segments, bool caps) {
  const int base = static_cast<int>(v.rows());
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * kPi * j / segments;
      push_vertex(v, b + Vec3(r * std::sin(phi), k * h, r * std::cos(phi)));
    }
  }
  const int bottom = static_cast<int>(v.rows());
  push_vertex(v, b);
  const int top = static_cast<int>(v.rows());
  push_vertex(v, b + Vec3(0, h, 0));
  auto lo = [&](int j) { return base + (j % segments); };
  auto hi = [&](int j) { return base + segments + (j % segments); };
  for (int j = 0; j < segments; ++j) {
    push_face(f, lo(j), lo(j + 1), hi(j + 1));
    push_face(f, lo(j), hi(j + 1), hi(j));
    if (caps) {
      push_face(f, bottom, lo(j + 1), lo(j));
      push_face(f, top, hi(j), hi(j + 1));
    }
  }
  if (!caps) {
    v.conservativeResize(bottom, 3);
  }
}

void append_annulus(VertexTable& v, FaceTable& f, const Vec3& c, double inner, double outer, int segments) {
  const int base = static_cast<int>(v.rows());
  for (int k = 0; k < 2; ++k) {
    const double r = k == 0 ? inner : outer;
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * kPi * j / segments;
      push_vertex(v, c + Vec3(r * std::sin(phi), 0, r * std::cos(phi)));
    }
  }
  auto in = [&](int j) { return base + (j % segments); };
  auto out = [&](int j) { return base + segments + (j % segments); };
  for (int j = 0; j < segments; ++j) {
    push_face(f, in(j), out(j), out(j + 1));
    push_face(f, in(j), out(j + 1), in(j + 1));
  }
}

PartitionedMesh two_spheres(int rings, int segments) {
  VertexTable v(0, 3);
  FaceTable f(0, 3);
  append_sphere(v, f, Vec3(-0.5, 0, 0), 0.45, rings, segments);
  const int n0 = static_cast<int>(f.rows());
  append_sphere(v, f, Vec3(0.5, 0, 0), 0.45, rings, segments);
  const int n1 = static_cast<int>(f.rows()) - n0;
  return normalize_mesh(make_mesh(v, f, {"left", "right"}, labels({n0, n1})));
}

PartitionedMesh dumbbell() {
  PartitionedMesh m = two_spheres();
  m.part_names = {"head", "tail"};
  return m;
}

namespace {

PartitionedMesh body_handle_impl(int rings, int segments, int handle_rings, int handle_segments) {
  VertexTable v(0, 3);
  FaceTable f(0, 3);
  append_sphere(v, f, Vec3(-0.15, 0, 0), 0.6, rings, segments);
  const int n0 = static_cast<int>(f.rows());
  append_sphere(v, f, Vec3(0.75, 0.05, 0), 0.3, handle_rings, handle_segments);
  const int n1 = static_cast<int>(f.rows()) - n0;
  return normalize_mesh(make_mesh(v, f, {"body", "handle"}, labels({n0, n1}), {{}, {"grip", "holder"}}));
}

}  // namespace

PartitionedMesh body_handle(int rings, int segments) {
  return body_handle_impl(rings, segments, std::max(4, rings * 2 / 3), std::max(6, segments * 2 / 3));
}

PartitionedMesh small_body_handle() { return body_handle_impl(5, 8, 4, 6); }

PartitionedMesh lamp() {
  VertexTable v(0, 3);
  FaceTable f(0, 3);
  append_cylinder(v, f, Vec3(0, -1.0, 0), 0.8, 0.12, 32);
  const int n0 = static_cast<int>(f.rows());
  append_cylinder(v, f, Vec3(0, -0.88, 0), 0.12, 1.63, 16);
  const int n1 = static_cast<int>(f.rows()) - n0;
  append_cylinder(v, f, Vec3(0, 0.3, 0), 0.6, 0.5, 32, false);
  append_annulus(v, f, Vec3(0, 0.8, 0), 0.04, 0.6, 32);
  const int n2 = static_cast<int>(f.rows()) - n0 - n1;
  return normalize_mesh(make_mesh(v, f, {"base", "tube", "shade"}, labels({n0, n1, n2})));
}

PartitionedMesh occluder() {
  VertexTable v(0, 3);
  FaceTable f(0, 3);
  append_sphere(v, f, Vec3(0, 0, 0.3), 0.6, 12, 16);
  const int n0 = static_cast<int>(f.rows());
  append_sphere(v, f, Vec3(0, 0, -0.6), 0.2, 8, 10);
  const int n1 = static_cast<int>(f.rows()) - n0;
  return normalize_mesh(make_mesh(v, f, {"front", "back"}, labels({n0, n1})));
}

PartitionedMesh nested() {
  VertexTable v(0, 3);
  FaceTable f(0, 3);
  append_sphere(v, f, Vec3::Zero(), 1.0, 10, 12);
  const int n0 = static_cast<int>(f.rows());
  append_sphere(v, f, Vec3::Zero(), 0.3, 6, 8);
  const int n1 = static_cast<int>(f.rows()) - n0;
  return normalize_mesh(make_mesh(v, f, {"shell", "core"}, labels({n0, n1})));
}

std::pair<std::filesystem::path, std::filesystem::path> write_fixture(const PartitionedMesh& mesh,
                                                                       const std::filesystem::path& dir,
                                                                       const std::string& name) {
  const auto obj = dir / (name + ".obj");
  const auto parts = dir / (name + ".parts.json");
  partstyle::write_obj(obj, mesh.vertices, mesh.faces);
  partstyle::write_parts(parts, mesh);
  return {obj, parts};
}

VertexTable part_colors(const PartitionedMesh& mesh, const std::vector<Rgb>& colors) {
  VertexTable out = VertexTable::Constant(mesh.vertex_count(), 3, 0.5);
  for (int p = 0; p < mesh.part_count(); ++p) {
    for (int vi : mesh.vertices_of(p)) out.row(vi) = colors.at(static_cast<std::size_t>(p)).transpose();
  }
  return out;
}

partstyle::ColorVocabulary rotated_part_vocabulary() {
  return partstyle::ColorVocabulary({{"body", Rgb(0, 1, 0)},
                                     {"handle", Rgb(1, 0, 0)},
                                     {"grip", Rgb(1, 0, 0)},
                                     {"holder", Rgb(1, 0, 0)}});
}

partstyle::ColorVocabulary true_part_vocabulary() {
  return partstyle::ColorVocabulary({{"body", Rgb(1, 0, 0)},
                                     {"handle", Rgb(0, 0, 1)},
                                     {"grip", Rgb(0, 0, 1)},
                                     {"holder", Rgb(0, 0, 1)}});
}

std::filesystem::path temp_dir(const std::string& name) {
  static std::mt19937_64 gen(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("partstyle-test-" + name + "-" + std::to_string(gen() % 1000000007));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
