#include "partstyle/mesh.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace partstyle {

std::vector<std::string> PartitionedMesh::phrases_for(int part) const {
  std::vector<std::string> out{part_names.at(part)};
  if (part < static_cast<int>(part_synonyms.size())) {
    for (const auto& s : part_synonyms[part]) {
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
  }
  return out;
}

std::vector<int> PartitionedMesh::faces_of(int part) const {
  std::vector<int> out;
  for (int f = 0; f < face_count(); ++f) {
    if (face_parts[f] == part) out.push_back(f);
  }
  return out;
}

std::vector<int> PartitionedMesh::vertices_of(int part) const {
  std::vector<char> used(vertex_count(), 0);
  for (int f = 0; f < face_count(); ++f) {
    if (face_parts[f] != part) continue;
    for (int k = 0; k < 3; ++k) used[faces(f, k)] = 1;
  }
  std::vector<int> out;
  for (int v = 0; v < vertex_count(); ++v) {
    if (used[v]) out.push_back(v);
  }
  return out;
}

void validate(const PartitionedMesh& mesh) {
  const int e = mesh.vertex_count();
  const int u = mesh.face_count();
  const int n = mesh.part_count();
  if (e == 0 || u == 0) throw InputError("mesh has no vertices or no faces");
  if (n == 0) throw InputError("mesh has no parts");
  if (static_cast<int>(mesh.face_parts.size()) != u) {
    throw InputError(fmt::format("face_parts has {} entries for {} faces", mesh.face_parts.size(), u));
  }
  if (!mesh.vertices.allFinite()) throw InputError("mesh has non-finite vertex coordinates");
  for (int f = 0; f < u; ++f) {
    for (int k = 0; k < 3; ++k) {
      const int idx = mesh.faces(f, k);
      if (idx < 0 || idx >= e) {
        throw InputError(fmt::format("face {} references vertex {} outside [0, {})", f, idx, e));
      }
    }
  }
  std::vector<int> owned(n, 0);
  std::vector<int> unlabeled;
  for (int f = 0; f < u; ++f) {
    const int p = mesh.face_parts[f];
    if (p < 0) {
      unlabeled.push_back(f);
      continue;
    }
    if (p >= n) throw InputError(fmt::format("face {} has part index {} outside [0, {})", f, p, n));
    ++owned[p];
  }
  if (!unlabeled.empty()) {
    throw InputError(fmt::format("unlabeled faces: {}", fmt::join(unlabeled, ", ")));
  }
  for (int p = 0; p < n; ++p) {
    if (owned[p] == 0) throw InputError(fmt::format("part '{}' owns no faces", mesh.part_names[p]));
  }
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      if (mesh.part_names[p] == mesh.part_names[q]) {
        throw InputError(fmt::format("duplicate part name '{}'", mesh.part_names[p]));
      }
    }
  }
}

VertexTable compute_vertex_normals(const VertexTable& positions, const FaceTable& faces) {
  VertexTable sums = VertexTable::Zero(positions.rows(), 3);
  for (int f = 0; f < faces.rows(); ++f) {
    const Vec3 p0 = positions.row(faces(f, 0));
    const Vec3 p1 = positions.row(faces(f, 1));
    const Vec3 p2 = positions.row(faces(f, 2));
    // Unnormalized cross product: its length is twice the face area.
    const Vec3 c = (p1 - p0).cross(p2 - p0);
    for (int k = 0; k < 3; ++k) sums.row(faces(f, k)) += c.transpose();
  }
  for (int v = 0; v < sums.rows(); ++v) {
    const double len = sums.row(v).norm();
    if (len > 1e-300) {
      sums.row(v) /= len;
    } else {
      sums.row(v) = Vec3(0, 1, 0).transpose();
    }
  }
  return sums;
}

PartitionedMesh normalize_mesh(const PartitionedMesh& mesh) {
  if (mesh.vertex_count() == 0) throw InputError("cannot normalize an empty mesh");
  const Eigen::RowVector3d centroid = mesh.vertices.colwise().mean();
  VertexTable centered = mesh.vertices.rowwise() - centroid;
  const double radius = centered.rowwise().norm().maxCoeff();
  if (!(radius > 1e-12)) throw InputError("all mesh vertices coincide; cannot normalize");
  PartitionedMesh out = mesh;
  out.vertices = centered / radius;
  out.vertex_normals = compute_vertex_normals(out.vertices, out.faces);
  return out;
}

StylizedMesh apply_style(const PartitionedMesh& mesh, const VertexTable& colors,
                         const Eigen::VectorXd& displacements) {
  const int e = mesh.vertex_count();
  if (colors.rows() != e) {
    throw InputError(fmt::format("color table has {} rows for {} vertices", colors.rows(), e));
  }
  if (displacements.size() != e) {
    throw InputError(fmt::format("displacement vector has {} entries for {} vertices", displacements.size(), e));
  }
  StylizedMesh out;
  out.base = mesh;
  out.vertex_colors = colors;
  out.vertex_offsets = mesh.vertex_normals.array().colwise() * (kDisplacementScale * displacements.array());
  return out;
}

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    tokens.push_back(tok);
  }
  return tokens;
}

std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

std::optional<PartMatch> match_part_suffix(const PartitionedMesh& mesh, const std::string& phrase) {
  const auto tokens = tokenize(phrase);
  std::optional<PartMatch> best;
  std::size_t best_len = 0;
  for (int p = 0; p < mesh.part_count(); ++p) {
    for (const auto& candidate : mesh.phrases_for(p)) {
      const auto ctoks = tokenize(candidate);
      if (ctoks.empty() || ctoks.size() > tokens.size() || ctoks.size() <= best_len) continue;
      if (!std::equal(ctoks.begin(), ctoks.end(), tokens.end() - static_cast<std::ptrdiff_t>(ctoks.size()))) continue;
      best_len = ctoks.size();
      best = PartMatch{p, join(tokens, 0, tokens.size() - ctoks.size()),
                       join(tokens, tokens.size() - ctoks.size(), tokens.size())};
    }
  }
  return best;
}

std::string describe_part_vocabulary(const PartitionedMesh& mesh) {
  std::vector<std::string> items;
  for (int p = 0; p < mesh.part_count(); ++p) {
    const auto phrases = mesh.phrases_for(p);
    if (phrases.size() == 1) {
      items.push_back(phrases[0]);
    } else {
      items.push_back(fmt::format("{} ({})", phrases[0],
                                  fmt::join(phrases.begin() + 1, phrases.end(), ", ")));
    }
  }
  return fmt::format("{}", fmt::join(items, "; "));
}

PartitionedMesh make_mesh(VertexTable vertices, FaceTable faces, std::vector<std::string> part_names,
                          std::vector<int> face_parts, std::vector<std::vector<std::string>> synonyms) {
  PartitionedMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.faces = std::move(faces);
  mesh.part_names = std::move(part_names);
  mesh.face_parts = std::move(face_parts);
  mesh.part_synonyms = std::move(synonyms);
  mesh.part_synonyms.resize(mesh.part_names.size());
  validate(mesh);
  mesh.vertex_normals = compute_vertex_normals(mesh.vertices, mesh.faces);
  return mesh;
}

}  // namespace partstyle
