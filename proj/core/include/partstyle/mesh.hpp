#pragma once

#include "partstyle/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace partstyle {

/// Triangle mesh with an exhaustive, disjoint face→part labeling.
///
/// Invariants (checked by validate()): every face index lies in [0, e),
/// every face_parts entry lies in [0, N), and every part owns at least one
/// face. vertex_normals are area-weighted averages of incident face normals
/// with unit length.
struct PartitionedMesh {
  VertexTable vertices;
  FaceTable faces;
  std::vector<std::string> part_names;
  /// Alternative phrases per part; the canonical name is implied and not
  /// stored here.
  std::vector<std::vector<std::string>> part_synonyms;
  std::vector<int> face_parts;
  VertexTable vertex_normals;

  [[nodiscard]] int vertex_count() const { return static_cast<int>(vertices.rows()); }
  [[nodiscard]] int face_count() const { return static_cast<int>(faces.rows()); }
  [[nodiscard]] int part_count() const { return static_cast<int>(part_names.size()); }

  /// Canonical name followed by the synonyms of `part`.
  [[nodiscard]] std::vector<std::string> phrases_for(int part) const;
  [[nodiscard]] std::vector<int> faces_of(int part) const;
  /// Vertices referenced by at least one face of `part`.
  [[nodiscard]] std::vector<int> vertices_of(int part) const;
};

/// Result of stylization: colors and offsets over an unchanged base mesh.
struct StylizedMesh {
  PartitionedMesh base;
  VertexTable vertex_colors;
  VertexTable vertex_offsets;

  [[nodiscard]] VertexTable displaced_positions() const { return base.vertices + vertex_offsets; }
};

inline constexpr double kDisplacementScale = 0.1;

/// Throws InputError describing the first violated invariant.
void validate(const PartitionedMesh& mesh);

/// Area-weighted vertex normals; zero-area faces contribute nothing and
/// vertices without any contribution get +y.
VertexTable compute_vertex_normals(const VertexTable& positions, const FaceTable& faces);

/// Centers at the vertex centroid and scales so the farthest vertex sits at
/// distance 1. Idempotent up to rounding.
PartitionedMesh normalize_mesh(const PartitionedMesh& mesh);

/// offsets = 0.1 · displacement · normal, with normals of the base mesh.
StylizedMesh apply_style(const PartitionedMesh& mesh, const VertexTable& colors,
                         const Eigen::VectorXd& displacements);

/// Resolves a phrase to a part index by matching its trailing tokens against
/// part names and synonyms (case-insensitive, longest match wins).
struct PartMatch {
  int part = -1;
  std::string style;        // leading tokens not consumed by the match
  std::string part_phrase;  // the matched trailing tokens
};
std::optional<PartMatch> match_part_suffix(const PartitionedMesh& mesh, const std::string& phrase);

/// All phrases the mesh answers to, for error messages.
std::string describe_part_vocabulary(const PartitionedMesh& mesh);

// --- file formats -----------------------------------------------------------

/// Reads a Wavefront OBJ (positions + triangle faces) and a JSON parts
/// sidecar, validates, derives normals, and normalizes.
PartitionedMesh load_mesh(const std::filesystem::path& mesh_path,
                          const std::filesystem::path& parts_path);

struct RawObj {
  VertexTable vertices;
  FaceTable faces;
  /// Group/object tag active for each face ("" when none).
  std::vector<std::string> face_groups;
};
RawObj read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const VertexTable& vertices, const FaceTable& faces);

/// Parts sidecar:
///   {"parts": [{"name": "body", "faces": [0, 1, ...], "synonyms": ["torso"]}, ...]}
void write_parts(const std::filesystem::path& path, const PartitionedMesh& mesh);

/// Builds a sidecar from OBJ `g`/`o` tags; faces before any tag go to
/// `default_part`.
void convert_obj_groups(const std::filesystem::path& obj_path,
                        const std::filesystem::path& parts_path,
                        const std::string& default_part = "body");

/// Builds a mesh from in-memory tables (validates and derives normals, no
/// normalization).
PartitionedMesh make_mesh(VertexTable vertices, FaceTable faces, std::vector<std::string> part_names,
                          std::vector<int> face_parts,
                          std::vector<std::vector<std::string>> synonyms = {});

/// ASCII PLY with float positions and 8-bit vertex colors, one face list.
void export_mesh(const StylizedMesh& stylized, const std::filesystem::path& path);

struct ColoredMesh {
  VertexTable vertices;
  VertexTable colors;
  FaceTable faces;
};
ColoredMesh read_colored_ply(const std::filesystem::path& path);

}  // namespace partstyle
