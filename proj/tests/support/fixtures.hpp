#pragma once

#include <partstyle/mesh.hpp>
#include <partstyle/toy_backend.hpp>

#include <filesystem>
#include <string>

namespace fixtures {

using partstyle::FaceTable;
using partstyle::PartitionedMesh;
using partstyle::Vec3;
using partstyle::VertexTable;

/// Side-2 cube centered at the origin, single part "body" (e = 8, u = 12).
PartitionedMesh unit_cube();

/// Raw UV sphere tables: rings × segments grid plus two poles, outward
/// winding.
void append_sphere(VertexTable& v, FaceTable& f, const Vec3& center, double radius, int rings, int segments);
/// Cylinder along +y; `caps` closes both ends.
void append_cylinder(VertexTable& v, FaceTable& f, const Vec3& base_center, double radius, double height,
                     int segments, bool caps = true);
/// Flat ring in the y = height plane between two radii.
void append_annulus(VertexTable& v, FaceTable& f, const Vec3& center, double inner, double outer, int segments);

/// Two equal spheres on the x axis: "left" (part 0) and "right" (part 1).
/// Normalized.
PartitionedMesh two_spheres(int rings = 12, int segments = 16);

/// Same geometry labelled "head" / "tail".
PartitionedMesh dumbbell();

/// Big sphere "body" with a smaller sphere "handle" on +x; handle synonyms
/// grip and holder. Normalized.
PartitionedMesh body_handle(int rings = 12, int segments = 16);
/// Low-resolution body_handle (< 100 vertices) for gradient checks.
PartitionedMesh small_body_handle();

/// Wide base disc, a tube, and a shade whose top has a small hole. From the
/// side the tube is a tall bar below the shade; from the top only a disc of it
/// shows through the hole, narrower than 10 px at 256². Parts: base, tube,
/// shade. Normalized.
PartitionedMesh lamp();

/// Large sphere "front" on +z hiding a small sphere "back" from azimuth 0.
/// Normalized.
PartitionedMesh occluder();

/// Small sphere "core" entirely inside a big sphere "shell": core is never
/// visible.
PartitionedMesh nested();

/// Writes <dir>/<name>.obj and <dir>/<name>.parts.json; returns the two paths.
std::pair<std::filesystem::path, std::filesystem::path> write_fixture(const PartitionedMesh& mesh,
                                                                       const std::filesystem::path& dir,
                                                                       const std::string& name);

/// Per-vertex colors painting each part with one RGB.
VertexTable part_colors(const PartitionedMesh& mesh, const std::vector<partstyle::Rgb>& colors);

/// Toy vocabulary whose part words point at the wrong colors: with body red
/// and handle blue, "body" reads green and "handle"/"grip"/"holder" read red.
partstyle::ColorVocabulary rotated_part_vocabulary();
/// The matching correct table.
partstyle::ColorVocabulary true_part_vocabulary();

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace fixtures
