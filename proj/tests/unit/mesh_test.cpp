#include "fixtures.hpp"

#include <partstyle/mesh.hpp>
#include <partstyle/rng.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

using namespace partstyle;
namespace fs = std::filesystem;

namespace {

class MeshIo : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = fixtures::temp_dir("mesh"); }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST(Mesh, CubeCounts) {
  const PartitionedMesh m = fixtures::unit_cube();
  EXPECT_EQ(m.part_count(), 1);
  EXPECT_EQ(m.vertex_count(), 8);
  EXPECT_EQ(m.face_count(), 12);
}

TEST(Mesh, NormalsAreUnit) {
  const PartitionedMesh m = fixtures::body_handle();
  for (int i = 0; i < m.vertex_count(); ++i) EXPECT_NEAR(m.vertex_normals.row(i).norm(), 1.0, 1e-6);
}

TEST(Mesh, CubeNormalsPointOutward) {
  const PartitionedMesh m = fixtures::unit_cube();
  for (int i = 0; i < m.vertex_count(); ++i) EXPECT_GT(m.vertex_normals.row(i).dot(m.vertices.row(i)), 0.0);
}

TEST(Mesh, DumbbellPartsAreDisjointAndExhaustive) {
  const PartitionedMesh m = fixtures::dumbbell();
  ASSERT_EQ(m.part_count(), 2);
  const auto head = m.faces_of(0);
  const auto tail = m.faces_of(1);
  EXPECT_EQ(static_cast<int>(head.size() + tail.size()), m.face_count());
  std::vector<int> all(head);
  all.insert(all.end(), tail.begin(), tail.end());
  std::sort(all.begin(), all.end());
  std::vector<int> expected(static_cast<std::size_t>(m.face_count()));
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
}

TEST(Mesh, ValidateRejectsBadIndices) {
  PartitionedMesh m = fixtures::unit_cube();
  m.faces(3, 1) = 8;
  EXPECT_THROW(validate(m), InputError);
  m = fixtures::unit_cube();
  m.face_parts[2] = 1;
  EXPECT_THROW(validate(m), InputError);
}

TEST(Mesh, ValidateRejectsEmptyPart) {
  PartitionedMesh m = fixtures::unit_cube();
  m.part_names.push_back("lid");
  EXPECT_THROW(validate(m), InputError);
}

TEST(Normalize, ShiftedCube) {
  VertexTable v = fixtures::unit_cube().vertices * 5.0;
  v.rowwise() += Eigen::RowVector3d(5, 5, 5);
  const PartitionedMesh raw = make_mesh(v, fixtures::unit_cube().faces, {"body"}, std::vector<int>(12, 0));
  const PartitionedMesh n = normalize_mesh(raw);
  EXPECT_NEAR(n.vertices.colwise().mean().norm(), 0.0, 1e-12);
  EXPECT_NEAR(n.vertices.rowwise().norm().maxCoeff(), 1.0, 1e-12);
  // Scale 1 / (5·√3) maps the corner (10,10,10) to (1,1,1)/√3.
  EXPECT_NEAR(n.vertices(6, 0), 1.0 / std::sqrt(3.0), 1e-12);
}

TEST(Normalize, Idempotent) {
  const PartitionedMesh once = fixtures::body_handle();
  const PartitionedMesh twice = normalize_mesh(once);
  EXPECT_LT((once.vertices - twice.vertices).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalize, SingleTriangleRadiusOne) {
  VertexTable v(3, 3);
  v << 0, 0, 0, 3, 0, 0, 0, 2, 0;
  FaceTable f(1, 3);
  f << 0, 1, 2;
  const PartitionedMesh n = normalize_mesh(make_mesh(v, f, {"t"}, {0}));
  EXPECT_DOUBLE_EQ(n.vertices.rowwise().norm().maxCoeff(), 1.0);
}

TEST(Normalize, CoincidentVerticesRejected) {
  VertexTable v = VertexTable::Ones(3, 3);
  FaceTable f(1, 3);
  f << 0, 1, 2;
  EXPECT_THROW(normalize_mesh(make_mesh(v, f, {"t"}, {0})), InputError);
}

TEST(ApplyStyle, ZeroDisplacementKeepsGeometry) {
  const PartitionedMesh m = fixtures::body_handle();
  const StylizedMesh s = apply_style(m, VertexTable::Constant(m.vertex_count(), 3, 0.5),
                                     Eigen::VectorXd::Zero(m.vertex_count()));
  EXPECT_EQ(s.displaced_positions(), m.vertices);
}

TEST(ApplyStyle, UnitDisplacementIsOneTenth) {
  const PartitionedMesh m = fixtures::unit_cube();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(8);
  d(3) = 1.0;
  const StylizedMesh s = apply_style(m, VertexTable::Constant(8, 3, 0.5), d);
  EXPECT_NEAR(s.vertex_offsets.row(3).norm(), 0.1, 1e-15);
  EXPECT_EQ(s.vertex_offsets.row(2).norm(), 0.0);
}

TEST(ApplyStyle, ContentPreservedAndOffsetsBounded) {
  const PartitionedMesh m = fixtures::body_handle();
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    VertexTable c(m.vertex_count(), 3);
    Eigen::VectorXd d(m.vertex_count());
    for (int i = 0; i < m.vertex_count(); ++i) {
      c.row(i) << rng.uniform(), rng.uniform(), rng.uniform();
      d(i) = rng.uniform(-1.0, 1.0);
    }
    const StylizedMesh s = apply_style(m, c, d);
    EXPECT_EQ(s.base.faces, m.faces);
    EXPECT_EQ(s.base.face_parts, m.face_parts);
    EXPECT_LE(s.vertex_offsets.rowwise().norm().maxCoeff(), 0.1 + 1e-6);
  }
}

TEST(ApplyStyle, ShapeMismatchRejected) {
  const PartitionedMesh m = fixtures::unit_cube();
  EXPECT_THROW(apply_style(m, VertexTable::Zero(7, 3), Eigen::VectorXd::Zero(8)), Error);
  EXPECT_THROW(apply_style(m, VertexTable::Zero(8, 3), Eigen::VectorXd::Zero(9)), Error);
}

TEST(PartMatch, LongestSuffixWins) {
  VertexTable v(4, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  FaceTable f(2, 3);
  f << 0, 1, 2, 0, 2, 3;
  const PartitionedMesh m = make_mesh(v, f, {"handle", "door handle"}, {0, 1}, {{"grip"}, {}});
  auto match = match_part_suffix(m, "Shiny Door Handle");
  ASSERT_TRUE(match);
  EXPECT_EQ(match->part, 1);
  EXPECT_EQ(match->style, "shiny");
  match = match_part_suffix(m, "wood grip");
  ASSERT_TRUE(match);
  EXPECT_EQ(match->part, 0);
  EXPECT_EQ(match->part_phrase, "grip");
  EXPECT_FALSE(match_part_suffix(m, "shiny thing"));
}

TEST_F(MeshIo, LoadRoundTripKeepsLabels) {
  const PartitionedMesh m = fixtures::dumbbell();
  const auto [obj, parts] = fixtures::write_fixture(m, dir_, "dumbbell");
  const PartitionedMesh back = load_mesh(obj, parts);
  EXPECT_EQ(back.part_names, m.part_names);
  EXPECT_EQ(back.face_parts, m.face_parts);
  EXPECT_EQ(back.faces, m.faces);
  EXPECT_LT((back.vertices - m.vertices).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(MeshIo, UnlabeledFaceNamed) {
  const PartitionedMesh m = fixtures::unit_cube();
  write_obj(dir_ / "cube.obj", m.vertices, m.faces);
  std::ofstream(dir_ / "cube.parts.json") << R"({"parts": [{"name": "body", "faces": [0,1,2,3,4,5,6,7,8,9,10]}]})";
  try {
    (void)load_mesh(dir_ / "cube.obj", dir_ / "cube.parts.json");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("11"), std::string::npos) << e.what();
  }
}

TEST_F(MeshIo, NonTriangleRejected) {
  std::ofstream(dir_ / "quad.obj") << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  std::ofstream(dir_ / "quad.parts.json") << R"({"parts": [{"name": "body", "faces": [0]}]})";
  EXPECT_THROW(load_mesh(dir_ / "quad.obj", dir_ / "quad.parts.json"), InputError);
}

TEST_F(MeshIo, DegenerateFaceKept) {
  std::ofstream(dir_ / "d.obj") << "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n";
  std::ofstream(dir_ / "d.parts.json") << R"({"parts": [{"name": "body", "faces": [0, 1]}]})";
  const PartitionedMesh m = load_mesh(dir_ / "d.obj", dir_ / "d.parts.json");
  EXPECT_EQ(m.face_count(), 2);
  for (int i = 0; i < m.vertex_count(); ++i) EXPECT_NEAR(m.vertex_normals.row(i).norm(), 1.0, 1e-6);
}

TEST_F(MeshIo, MissingFileNamesPath) {
  try {
    (void)load_mesh(dir_ / "absent.obj", dir_ / "absent.parts.json");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("absent.obj"), std::string::npos);
  }
}

TEST_F(MeshIo, ExportRoundTrip) {
  const PartitionedMesh m = fixtures::body_handle();
  VertexTable c = VertexTable::Constant(m.vertex_count(), 3, 0.25);
  c.row(0) << 1.0, 0.0, 1.0;
  const StylizedMesh zero = apply_style(m, c, Eigen::VectorXd::Zero(m.vertex_count()));
  export_mesh(zero, dir_ / "out.ply");
  const ColoredMesh back = read_colored_ply(dir_ / "out.ply");
  EXPECT_LT((back.vertices - m.vertices).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_EQ(back.faces, m.faces);
  EXPECT_EQ(back.colors(0, 0), 1.0);
  EXPECT_EQ(back.colors(0, 1), 0.0);
  EXPECT_LE((back.colors - c).cwiseAbs().maxCoeff(), 0.5 / 255.0 + 1e-12);
}

TEST_F(MeshIo, ExportToUnwritablePathFails) {
  const PartitionedMesh m = fixtures::unit_cube();
  const StylizedMesh s = apply_style(m, VertexTable::Zero(8, 3), Eigen::VectorXd::Zero(8));
  EXPECT_THROW(export_mesh(s, dir_ / "no/such/dir/out.ply"), Error);
}

TEST_F(MeshIo, ConvertGroupsDefaultPart) {
  std::ofstream(dir_ / "g.obj") << "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\no lid\nf 1 3 4\n";
  convert_obj_groups(dir_ / "g.obj", dir_ / "g.parts.json", "rest");
  const PartitionedMesh m = load_mesh(dir_ / "g.obj", dir_ / "g.parts.json");
  EXPECT_EQ(m.part_names, (std::vector<std::string>{"rest", "lid"}));
  EXPECT_EQ(m.face_parts, (std::vector<int>{0, 1}));
}

TEST_F(MeshIo, SynonymsSurviveSidecar) {
  const PartitionedMesh m = fixtures::body_handle();
  const auto [obj, parts] = fixtures::write_fixture(m, dir_, "kettle");
  const PartitionedMesh back = load_mesh(obj, parts);
  EXPECT_EQ(back.phrases_for(1), (std::vector<std::string>{"handle", "grip", "holder"}));
}

}  // namespace
