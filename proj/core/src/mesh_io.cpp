#include "partstyle/mesh.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace partstyle {

using json = nlohmann::ordered_json;

RawObj read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh file '" + path.string() + "'");

  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  RawObj raw;
  std::string group;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p[0] >> p[1] >> p[2])) {
        throw InputError(fmt::format("{}:{}: malformed vertex", path.string(), line_no));
      }
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // Keep only the position index of v, v/vt, v//vn, v/vt/vn.
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(verts.size()) + i);
      }
      if (idx.size() != 3) {
        throw InputError(fmt::format("{}:{}: non-triangle face with {} vertices", path.string(), line_no, idx.size()));
      }
      faces.emplace_back(idx[0], idx[1], idx[2]);
      raw.face_groups.push_back(group);
    } else if (tag == "g" || tag == "o") {
      std::string name;
      ls >> name;
      group = name;
    }
  }
  raw.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) raw.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
  raw.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) raw.faces.row(static_cast<Eigen::Index>(i)) = faces[i];
  return raw;
}

void write_obj(const std::filesystem::path& path, const VertexTable& vertices, const FaceTable& faces) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (int v = 0; v < vertices.rows(); ++v) {
    out << fmt::format("v {:.9g} {:.9g} {:.9g}\n", vertices(v, 0), vertices(v, 1), vertices(v, 2));
  }
  for (int f = 0; f < faces.rows(); ++f) {
    out << fmt::format("f {} {} {}\n", faces(f, 0) + 1, faces(f, 1) + 1, faces(f, 2) + 1);
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

namespace {

struct PartsFile {
  std::vector<std::string> names;
  std::vector<std::vector<int>> faces;
  std::vector<std::vector<std::string>> synonyms;
};

PartsFile read_parts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open parts file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("parts file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!doc.contains("parts") || !doc["parts"].is_array()) {
    throw InputError("parts file '" + path.string() + "' must contain a \"parts\" array");
  }
  PartsFile pf;
  for (const auto& entry : doc["parts"]) {
    if (!entry.contains("name") || !entry.contains("faces")) {
      throw InputError("every part needs \"name\" and \"faces\"");
    }
    pf.names.push_back(entry["name"].get<std::string>());
    pf.faces.push_back(entry["faces"].get<std::vector<int>>());
    pf.synonyms.push_back(entry.value("synonyms", std::vector<std::string>{}));
  }
  return pf;
}

}  // namespace

PartitionedMesh load_mesh(const std::filesystem::path& mesh_path, const std::filesystem::path& parts_path) {
  RawObj raw = read_obj(mesh_path);
  PartsFile pf = read_parts(parts_path);

  const int u = static_cast<int>(raw.faces.rows());
  std::vector<int> face_parts(u, -1);
  for (std::size_t p = 0; p < pf.names.size(); ++p) {
    for (int f : pf.faces[p]) {
      if (f < 0 || f >= u) {
        throw InputError(fmt::format("part '{}' lists face {} outside [0, {})", pf.names[p], f, u));
      }
      if (face_parts[f] != -1) {
        throw InputError(fmt::format("face {} is labeled by both '{}' and '{}'", f,
                                     pf.names[face_parts[f]], pf.names[p]));
      }
      face_parts[f] = static_cast<int>(p);
    }
  }

  PartitionedMesh mesh = make_mesh(std::move(raw.vertices), std::move(raw.faces), std::move(pf.names),
                                   std::move(face_parts), std::move(pf.synonyms));
  std::vector<int> degenerate;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Vec3 p0 = mesh.vertices.row(mesh.faces(f, 0));
    const Vec3 p1 = mesh.vertices.row(mesh.faces(f, 1));
    const Vec3 p2 = mesh.vertices.row(mesh.faces(f, 2));
    if ((p1 - p0).cross(p2 - p0).norm() <= 1e-14) degenerate.push_back(f);
  }
  if (!degenerate.empty()) {
    spdlog::warn("{}: {} zero-area face(s) kept: {}", mesh_path.string(), degenerate.size(),
                 fmt::join(degenerate.begin(), degenerate.begin() + std::min<std::size_t>(degenerate.size(), 20), ", "));
  }
  return normalize_mesh(mesh);
}

void write_parts(const std::filesystem::path& path, const PartitionedMesh& mesh) {
  json doc;
  doc["parts"] = json::array();
  for (int p = 0; p < mesh.part_count(); ++p) {
    json entry;
    entry["name"] = mesh.part_names[p];
    entry["faces"] = mesh.faces_of(p);
    if (p < static_cast<int>(mesh.part_synonyms.size()) && !mesh.part_synonyms[p].empty()) {
      entry["synonyms"] = mesh.part_synonyms[p];
    }
    doc["parts"].push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << doc.dump(1) << '\n';
}

void convert_obj_groups(const std::filesystem::path& obj_path, const std::filesystem::path& parts_path,
                        const std::string& default_part) {
  const RawObj raw = read_obj(obj_path);
  std::vector<std::string> order;
  std::map<std::string, std::vector<int>> groups;
  for (int f = 0; f < static_cast<int>(raw.face_groups.size()); ++f) {
    const std::string name = raw.face_groups[f].empty() ? default_part : raw.face_groups[f];
    if (!groups.count(name)) order.push_back(name);
    groups[name].push_back(f);
  }
  json doc;
  doc["parts"] = json::array();
  for (const auto& name : order) doc["parts"].push_back({{"name", name}, {"faces", groups[name]}});
  std::ofstream out(parts_path);
  if (!out) throw Error("cannot write '" + parts_path.string() + "'");
  out << doc.dump(1) << '\n';
}

void export_mesh(const StylizedMesh& stylized, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  const VertexTable pos = stylized.displaced_positions();
  const auto& faces = stylized.base.faces;
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << pos.rows() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << faces.rows() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  auto to_byte = [](double c) { return static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
  for (int v = 0; v < pos.rows(); ++v) {
    out << fmt::format("{:.9g} {:.9g} {:.9g} {} {} {}\n", pos(v, 0), pos(v, 1), pos(v, 2),
                       to_byte(stylized.vertex_colors(v, 0)), to_byte(stylized.vertex_colors(v, 1)),
                       to_byte(stylized.vertex_colors(v, 2)));
  }
  for (int f = 0; f < faces.rows(); ++f) {
    out << fmt::format("3 {} {} {}\n", faces(f, 0), faces(f, 1), faces(f, 2));
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

ColoredMesh read_colored_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::string line;
  long nv = -1, nf = -1;
  std::getline(in, line);
  if (line != "ply") throw InputError("'" + path.string() + "' is not a PLY file");
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string a, b;
    long n = 0;
    ls >> a >> b;
    if (a == "format" && b != "ascii") throw InputError("only ASCII PLY is supported");
    if (a == "element" && (ls >> n)) {
      if (b == "vertex") nv = n;
      if (b == "face") nf = n;
    }
  }
  if (nv < 0 || nf < 0) throw InputError("PLY header lacks vertex or face element");
  ColoredMesh m;
  m.vertices.resize(nv, 3);
  m.colors.resize(nv, 3);
  m.faces.resize(nf, 3);
  for (long v = 0; v < nv; ++v) {
    int r, g, b;
    if (!(in >> m.vertices(v, 0) >> m.vertices(v, 1) >> m.vertices(v, 2) >> r >> g >> b)) {
      throw InputError("truncated PLY vertex list");
    }
    m.colors.row(v) << r / 255.0, g / 255.0, b / 255.0;
  }
  for (long f = 0; f < nf; ++f) {
    int k;
    if (!(in >> k) || k != 3) throw InputError("PLY face is not a triangle");
    in >> m.faces(f, 0) >> m.faces(f, 1) >> m.faces(f, 2);
  }
  if (!in) throw InputError("truncated PLY face list");
  return m;
}

}  // namespace partstyle
