#include "partstyle/checkpoint.hpp"

#include <fmt/format.h>

#include <cstring>
#include <fstream>

namespace partstyle {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'C', 'K'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw InputError("truncated checkpoint " + path.string());
  return v;
}

Eigen::VectorXd get_vector(std::istream& is, std::uint64_t n, const std::filesystem::path& path) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw InputError("truncated checkpoint " + path.string());
  }
  return v;
}

}  // namespace

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  if (c.adam.m.size() != c.parameters.size() || c.adam.v.size() != c.parameters.size()) {
    throw Error("checkpoint optimizer state does not match parameters");
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointWriteError("cannot open " + tmp.string() + " for writing", c);
    os.write(kMagic, 4);
    put(os, kCheckpointVersion);
    put(os, c.iteration);
    put(os, static_cast<std::uint64_t>(c.parameters.size()));
    put_vector(os, c.parameters);
    put_vector(os, c.adam.m);
    put_vector(os, c.adam.v);
    put(os, c.adam.step);
    put(os, static_cast<std::uint64_t>(c.config_json.size()));
    os.write(c.config_json.data(), static_cast<std::streamsize>(c.config_json.size()));
    os.flush();
    if (!os) throw CheckpointWriteError("failed writing " + tmp.string(), c);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointWriteError(fmt::format("cannot move checkpoint into {}: {}", path.string(), ec.message()), c);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw InputError(path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw InputError(fmt::format("checkpoint {} has version {}, expected {}", path.string(), version,
                                 kCheckpointVersion));
  }
  Checkpoint c;
  c.iteration = get<std::int64_t>(is, path);
  const auto n = get<std::uint64_t>(is, path);
  if (n > (1ULL << 32)) throw InputError("implausible parameter count in " + path.string());
  c.parameters = get_vector(is, n, path);
  c.adam.m = get_vector(is, n, path);
  c.adam.v = get_vector(is, n, path);
  c.adam.step = get<std::int64_t>(is, path);
  const auto len = get<std::uint64_t>(is, path);
  if (len > (1ULL << 30)) throw InputError("implausible config size in " + path.string());
  c.config_json.resize(len);
  if (!is.read(c.config_json.data(), static_cast<std::streamsize>(len))) {
    throw InputError("truncated checkpoint " + path.string());
  }
  return c;
}

}  // namespace partstyle
