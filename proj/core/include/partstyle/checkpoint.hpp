#pragma once

#include "partstyle/common.hpp"
#include "partstyle/optimizer.hpp"

#include <filesystem>
#include <string>

namespace partstyle {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to continue a run: field parameters, optimizer moments,
/// the number of completed iterations, and the run configuration as JSON.
struct Checkpoint {
  std::int64_t iteration = 0;
  Eigen::VectorXd parameters;
  AdamState adam;
  std::string config_json;

  bool operator==(const Checkpoint&) const = default;
};

/// Raised when a checkpoint cannot be written; carries the state so the
/// caller can keep or dump it.
class CheckpointWriteError : public Error {
 public:
  CheckpointWriteError(const std::string& what, Checkpoint state) : Error(what), state_(std::move(state)) {}
  [[nodiscard]] const Checkpoint& state() const { return state_; }

 private:
  Checkpoint state_;
};

/// Binary layout (little-endian): "PSCK", u32 version, i64 iteration,
/// u64 n + n f64 parameters, n f64 m, n f64 v, i64 Adam step,
/// u64 length + bytes of config JSON. Written to a temporary file and
/// renamed into place.
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace partstyle
