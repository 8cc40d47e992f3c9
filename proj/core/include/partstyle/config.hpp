#pragma once

#include "partstyle/trainer.hpp"

#include <filesystem>
#include <string>

namespace partstyle {

/// Everything a stylization run needs, as stored in a JSON config file.
///
/// Layout (every key optional, unknown keys rejected):
///   {
///     "mesh": "kettle.obj", "parts": "kettle.parts.json",
///     "prompt": "wood handle, pottery body", "output_dir": "runs/kettle",
///     "training": {"iterations", "learning_rate", "alternation_block", "seed",
///                  "sampled_views", "view_sigma", "snapshot_every", "mode"},
///     "views":    {"anchor_azimuths", "anchor_elevations", "turntable_views"},
///     "render":   {"image_size", "camera_distance", "fov", "background"},
///     "backends": {"localizer", "grounding", "embedding", "stride", "toy_gain",
///                  "oracle_gain", "oracle_min_side", "embedder_input_size",
///                  "embedder_gain", "server_url", "weights_path",
///                  "model_config_path"},
///     "field":    {"num_frequencies", "frequency_scale", "hidden_width", "depth"},
///     "loss":     {"threshold", "target_value", "distance", "crop_pad",
///                  "n_global_augs", "n_local_augs", "min_local_fraction",
///                  "perspective_strength"}
///   }
/// Angles are radians. The field is seeded from training.seed, so
/// TrainConfig::field.seed is not serialized.
struct RunConfig {
  std::string mesh_path;
  std::string parts_path;
  std::string prompt;
  std::string output_dir;
  TrainConfig train;

  bool operator==(const RunConfig&) const = default;
};

std::string to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

/// The "training"…"loss" sections only.
std::string to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

/// 16 hex digits of FNV-1a over the text.
std::string hash_hex(const std::string& text);

}  // namespace partstyle
