#include "partstyle/config.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace partstyle {

using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InputError(fmt::format("config section '{}' must be an object", where));
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) {
      throw InputError(fmt::format("unknown config key '{}{}'", where.empty() ? "" : where + ".", key));
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(fmt::format("config key '{}.{}' has the wrong type: {}", where, key, e.what()));
  }
}

json train_json(const TrainConfig& c) {
  json j;
  j["training"] = {{"iterations", c.iterations},
                   {"learning_rate", c.learning_rate},
                   {"alternation_block", c.alternation_block},
                   {"seed", c.seed},
                   {"sampled_views", c.sampled_views},
                   {"view_sigma", c.view_sigma},
                   {"snapshot_every", c.snapshot_every},
                   {"mode", to_string(c.mode)}};
  j["views"] = {{"anchor_azimuths", c.anchor_azimuths},
                {"anchor_elevations", c.anchor_elevations},
                {"turntable_views", c.turntable_views}};
  j["render"] = {{"image_size", c.image_size},
                 {"camera_distance", c.camera_distance},
                 {"fov", c.fov},
                 {"background", {c.background[0], c.background[1], c.background[2]}}};
  j["backends"] = {{"localizer", c.localizer},
                   {"grounding", c.grounding},
                   {"embedding", c.embedding},
                   {"stride", c.backend.stride},
                   {"toy_gain", c.backend.toy_gain},
                   {"oracle_gain", c.backend.oracle_gain},
                   {"oracle_min_side", c.backend.oracle_min_side},
                   {"embedder_input_size", c.embedder.input_size},
                   {"embedder_gain", c.embedder.toy_gain},
                   {"server_url", c.backend.server_url},
                   {"weights_path", c.backend.weights_path},
                   {"model_config_path", c.backend.model_config_path}};
  j["field"] = {{"num_frequencies", c.field.num_frequencies},
                {"frequency_scale", c.field.frequency_scale},
                {"hidden_width", c.field.hidden_width},
                {"depth", c.field.depth}};
  j["loss"] = {{"threshold", c.loss.threshold},
               {"target_value", c.loss.target_value},
               {"distance", to_string(c.loss.distance)},
               {"crop_pad", c.loss.crop_pad},
               {"n_global_augs", c.loss.n_global_augs},
               {"n_local_augs", c.loss.n_local_augs},
               {"min_local_fraction", c.loss.min_local_fraction},
               {"perspective_strength", c.loss.perspective_strength}};
  return j;
}

void read_train(const json& j, TrainConfig& c) {
  if (j.contains("training")) {
    const auto& t = j["training"];
    check_keys(t, "training",
               {"iterations", "learning_rate", "alternation_block", "seed", "sampled_views", "view_sigma",
                "snapshot_every", "mode"});
    read(t, "iterations", c.iterations, "training");
    read(t, "learning_rate", c.learning_rate, "training");
    read(t, "alternation_block", c.alternation_block, "training");
    read(t, "seed", c.seed, "training");
    read(t, "sampled_views", c.sampled_views, "training");
    read(t, "view_sigma", c.view_sigma, "training");
    read(t, "snapshot_every", c.snapshot_every, "training");
    std::string mode = to_string(c.mode);
    read(t, "mode", mode, "training");
    c.mode = parse_train_mode(mode);
  }
  if (j.contains("views")) {
    const auto& v = j["views"];
    check_keys(v, "views", {"anchor_azimuths", "anchor_elevations", "turntable_views"});
    read(v, "anchor_azimuths", c.anchor_azimuths, "views");
    read(v, "anchor_elevations", c.anchor_elevations, "views");
    read(v, "turntable_views", c.turntable_views, "views");
  }
  if (j.contains("render")) {
    const auto& r = j["render"];
    check_keys(r, "render", {"image_size", "camera_distance", "fov", "background"});
    read(r, "image_size", c.image_size, "render");
    read(r, "camera_distance", c.camera_distance, "render");
    read(r, "fov", c.fov, "render");
    if (r.contains("background")) {
      std::vector<double> bg;
      read(r, "background", bg, "render");
      if (bg.size() != 3) throw InputError("render.background must have 3 entries");
      c.background = Rgb(bg[0], bg[1], bg[2]);
    }
  }
  if (j.contains("backends")) {
    const auto& b = j["backends"];
    check_keys(b, "backends",
               {"localizer", "grounding", "embedding", "stride", "toy_gain", "oracle_gain", "oracle_min_side",
                "embedder_input_size", "embedder_gain", "server_url", "weights_path", "model_config_path"});
    read(b, "localizer", c.localizer, "backends");
    read(b, "grounding", c.grounding, "backends");
    read(b, "embedding", c.embedding, "backends");
    read(b, "stride", c.backend.stride, "backends");
    read(b, "toy_gain", c.backend.toy_gain, "backends");
    read(b, "oracle_gain", c.backend.oracle_gain, "backends");
    read(b, "oracle_min_side", c.backend.oracle_min_side, "backends");
    read(b, "embedder_input_size", c.embedder.input_size, "backends");
    read(b, "embedder_gain", c.embedder.toy_gain, "backends");
    read(b, "server_url", c.backend.server_url, "backends");
    read(b, "weights_path", c.backend.weights_path, "backends");
    read(b, "model_config_path", c.backend.model_config_path, "backends");
  }
  // Both adapters talk to the same model server.
  c.embedder.server_url = c.backend.server_url;
  c.embedder.weights_path = c.backend.weights_path;
  c.embedder.model_config_path = c.backend.model_config_path;
  if (j.contains("field")) {
    const auto& f = j["field"];
    check_keys(f, "field", {"num_frequencies", "frequency_scale", "hidden_width", "depth"});
    read(f, "num_frequencies", c.field.num_frequencies, "field");
    read(f, "frequency_scale", c.field.frequency_scale, "field");
    read(f, "hidden_width", c.field.hidden_width, "field");
    read(f, "depth", c.field.depth, "field");
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    check_keys(l, "loss",
               {"threshold", "target_value", "distance", "crop_pad", "n_global_augs", "n_local_augs",
                "min_local_fraction", "perspective_strength"});
    read(l, "threshold", c.loss.threshold, "loss");
    read(l, "target_value", c.loss.target_value, "loss");
    std::string distance = to_string(c.loss.distance);
    read(l, "distance", distance, "loss");
    c.loss.distance = parse_distance_kind(distance);
    read(l, "crop_pad", c.loss.crop_pad, "loss");
    read(l, "n_global_augs", c.loss.n_global_augs, "loss");
    read(l, "n_local_augs", c.loss.n_local_augs, "loss");
    read(l, "min_local_fraction", c.loss.min_local_fraction, "loss");
    read(l, "perspective_strength", c.loss.perspective_strength, "loss");
  }
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(fmt::format("config is not valid JSON: {}", e.what()));
  }
}

}  // namespace

std::string to_json(const TrainConfig& config) { return train_json(config).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse(text);
  check_keys(j, "", {"training", "views", "render", "backends", "field", "loss"});
  TrainConfig c;
  read_train(j, c);
  return c;
}

std::string to_json(const RunConfig& config) {
  json j;
  j["mesh"] = config.mesh_path;
  j["parts"] = config.parts_path;
  j["prompt"] = config.prompt;
  j["output_dir"] = config.output_dir;
  const json train = train_json(config.train);
  for (const auto& [k, v] : train.items()) j[k] = v;
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse(text);
  check_keys(j, "",
             {"mesh", "parts", "prompt", "output_dir", "training", "views", "render", "backends", "field", "loss"});
  RunConfig c;
  read(j, "mesh", c.mesh_path, "");
  read(j, "parts", c.parts_path, "");
  read(j, "prompt", c.prompt, "");
  read(j, "output_dir", c.output_dir, "");
  read_train(j, c.train);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return run_config_from_json(ss.str());
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << to_json(config) << '\n';
}

std::string hash_hex(const std::string& text) { return fmt::format("{:016x}", fnv1a(text)); }

}  // namespace partstyle
