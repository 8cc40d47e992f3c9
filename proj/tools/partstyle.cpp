#include <partstyle/partstyle.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>

using namespace partstyle;
using json = nlohmann::ordered_json;

namespace {

struct StylizeArgs {
  std::string config;
  std::string mesh;
  std::string parts;
  std::string prompt;
  std::string backend;
  std::string localizer;
  std::string grounding;
  std::string embedding;
  std::string mode;
  std::optional<int> iters;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<int> image_size;
  std::optional<int> snapshot_every;
  std::string server;
  std::string out;
  std::string resume;
  bool skip_renders = false;
};

/// Paths inside a config file are relative to the file.
std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty() || std::filesystem::path(path).is_absolute() || base.empty()) return path;
  return (base / path).string();
}

/// --backend names the model family for every role it can fill. The oracle
/// cannot score styled renders, so it only replaces the localizer.
void apply_backend(const std::string& key, TrainConfig& c) {
  if (key.empty()) return;
  if (key == "toy") {
    c.grounding = "toy";
    c.embedding = "toy";
  } else if (key == "oracle") {
    c.localizer = "oracle";
  } else if (key == "pretrained") {
    c.localizer = c.grounding = c.embedding = "pretrained";
  } else {
    throw InputError("unknown backend '" + key + "' (expected toy, oracle, or pretrained)");
  }
}

RunConfig build_run_config(const StylizeArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) {
    rc = load_run_config(a.config);
    const auto base = std::filesystem::path(a.config).parent_path();
    rc.mesh_path = resolve(rc.mesh_path, base);
    rc.parts_path = resolve(rc.parts_path, base);
  }
  if (!a.mesh.empty()) rc.mesh_path = a.mesh;
  if (!a.parts.empty()) rc.parts_path = a.parts;
  if (!a.prompt.empty()) rc.prompt = a.prompt;
  if (!a.out.empty()) rc.output_dir = a.out;
  TrainConfig& c = rc.train;
  apply_backend(a.backend, c);
  if (!a.localizer.empty()) c.localizer = a.localizer;
  if (!a.grounding.empty()) c.grounding = a.grounding;
  if (!a.embedding.empty()) c.embedding = a.embedding;
  if (!a.mode.empty()) c.mode = parse_train_mode(a.mode);
  if (a.iters) c.iterations = *a.iters;
  if (a.seed) c.seed = *a.seed;
  if (a.lr) c.learning_rate = *a.lr;
  if (a.image_size) c.image_size = *a.image_size;
  if (a.snapshot_every) c.snapshot_every = *a.snapshot_every;
  if (!a.server.empty()) c.backend.server_url = c.embedder.server_url = a.server;
  if (rc.mesh_path.empty()) throw InputError("no mesh given (--mesh or \"mesh\" in the config)");
  if (rc.parts_path.empty()) throw InputError("no parts file given (--parts or \"parts\" in the config)");
  if (rc.prompt.empty()) throw InputError("no prompt given (--prompt or \"prompt\" in the config)");
  if (rc.output_dir.empty()) rc.output_dir = "runs/" + std::filesystem::path(rc.mesh_path).stem().string();
  validate(c);
  return rc;
}

int cmd_stylize(const StylizeArgs& a) {
  const RunConfig rc = build_run_config(a);
  const PartitionedMesh mesh = load_mesh(rc.mesh_path, rc.parts_path);
  const PromptSpec prompt = parse_prompt(rc.prompt, mesh);
  RunOptions opts;
  opts.out_dir = rc.output_dir;
  opts.config_snapshot = to_json(rc);
  opts.skip_renders = a.skip_renders;
  if (!a.resume.empty()) opts.resume_from = a.resume;
  opts.on_step = [&](const StepReport& r, const Trainer&) {
    if ((r.iteration + 1) % 50 == 0 || r.iteration + 1 == rc.train.iterations) {
      spdlog::info("iter {:>5}  {:<10} loss {:.5f}", r.iteration + 1, to_string(r.kind), r.total);
    }
  };
  const RunArtifacts art = run(rc.train, mesh, prompt, opts);
  spdlog::info("final mesh hash {}", art.metadata.final_mesh_hash);
  std::cout << art.run_dir.string() << '\n';
  return 0;
}

struct FinetuneArgs {
  std::string mesh;
  std::string parts;
  std::string synonyms;
  std::string backend = "oracle";
  std::string vertex_colors;
  std::string vocabulary;
  std::string server;
  int azimuths = 8;
  std::vector<double> elevations{-kPi / 6.0, 0.0, kPi / 6.0};
  int image_size = 512;
  double distance = 2.5;
  int min_side = 10;
  int stride = 8;
  int epochs = 200;
  double lr = 0.05;
  std::string out = "finetune";
};

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// {"handle": ["grip", "holder"], ...}; added to the sidecar synonyms.
void merge_synonyms(PartitionedMesh& mesh, const std::string& path) {
  const json j = read_json_file(path);
  if (!j.is_object()) throw InputError("synonyms file must map part names to lists of phrases");
  mesh.part_synonyms.resize(mesh.part_names.size());
  for (const auto& [part, list] : j.items()) {
    const auto it = std::find(mesh.part_names.begin(), mesh.part_names.end(), part);
    if (it == mesh.part_names.end()) {
      throw InputError(fmt::format("synonyms file names unknown part '{}' (parts: {})", part,
                                   fmt::join(mesh.part_names, ", ")));
    }
    auto& dst = mesh.part_synonyms[static_cast<std::size_t>(it - mesh.part_names.begin())];
    for (const auto& s : list) {
      const auto phrase = s.get<std::string>();
      if (std::find(dst.begin(), dst.end(), phrase) == dst.end()) dst.push_back(phrase);
    }
  }
}

/// {"word": [r, g, b], ...}
ColorVocabulary read_vocabulary(const std::string& path) {
  const json j = read_json_file(path);
  std::map<std::string, Rgb> words;
  for (const auto& [word, rgb] : j.items()) {
    if (!rgb.is_array() || rgb.size() != 3) throw InputError("vocabulary entry '" + word + "' must be [r, g, b]");
    words[word] = Rgb(rgb[0].get<double>(), rgb[1].get<double>(), rgb[2].get<double>());
  }
  return ColorVocabulary(std::move(words));
}

json ap_json(const ApReport& r, const FinetuneDataset& ds) {
  json per = json::object();
  for (std::size_t p = 0; p < r.per_part.size(); ++p) {
    per[ds.part_names[p]] = r.per_part[p] ? json(*r.per_part[p]) : json(nullptr);
  }
  return {{"ap", r.ap}, {"per_part", per}, {"ground_truths", r.ground_truths}, {"detections", r.detections}};
}

int cmd_finetune(const FinetuneArgs& a) {
  PartitionedMesh mesh = load_mesh(a.mesh, a.parts);
  if (!a.synonyms.empty()) merge_synonyms(mesh, a.synonyms);
  const auto views = uniform_viewpoints(a.azimuths, a.elevations, a.distance, kPi / 3.0, a.image_size);
  DatasetOptions dopts;
  dopts.min_side = a.min_side;
  if (!a.vertex_colors.empty()) {
    const ColoredMesh colored = read_colored_ply(a.vertex_colors);
    if (colored.colors.rows() != mesh.vertex_count()) {
      throw InputError(fmt::format("'{}' has {} vertices, the mesh has {}", a.vertex_colors, colored.colors.rows(),
                                   mesh.vertex_count()));
    }
    dopts.vertex_colors = colored.colors;
  }
  const FinetuneDataset ds = generate_dataset(mesh, views, dopts);
  std::filesystem::create_directories(a.out);
  save_dataset(ds, std::filesystem::path(a.out) / "dataset");

  std::unique_ptr<GroundingBackend> backend;
  if (a.backend == "toy" && !a.vocabulary.empty()) {
    backend = std::make_unique<ToyGroundingBackend>(ToyOptions{a.stride, 4.0}, read_vocabulary(a.vocabulary));
  } else {
    BackendSettings s;
    s.stride = a.stride;
    s.oracle_min_side = a.min_side;
    s.server_url = a.server;
    backend = make_grounding_backend(a.backend, mesh, s);
  }

  const ApReport before = evaluate_ap(*backend, ds);
  const TuneResult tuned = tune_offsets(*backend, ds, TuneOptions{a.epochs, a.lr, 10.0});
  backend->set_prompt_offset(tuned.offset);
  const ApReport after = evaluate_ap(*backend, ds);

  const auto offsets_path = std::filesystem::path(a.out) / "offsets.psof";
  save_offsets(tuned.offset, mesh_id(mesh), backend->name(), offsets_path);
  json report{{"backend", backend->name()},
              {"samples", ds.samples.size()},
              {"before", ap_json(before, ds)},
              {"after", ap_json(after, ds)},
              {"loss_initial", tuned.losses.front()},
              {"loss_final", tuned.losses.back()},
              {"offsets", offsets_path.string()}};
  std::ofstream(std::filesystem::path(a.out) / "finetune_report.json") << report.dump(2) << '\n';
  fmt::print("samples    {}\nAP before  {:.4f}\nAP after   {:.4f}\noffsets    {}\n", ds.samples.size(), before.ap,
             after.ap, offsets_path.string());
  return 0;
}

struct StudyArgs {
  StylizeArgs base;
  int runs = 5;
  std::uint64_t seed_base = 0;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
};

int cmd_study(const StudyArgs& a) {
  StylizeArgs sa = a.base;
  const RunConfig rc = build_run_config(sa);
  const PartitionedMesh mesh = load_mesh(rc.mesh_path, rc.parts_path);
  const PromptSpec prompt = parse_prompt(rc.prompt, mesh);
  const auto seeds = a.seeds.empty() ? consecutive_seeds(a.runs, a.seed_base) : a.seeds;
  if (seeds.size() < 2) throw InputError("a study needs at least 2 runs");
  StudyOptions opts;
  opts.out_dir = rc.output_dir;
  opts.jobs = a.jobs;
  const ConsistencyReport report = consistency_study(rc.train, mesh, prompt, seeds, opts);
  std::filesystem::create_directories(rc.output_dir);
  const auto path = std::filesystem::path(rc.output_dir) / "study_report.json";
  std::ofstream(path) << to_json(report) << '\n';
  std::cout << summary_table(report) << "report: " << path.string() << '\n';
  int failed = 0;
  for (const auto& r : report.runs) failed += r.ok ? 0 : 1;
  return failed == static_cast<int>(report.runs.size()) ? 1 : 0;
}

int cmd_metrics(const std::string& a_path, const std::string& b_path, bool as_json) {
  const Image a = read_png(a_path);
  const Image b = read_png(b_path);
  const ImageMetrics m = image_metrics(a, b);
  if (as_json) {
    json j{{"mse", m.mse}, {"psnr", m.psnr}, {"ssim", m.ssim}, {"perceptual", nullptr}};
    std::cout << j.dump(2) << '\n';
  } else {
    fmt::print("mse         {:.6g}\npsnr        {:.4f}{}\nssim        {:.6f}\nperceptual  not configured\n", m.mse,
               m.psnr, m.psnr == kPsnrCap ? " (cap: identical images)" : "", m.ssim);
  }
  return 0;
}

void add_train_flags(CLI::App* sub, StylizeArgs& a) {
  sub->add_option("--config", a.config, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  sub->add_option("--mesh", a.mesh, "OBJ mesh");
  sub->add_option("--parts", a.parts, "parts sidecar JSON");
  sub->add_option("--prompt", a.prompt, "phrasal pairs, e.g. \"wood handle, pottery body\"");
  sub->add_option("--backend", a.backend, "toy, oracle, or pretrained");
  sub->add_option("--localizer", a.localizer, "backend that localizes parts on content renders");
  sub->add_option("--grounding", a.grounding, "backend that scores styled renders");
  sub->add_option("--embedding", a.embedding, "toy or pretrained");
  sub->add_option("--mode", a.mode, "full, no-embedding, or no-grounding");
  sub->add_option("--iters", a.iters, "training iterations");
  sub->add_option("--seed", a.seed, "random seed");
  sub->add_option("--lr", a.lr, "Adam learning rate");
  sub->add_option("--image-size", a.image_size, "render size in pixels");
  sub->add_option("--snapshot-every", a.snapshot_every, "checkpoint interval");
  sub->add_option("--server", a.server, "model server URL for pretrained backends");
  sub->add_option("--out", a.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Part-level text-driven mesh stylization"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  StylizeArgs stylize;
  auto* s = app.add_subcommand("stylize", "train a style field for a prompt");
  add_train_flags(s, stylize);
  s->add_option("--resume", stylize.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  s->add_flag("--skip-renders", stylize.skip_renders, "do not write PNG renders");

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "tune prompt offsets on a rendered box dataset");
  f->add_option("--mesh", ft.mesh, "OBJ mesh")->required();
  f->add_option("--parts", ft.parts, "parts sidecar JSON")->required();
  f->add_option("--synonyms", ft.synonyms, "JSON map of part name to extra phrases");
  f->add_option("--backend", ft.backend, "toy, oracle, or pretrained")->capture_default_str();
  f->add_option("--vertex-colors", ft.vertex_colors, "PLY whose vertex colors paint the renders");
  f->add_option("--vocabulary", ft.vocabulary, "toy backend word table, {\"word\": [r, g, b]}");
  f->add_option("--server", ft.server, "model server URL for the pretrained backend");
  f->add_option("--azimuths", ft.azimuths, "viewpoints per elevation")->capture_default_str();
  f->add_option("--elevations", ft.elevations, "elevations in radians");
  f->add_option("--image-size", ft.image_size, "render size in pixels")->capture_default_str();
  f->add_option("--min-side", ft.min_side, "smallest box side kept")->capture_default_str();
  f->add_option("--stride", ft.stride, "backend grid stride")->capture_default_str();
  f->add_option("--epochs", ft.epochs, "Adam epochs")->capture_default_str();
  f->add_option("--lr", ft.lr, "Adam learning rate")->capture_default_str();
  f->add_option("--out", ft.out, "output directory")->capture_default_str();

  StudyArgs st;
  auto* y = app.add_subcommand("study", "seed-consistency study");
  add_train_flags(y, st.base);
  y->add_option("--runs", st.runs, "number of runs with consecutive seeds")->capture_default_str();
  y->add_option("--seed-base", st.seed_base, "first seed")->capture_default_str();
  y->add_option("--seeds", st.seeds, "explicit seed list (overrides --runs)");
  y->add_option("--jobs", st.jobs, "concurrent runs")->capture_default_str();

  std::string img_a;
  std::string img_b;
  bool metrics_json = false;
  auto* m = app.add_subcommand("metrics", "compare two PNG images");
  m->add_option("a", img_a, "first image")->required()->check(CLI::ExistingFile);
  m->add_option("b", img_b, "second image")->required()->check(CLI::ExistingFile);
  m->add_flag("--json", metrics_json, "print JSON");

  std::string obj;
  std::string parts_out;
  std::string default_part = "body";
  auto* g = app.add_subcommand("convert-groups", "write a parts sidecar from OBJ g/o groups");
  g->add_option("obj", obj, "OBJ mesh with groups")->required();
  g->add_option("parts", parts_out, "parts JSON to write")->required();
  g->add_option("--default-part", default_part, "part for faces before any group")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  try {
    if (*s) return cmd_stylize(stylize);
    if (*f) return cmd_finetune(ft);
    if (*y) return cmd_study(st);
    if (*m) return cmd_metrics(img_a, img_b, metrics_json);
    if (*g) {
      convert_obj_groups(obj, parts_out, default_part);
      std::cout << parts_out << '\n';
      return 0;
    }
  } catch (const LocalizationFailure& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const InputError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
