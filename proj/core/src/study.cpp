#include "partstyle/study.hpp"

#include "partstyle/render.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <future>

namespace partstyle {

std::vector<std::uint64_t> consecutive_seeds(int n, std::uint64_t base) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(base + static_cast<std::uint64_t>(i));
  return out;
}

namespace {

MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary s;
  s.count = static_cast<int>(v.size());
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

}  // namespace

ConsistencyReport consistency_study(const TrainConfig& config, const PartitionedMesh& mesh,
                                    const PromptSpec& prompt, std::span<const std::uint64_t> seeds,
                                    const StudyOptions& options) {
  if (seeds.size() < 2) throw InputError("a consistency study needs at least two runs");
  ConsistencyReport report;
  if (options.perceptual) report.perceptual_name = options.perceptual->name;
  {
    TrainConfig first = config;
    first.seed = seeds[0];
    Trainer probe(first, mesh, prompt);
    probe.select_anchor();
    report.anchor = *probe.anchor();
  }
  const RenderOptions ropts{config.background};

  auto one = [&](std::size_t i) {
    StudyRun r;
    r.seed = seeds[i];
    TrainConfig c = config;
    c.seed = seeds[i];
    RunOptions ro;
    ro.anchor = report.anchor;
    if (!options.out_dir.empty()) {
      r.run_dir = options.out_dir / fmt::format("run_{:03d}_seed_{}", i, seeds[i]);
      ro.out_dir = r.run_dir;
    }
    try {
      const RunArtifacts art = run(c, mesh, prompt, ro);
      r.final_mesh_hash = art.metadata.final_mesh_hash;
      r.render = render(art.final_mesh, report.anchor, ropts).pixels;
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
      spdlog::warn("study run {} (seed {}) failed: {}", i, seeds[i], e.what());
    }
    return r;
  };

  report.runs.resize(seeds.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, options.jobs));
  for (std::size_t start = 0; start < seeds.size(); start += jobs) {
    std::vector<std::future<StudyRun>> batch;
    for (std::size_t i = start; i < std::min(seeds.size(), start + jobs); ++i) {
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, one, i));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) report.runs[start + k] = batch[k].get();
  }

  std::vector<double> mses, psnrs, ssims, perceptuals;
  for (std::size_t a = 0; a < report.runs.size(); ++a) {
    for (std::size_t b = a + 1; b < report.runs.size(); ++b) {
      if (!report.runs[a].ok || !report.runs[b].ok) continue;
      StudyPair p{static_cast<int>(a), static_cast<int>(b),
                  image_metrics(report.runs[a].render, report.runs[b].render, options.perceptual)};
      mses.push_back(p.metrics.mse);
      psnrs.push_back(p.metrics.psnr);
      ssims.push_back(p.metrics.ssim);
      if (p.metrics.perceptual) perceptuals.push_back(*p.metrics.perceptual);
      report.pairs.push_back(p);
    }
  }
  report.summary["mse"] = summarize(mses);
  report.summary["psnr"] = summarize(psnrs);
  report.summary["ssim"] = summarize(ssims);
  if (options.perceptual) report.summary["perceptual"] = summarize(perceptuals);
  return report;
}

std::string to_json(const ConsistencyReport& r) {
  using json = nlohmann::ordered_json;
  json j;
  j["anchor"] = {{"azimuth", r.anchor.azimuth},
                 {"elevation", r.anchor.elevation},
                 {"distance", r.anchor.distance},
                 {"fov", r.anchor.fov},
                 {"image_size", r.anchor.image_size}};
  j["runs"] = json::array();
  for (const auto& run : r.runs) {
    json e{{"seed", run.seed}, {"ok", run.ok}};
    if (run.ok) e["final_mesh_hash"] = run.final_mesh_hash;
    if (!run.error.empty()) e["error"] = run.error;
    if (!run.run_dir.empty()) e["run_dir"] = run.run_dir.string();
    j["runs"].push_back(e);
  }
  j["pairs"] = json::array();
  for (const auto& p : r.pairs) {
    json e{{"a", p.a},
           {"b", p.b},
           {"seed_a", r.runs[static_cast<std::size_t>(p.a)].seed},
           {"seed_b", r.runs[static_cast<std::size_t>(p.b)].seed},
           {"mse", p.metrics.mse},
           {"psnr", p.metrics.psnr},
           {"ssim", p.metrics.ssim}};
    if (p.metrics.perceptual) e["perceptual"] = *p.metrics.perceptual;
    j["pairs"].push_back(e);
  }
  for (const auto& [name, s] : r.summary) {
    j["summary"][name] = {{"mean", s.mean}, {"std", s.stddev}, {"pairs", s.count}};
  }
  j["psnr_cap_db"] = kPsnrCap;
  j["perceptual"] = r.perceptual_name.empty()
                        ? json{{"available", false}, {"note", "no perceptual metric configured"}}
                        : json{{"available", true}, {"name", r.perceptual_name}};
  return j.dump(2);
}

std::string summary_table(const ConsistencyReport& r) {
  int ok = 0;
  for (const auto& run : r.runs) ok += run.ok ? 1 : 0;
  std::string out = fmt::format("runs: {} ({} ok), pairs: {}\n", r.runs.size(), ok, r.pairs.size());
  out += fmt::format("{:<12} {:>14} {:>14}\n", "metric", "mean", "std");
  const char* order[] = {"mse", "psnr", "ssim", "perceptual"};
  for (const char* name : order) {
    auto it = r.summary.find(name);
    if (it == r.summary.end()) continue;
    out += fmt::format("{:<12} {:>14.6f} {:>14.6f}\n", name, it->second.mean, it->second.stddev);
  }
  if (r.perceptual_name.empty()) out += "perceptual   (not configured)\n";
  return out;
}

}  // namespace partstyle
