#pragma once

#include "partstyle/metrics.hpp"
#include "partstyle/trainer.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace partstyle {

struct StudyRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::string final_mesh_hash;
  std::filesystem::path run_dir;
  Image render;  // final mesh from the shared anchor
};

struct StudyPair {
  int a = 0;
  int b = 0;
  ImageMetrics metrics;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over pairs
  int count = 0;
};

struct ConsistencyReport {
  Camera anchor;
  std::vector<StudyRun> runs;
  std::vector<StudyPair> pairs;  // successful runs only, a < b
  std::map<std::string, MetricSummary> summary;  // mse, psnr, ssim[, perceptual]
  std::string perceptual_name;  // empty when no perceptual metric was given
};

struct StudyOptions {
  /// Per-run directories are created below this when non-empty.
  std::filesystem::path out_dir;
  const PerceptualMetric* perceptual = nullptr;
  /// Runs executed concurrently.
  int jobs = 1;
};

/// seeds[0], …: `base`, `base + 1`, ….
std::vector<std::uint64_t> consecutive_seeds(int n, std::uint64_t base = 0);

/// Trains one stylization per seed (all else equal), renders each final mesh
/// from one anchor chosen before the first run, and compares every pair of
/// successful runs. Failed runs are recorded and excluded from pairs.
ConsistencyReport consistency_study(const TrainConfig& config, const PartitionedMesh& mesh,
                                    const PromptSpec& prompt, std::span<const std::uint64_t> seeds,
                                    const StudyOptions& options = {});

std::string to_json(const ConsistencyReport& report);
/// Plain-text table of per-metric mean and standard deviation.
std::string summary_table(const ConsistencyReport& report);

}  // namespace partstyle
