#include "fixtures.hpp"

#include <partstyle/rng.hpp>
#include <partstyle/study.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>

using namespace partstyle;

namespace {

Image noise(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// Direct per-window SSIM: 11×11 Gaussian window (σ 1.5), mean over valid
// window positions and channels.
double reference_ssim(const Image& a, const Image& b) {
  double w[11][11];
  double total = 0.0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      total += w[i][j];
    }
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  int n = 0;
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y + 11 <= a.height; ++y) {
      for (int x = 0; x + 11 <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double k = w[i][j] / total;
            const double va = a.at(x + j, y + i, ch), vb = b.at(x + j, y + i, ch);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++n;
      }
    }
  }
  return sum / n;
}

TEST(Metrics, IdenticalImages) {
  const Image a = noise(24, 20, 1);
  const ImageMetrics m = image_metrics(a, a);
  EXPECT_EQ(m.mse, 0.0);
  EXPECT_EQ(m.psnr, kPsnrCap);
  EXPECT_NEAR(m.ssim, 1.0, 1e-12);
  EXPECT_FALSE(m.perceptual);
}

TEST(Metrics, BlackVersusWhite) {
  const Image black(16, 16, Rgb::Zero());
  const Image white(16, 16, Rgb::Ones());
  EXPECT_EQ(mse(black, white), 1.0);
  EXPECT_EQ(psnr(black, white), 0.0);
  EXPECT_LT(ssim(black, white), 1e-3);
}

TEST(Metrics, KnownMse) {
  const Image a(8, 8, Rgb::Constant(0.5));
  const Image b(8, 8, Rgb::Constant(0.6));
  EXPECT_NEAR(mse(a, b), 0.01, 1e-15);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Metrics, SsimMatchesDirectWindowSum) {
  const Image a = noise(20, 17, 2);
  Image b = a;
  Rng rng(3);
  for (double& v : b.data) v = std::clamp(v + 0.2 * rng.normal(), 0.0, 1.0);
  EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-10);
}

TEST(Metrics, SymmetricAndBounded) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image a = noise(16, 16, 2 * s);
    const Image b = noise(16, 16, 2 * s + 1);
    EXPECT_EQ(mse(a, b), mse(b, a));
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-14);
    EXPECT_GE(ssim(a, b), -1.0);
    EXPECT_LE(ssim(a, b), 1.0);
    EXPECT_GE(psnr(a, b), 0.0);
  }
}

TEST(Metrics, PsnrFallsWithNoise) {
  const Image a = noise(16, 16, 4);
  double prev = kPsnrCap;
  for (double amp : {0.01, 0.05, 0.1, 0.3}) {
    Image b = a;
    for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += (i % 2 ? amp : -amp);
    const double p = psnr(a, b);
    EXPECT_LT(p, prev);
    EXPECT_NEAR(p, -10.0 * std::log10(amp * amp), 1e-9);
    prev = p;
  }
}

TEST(Metrics, SmallImagesUseOneWindow) {
  const Image a = noise(5, 4, 5);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_LT(ssim(a, noise(5, 4, 6)), 1.0);
}

TEST(Metrics, DimensionMismatchThrows) {
  EXPECT_THROW(image_metrics(Image(4, 4), Image(4, 5)), InputError);
}

TEST(Metrics, PerceptualPlugin) {
  const PerceptualMetric l1{"l1", [](const Image& a, const Image& b) {
                              double s = 0.0;
                              for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
                              return s;
                            }};
  const ImageMetrics m = image_metrics(Image(2, 2, Rgb::Zero()), Image(2, 2, Rgb::Ones()), &l1);
  ASSERT_TRUE(m.perceptual);
  EXPECT_EQ(*m.perceptual, 12.0);
}

TEST(Study, SeedsAndPairs) {
  EXPECT_EQ(consecutive_seeds(3, 5), (std::vector<std::uint64_t>{5, 6, 7}));
  TrainConfig c;
  c.iterations = 3;
  c.image_size = 64;
  c.snapshot_every = 3;
  c.anchor_azimuths = 2;
  c.anchor_elevations = {0.0};
  c.sampled_views = 1;
  c.field.hidden_width = 16;
  c.field.depth = 2;
  c.loss.n_global_augs = 1;
  c.loss.n_local_augs = 1;
  c.embedder.input_size = 8;
  const PartitionedMesh m = fixtures::body_handle(8, 12);
  const PromptSpec p = parse_prompt("red body, blue handle", m);
  const std::vector<std::uint64_t> seeds{0, 1, 2, 0};
  StudyOptions o;
  o.jobs = 2;
  const ConsistencyReport r = consistency_study(c, m, p, seeds, o);
  ASSERT_EQ(r.runs.size(), 4u);
  ASSERT_EQ(r.pairs.size(), 6u);
  for (const auto& run : r.runs) EXPECT_TRUE(run.ok) << run.error;
  EXPECT_EQ(r.runs[0].final_mesh_hash, r.runs[3].final_mesh_hash);
  EXPECT_NE(r.runs[0].final_mesh_hash, r.runs[1].final_mesh_hash);
  for (const auto& pair : r.pairs) {
    EXPECT_LT(pair.a, pair.b);
    if (pair.a == 0 && pair.b == 3) {
      EXPECT_EQ(pair.metrics.mse, 0.0);
    }
  }
  double mean = 0.0, var = 0.0;
  for (const auto& pair : r.pairs) mean += pair.metrics.ssim / 6.0;
  for (const auto& pair : r.pairs) var += (pair.metrics.ssim - mean) * (pair.metrics.ssim - mean) / 6.0;
  EXPECT_NEAR(r.summary.at("ssim").mean, mean, 1e-12);
  EXPECT_NEAR(r.summary.at("ssim").stddev, std::sqrt(var), 1e-12);
  EXPECT_EQ(r.summary.at("mse").count, 6);
  EXPECT_FALSE(r.summary.count("perceptual"));

  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_EQ(j["pairs"].size(), 6u);
  EXPECT_EQ(j["runs"].size(), 4u);
  EXPECT_NE(summary_table(r).find("psnr"), std::string::npos);
}

}  // namespace
