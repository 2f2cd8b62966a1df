#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hatebm/data.hpp"
#include "hatebm/error.hpp"
#include "hatebm/eval.hpp"
#include "oracles.hpp"

using namespace hatebm;
using namespace hatebm::testing;

namespace {

GaussianStats stats(std::vector<double> mean, double diag) {
  GaussianStats s;
  const std::size_t k = mean.size();
  s.mean = std::move(mean);
  s.cov.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) s.cov[i * k + i] = diag;
  s.count = 100;
  return s;
}

GaussianStats random_stats(std::size_t k, std::uint64_t seed) {
  Tensor f = random_tensor({40, k}, seed);
  // Correlate coordinates.
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 1; j < k; ++j) f.sample(i)[j] += 0.5 * f.sample(i)[j - 1];
  }
  return gaussian_stats(f);
}

}  // namespace

TEST(Frechet, AnalyticCases) {
  GaussianStats a = random_stats(5, 1);
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-6);
  EXPECT_NEAR(frechet_distance(stats({2, 0, 0}, 1), stats({0, 0, 0}, 1)), 4.0, 1e-6);
  EXPECT_NEAR(frechet_distance(stats(std::vector<double>(8, 0), 4), stats(std::vector<double>(8, 0), 1)), 8.0, 1e-6);
  EXPECT_THROW(frechet_distance(stats({0, 0}, 1), stats({0}, 1)), Error);
}

TEST(Frechet, SymmetricAndNonNegative) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    GaussianStats a = random_stats(4, s), b = random_stats(4, s + 50);
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-9 * std::max(1.0, ab));
  }
}

// 1-D: (mu_a - mu_b)^2 + (s_a - s_b)^2 in terms of standard deviations.
TEST(Frechet, OneDimensionalClosedForm) {
  GaussianStats a = stats({1.5}, 9.0), b = stats({-0.5}, 0.25);
  EXPECT_NEAR(frechet_distance(a, b), 4.0 + 2.5 * 2.5, 1e-9);
}

TEST(GaussianStats, Examples) {
  GaussianStats two = gaussian_stats(Tensor({2, 1}, std::vector<double>{1, -1}));
  EXPECT_EQ(two.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(two.cov[0], 2.0);
  GaussianStats c = gaussian_stats(Tensor({5, 2}, 3.0));
  for (double v : c.cov) EXPECT_EQ(v, 0.0);
  GaussianStats big = gaussian_stats(random_tensor({20000, 4}, 3));
  double diff = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = big.cov[i * 4 + j] - (i == j ? 1.0 : 0.0);
      diff += d * d;
    }
  }
  EXPECT_LT(std::sqrt(diff), 0.05 * 2.0);
  EXPECT_THROW(gaussian_stats(Tensor({1, 3})), Error);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(big.cov[i * 4 + j], big.cov[j * 4 + i], 1e-8);
  }
}

TEST(Auroc, Examples) {
  EXPECT_EQ(ood_auroc({{0, 1, 2}, "in"}, {{3, 4}, "out"}), 1.0);
  EXPECT_EQ(ood_auroc({{0, 1, 1, 5}, "in"}, {{5, 1, 0, 1}, "out"}), 0.5);
  EXPECT_EQ(ood_auroc({{0, 1}, "in"}, {{0.5, 2}, "out"}), 0.75);
  EXPECT_THROW(ood_auroc({{}, "in"}, {{1}, "out"}), Error);
}

TEST(Auroc, MatchesPairCountingOnAllSmallSets) {
  // Every pair of score multisets over {0, 1, 2} with sizes 1..3.
  std::vector<std::vector<double>> sets;
  for (std::size_t n = 1; n <= 3; ++n) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<double> v;
      std::size_t c = code;
      for (std::size_t i = 0; i < n; ++i, c /= 3) v.push_back(static_cast<double>(c % 3));
      sets.push_back(v);
    }
  }
  for (const auto& a : sets) {
    for (const auto& b : sets) {
      const double x = ood_auroc({a, "in"}, {b, "out"});
      EXPECT_NEAR(x, auroc_pairs(a, b), 1e-15);
      EXPECT_EQ(x + ood_auroc({b, "in"}, {a, "out"}), 1.0);
    }
  }
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  Tensor a = random_tensor({50}, 1), b = random_tensor({60}, 2);
  std::vector<double> va(a.values().begin(), a.values().end()), vb(b.values().begin(), b.values().end());
  const double base = ood_auroc({va, "in"}, {vb, "out"});
  for (auto& v : va) v = std::exp(3 * v) + 1;
  for (auto& v : vb) v = std::exp(3 * v) + 1;
  EXPECT_EQ(ood_auroc({va, "in"}, {vb, "out"}), base);
}

TEST(Auroc, ScoreCsvRoundTrip) {
  std::vector<ScoreSet> sets{{{0.5, -1.25, 1.0 / 3}, "in-distribution"}, {{2, 3}, "builtin:stripes"}};
  auto p = std::filesystem::temp_directory_path() / "hatebm_test_scores.csv";
  write_scores_csv(p, sets);
  auto back = read_scores_csv(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].scores, sets[0].scores);
  EXPECT_EQ(back[1].tag, "builtin:stripes");
  EXPECT_EQ(ood_auroc(back[0], back[1]), ood_auroc(sets[0], sets[1]));
}

TEST(GapMonitor, ZeroGapNeverFlags) {
  std::vector<MetricRow> log(200);
  for (std::size_t i = 0; i < log.size(); ++i) log[i].step = i;
  GapReport r = energy_gap_monitor(log);
  EXPECT_FALSE(r.diverged());
  for (double g : r.gap) EXPECT_EQ(g, 0.0);
}

TEST(GapMonitor, FlagsAtFirstFullWindow) {
  std::vector<MetricRow> log(300);
  for (std::size_t i = 0; i < log.size(); ++i) {
    log[i].step = i + 1;
    log[i].pos_energy = 2.0 * static_cast<double>(i);
    log[i].neg_energy = 0.0;
  }
  // |gap| > 100 from row 51 on; the 50-row window fills at row 100.
  GapReport r = energy_gap_monitor(log);
  ASSERT_TRUE(r.diverged());
  EXPECT_EQ(*r.flag_index, 100u);
  EXPECT_EQ(*r.flag_step, 101u);
  GapMonitorConfig c{300.0, 10};
  EXPECT_EQ(*energy_gap_monitor(log, c).flag_index, 160u);
}

TEST(GapMonitor, ReplayedCsvEqualsLive) {
  std::vector<MetricRow> log(120);
  Rng r(3);
  for (std::size_t i = 0; i < log.size(); ++i) {
    log[i].step = i;
    log[i].pos_energy = 150 * r.normal();
    log[i].neg_energy = 150 * r.normal();
    log[i].energy_gap = log[i].pos_energy - log[i].neg_energy;
  }
  auto p = std::filesystem::temp_directory_path() / "hatebm_test_gap.csv";
  write_metric_log(p, log);
  GapReport live = energy_gap_monitor(log, {100, 3}), replay = energy_gap_monitor(read_metric_log(p), {100, 3});
  EXPECT_EQ(live.gap, replay.gap);
  EXPECT_EQ(live.flag_index, replay.flag_index);
}

TEST(Grid, LayoutAndQuantization) {
  Tensor imgs = builtin_images("discs", {4, 5, 3}, "train", 3);
  Image8 one = make_grid(imgs.gather(std::vector<std::size_t>{0}), 1, 1);
  for (std::size_t k = 0; k < one.pixels.size(); ++k) {
    EXPECT_LE(std::abs(normalize_pixel(one.pixels[k]) - imgs[k]), 1.0 / 255 + 1e-12);
  }
  Image8 g = make_grid(imgs, 2, 2);
  EXPECT_EQ(g.height, 8u);
  EXPECT_EQ(g.width, 10u);
  // Tile (1, 0) is image 2; tile (1, 1) is missing and black.
  EXPECT_EQ(g.pixels[(4 * 10 + 0) * 3], quantize_pixel(imgs.sample(2)[0]));
  EXPECT_EQ(g.pixels[(7 * 10 + 9) * 3 + 2], 0);
  EXPECT_EQ(make_grid(imgs, 2, 2).pixels, g.pixels);
}

TEST(Features, ExtractorContracts) {
  Tensor x = random_tensor({6, 4, 4, 1}, 1);
  ExtractorSpec flat{ExtractorKind::flatten};
  EXPECT_EQ(extract_features(x, flat).shape(), (Shape{6, 16}));
  ExtractorSpec rc{ExtractorKind::random_conv, 7, 8};
  FeatureExtractor e1(rc, {4, 4, 1}), e2(rc, {4, 4, 1});
  ASSERT_EQ(e1.filters().size(), e2.filters().size());
  for (std::size_t i = 0; i < e1.filters().size(); ++i) EXPECT_EQ(e1.filters()[i], e2.filters()[i]);
  Tensor imgs = builtin_images("discs", {16, 16, 3}, "train", 50);
  FeatureExtractor e(rc, {16, 16, 3});
  EXPECT_LT(frechet_distance(feature_stats(imgs, e, 7), feature_stats(imgs, e, 50)), 1e-6);
}
