#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hatebm/image_io.hpp"
#include "hatebm/nets.hpp"
#include "hatebm/tensor.hpp"
#include "hatebm/trainer.hpp"

namespace hatebm {

// Gaussian fit of a feature set; covariance is dense row-major k x k.
struct GaussianStats {
  std::vector<double> mean;
  std::vector<double> cov;
  std::size_t count = 0;

  std::size_t dim() const { return mean.size(); }
};

// Sample mean and unbiased covariance of an (n, k) array; n >= 2.
GaussianStats gaussian_stats(const Tensor& features);

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct ScoreSet {
  std::vector<double> scores;
  std::string tag;  // "in-distribution" or the OOD dataset name
};

// P(out > in) + P(out == in) / 2 from the rank-sum statistic.
double ood_auroc(const ScoreSet& in, const ScoreSet& out);

// Score dump: "score,provenance" header, one row per score.
void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreSet>& sets);
std::vector<ScoreSet> read_scores_csv(const std::filesystem::path& path);

struct GapMonitorConfig {
  double threshold = 100.0;
  std::size_t window = 50;
};

struct GapReport {
  std::vector<double> gap;                // per log row
  std::optional<std::size_t> flag_index;  // log row where the window first fills
  std::optional<std::size_t> flag_step;   // training step of that row
  bool diverged() const { return flag_index.has_value(); }
};

GapReport energy_gap_monitor(const std::vector<MetricRow>& log, const GapMonitorConfig& cfg = {});

// Row-major tiling of images[0 .. rows*cols) with no padding; missing
// tiles stay black.
Image8 make_grid(const ImageBatch& images, std::size_t rows, std::size_t cols);
void sample_grid(const ImageBatch& images, std::size_t rows, std::size_t cols, const std::filesystem::path& path);

enum class ExtractorKind { flatten, random_conv, encoder };

const char* to_string(ExtractorKind k);
ExtractorKind extractor_kind_from_string(const std::string& s);

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::random_conv;
  std::uint64_t seed = 0;
  std::size_t channels = 16;           // random_conv width
  std::filesystem::path encoder_path;  // encoder: checkpoint written by save_model
};

class FeatureExtractor {
 public:
  FeatureExtractor(const ExtractorSpec& spec, const Shape& image_shape);
  // (n, h, w, c) -> (n, k)
  Tensor operator()(const ImageBatch& images) const;
  std::size_t dim() const { return dim_; }
  // Projection filters (random_conv only), exposed for inspection.
  const std::vector<Tensor>& filters() const { return filters_; }

 private:
  ExtractorSpec spec_;
  Shape image_shape_;
  std::size_t dim_ = 0;
  std::vector<Tensor> filters_;
  std::optional<Model> encoder_;
};

Tensor extract_features(const ImageBatch& images, const ExtractorSpec& spec);

// Features in chunks so large sample sets stay within memory.
GaussianStats feature_stats(const ImageBatch& images, const FeatureExtractor& extractor, std::size_t chunk = 256);

}  // namespace hatebm
