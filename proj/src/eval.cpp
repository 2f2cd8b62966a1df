#include "hatebm/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hatebm/checkpoint.hpp"
#include "hatebm/data.hpp"
#include "hatebm/error.hpp"
#include "hatebm/kernels.hpp"

namespace hatebm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

GaussianStats gaussian_stats(const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("gaussian_stats: expected (n, k) features, got " +
                                             shape_string(features.shape()));
  const std::size_t n = features.dim(0), k = features.dim(1);
  if (n < 2) throw ContractError("gaussian_stats: need at least 2 samples");
  if (k == 0) throw ShapeError("gaussian_stats: zero-dimensional features");
  Eigen::Map<const RowMatrix> x(features.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mu;
  RowMatrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();
  GaussianStats s;
  s.count = n;
  s.mean.assign(mu.data(), mu.data() + k);
  s.cov.assign(cov.data(), cov.data() + k * k);
  return s;
}

namespace {

Eigen::MatrixXd as_matrix(const GaussianStats& s) {
  const auto k = static_cast<Eigen::Index>(s.dim());
  if (s.cov.size() != s.dim() * s.dim()) throw ShapeError("gaussian stats: covariance size does not match mean");
  return Eigen::Map<const RowMatrix>(s.cov.data(), k, k);
}

// Square root of a symmetric PSD matrix; negative eigenvalues from roundoff are clamped to zero.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("frechet_distance: dimension " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  if (a.dim() == 0) throw ShapeError("frechet_distance: empty statistics");
  const Eigen::MatrixXd sa = as_matrix(a), sb = as_matrix(b);
  const auto k = static_cast<Eigen::Index>(a.dim());
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(a.mean.data(), k) -
                            Eigen::Map<const Eigen::VectorXd>(b.mean.data(), k);
  // tr((S_a S_b)^(1/2)) = tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)), which stays symmetric.
  const Eigen::MatrixXd ra = sqrt_psd(sa);
  const Eigen::MatrixXd inner = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = d.squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_cross;
  return std::max(fd, 0.0);
}

double ood_auroc(const ScoreSet& in, const ScoreSet& out) {
  if (in.scores.empty() || out.scores.empty()) throw ContractError("ood_auroc: empty score set");
  for (const ScoreSet* s : {&in, &out}) {
    for (double v : s->scores) {
      if (std::isnan(v)) throw NumericError("ood_auroc: NaN score in '" + s->tag + "'");
    }
  }
  struct Item {
    double score;
    bool is_out;
  };
  std::vector<Item> all;
  all.reserve(in.scores.size() + out.scores.size());
  for (double v : in.scores) all.push_back({v, false});
  for (double v : out.scores) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the rank sum of the OOD scores, using midranks for ties; kept
  // integral so the statistic is exact.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t outs = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      outs += all[j].is_out ? 1 : 0;
      ++j;
    }
    // ranks i+1 .. j, midrank (i + 1 + j) / 2
    twice_rank_sum += outs * (i + 1 + j);
    i = j;
  }
  const std::uint64_t n_out = out.scores.size(), n_in = in.scores.size();
  const std::uint64_t twice_u = twice_rank_sum - n_out * (n_out + 1);
  const std::uint64_t twice_pairs = 2 * n_in * n_out;
  // Evaluate the smaller tail and complement it so swapping the sets gives
  // results that add to exactly one.
  if (2 * twice_u == twice_pairs) return 0.5;
  if (2 * twice_u < twice_pairs) return static_cast<double>(twice_u) / static_cast<double>(twice_pairs);
  return 1.0 - static_cast<double>(twice_pairs - twice_u) / static_cast<double>(twice_pairs);
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreSet>& sets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scores " + path.string());
  out.precision(17);
  out << "score,provenance\n";
  for (const ScoreSet& s : sets) {
    if (s.tag.find(',') != std::string::npos) throw IoError("score provenance may not contain commas");
    for (double v : s.scores) out << v << ',' << s.tag << '\n';
  }
}

std::vector<ScoreSet> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scores " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "score,provenance") throw IoError("score file " + path.string() +
                                                                          " has an unexpected header");
  std::vector<ScoreSet> sets;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("score file: malformed row '" + line + "'");
    const std::string tag = line.substr(comma + 1);
    double v = 0.0;
    try {
      v = std::stod(line.substr(0, comma));
    } catch (const std::exception&) {
      throw IoError("score file: bad score in row '" + line + "'");
    }
    auto it = std::find_if(sets.begin(), sets.end(), [&](const ScoreSet& s) { return s.tag == tag; });
    if (it == sets.end()) {
      sets.push_back(ScoreSet{{}, tag});
      it = sets.end() - 1;
    }
    it->scores.push_back(v);
  }
  return sets;
}

GapReport energy_gap_monitor(const std::vector<MetricRow>& log, const GapMonitorConfig& cfg) {
  if (cfg.window == 0) throw ConfigError("gap monitor window must be positive");
  if (!(cfg.threshold >= 0.0)) throw ConfigError("gap monitor threshold must be >= 0");
  GapReport r;
  r.gap.reserve(log.size());
  std::size_t run = 0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double g = log[i].pos_energy - log[i].neg_energy;
    r.gap.push_back(g);
    // Non-finite gaps count as exceeding the threshold.
    run = !(std::abs(g) <= cfg.threshold) ? run + 1 : 0;
    if (run >= cfg.window && !r.flag_index) {
      r.flag_index = i;
      r.flag_step = log[i].step;
    }
  }
  return r;
}

Image8 make_grid(const ImageBatch& images, std::size_t rows, std::size_t cols) {
  if (images.rank() != 4) throw ShapeError("sample grid needs (n, h, w, c) images, got " +
                                           shape_string(images.shape()));
  if (rows == 0 || cols == 0) throw ContractError("sample grid needs at least one row and column");
  const std::size_t h = images.dim(1), w = images.dim(2), c = images.dim(3);
  if (c != 1 && c != 3) throw ShapeError("sample grid supports 1 or 3 channels");
  Image8 g{rows * h, cols * w, c, std::vector<std::uint8_t>(rows * h * cols * w * c, 0)};
  const std::size_t n = std::min(images.batch(), rows * cols);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t ti = t / cols, tj = t % cols;
    const auto src = images.sample(t);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t gy = ti * h + y, gx = tj * w + x;
          g.pixels[(gy * g.width + gx) * c + ch] = quantize_pixel(src[(y * w + x) * c + ch]);
        }
      }
    }
  }
  return g;
}

void sample_grid(const ImageBatch& images, std::size_t rows, std::size_t cols, const std::filesystem::path& path) {
  write_png(path, make_grid(images, rows, cols));
}

const char* to_string(ExtractorKind k) {
  switch (k) {
    case ExtractorKind::flatten:
      return "flatten";
    case ExtractorKind::random_conv:
      return "random_conv";
    case ExtractorKind::encoder:
      return "encoder";
  }
  return "?";
}

ExtractorKind extractor_kind_from_string(const std::string& s) {
  for (ExtractorKind k : {ExtractorKind::flatten, ExtractorKind::random_conv, ExtractorKind::encoder}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown feature extractor '" + s + "'");
}

namespace {

constexpr std::size_t kProjectionLayers = 2;

kernels::Conv2dGeometry projection_geometry(std::size_t batch, std::size_t h, std::size_t w, std::size_t in_c,
                                            std::size_t out_c) {
  return kernels::Conv2dGeometry{batch, h, w, in_c, out_c, 3, 2, 1};
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ExtractorSpec& spec, const Shape& image_shape)
    : spec_(spec), image_shape_(image_shape) {
  if (image_shape.size() != 3) throw ShapeError("feature extractor needs (h, w, c) images");
  switch (spec.kind) {
    case ExtractorKind::flatten:
      dim_ = shape_size(image_shape);
      break;
    case ExtractorKind::random_conv: {
      if (spec.channels == 0) throw ConfigError("random_conv extractor needs channels > 0");
      Rng rng(mix_seed(spec.seed, 0xFEA7));
      std::size_t h = image_shape[0], w = image_shape[1], c = image_shape[2];
      for (std::size_t l = 0; l < kProjectionLayers; ++l) {
        const auto g = projection_geometry(1, h, w, c, spec.channels);
        Tensor f(Shape{g.kernel, g.kernel, c, spec.channels});
        rng.fill_normal(f.values(), std::sqrt(2.0 / static_cast<double>(g.kernel * g.kernel * c)));
        filters_.push_back(std::move(f));
        h = g.out_h();
        w = g.out_w();
        c = spec.channels;
      }
      dim_ = std::min<std::size_t>(h, 2) * std::min<std::size_t>(w, 2) * c;
      break;
    }
    case ExtractorKind::encoder: {
      encoder_ = load_model(spec.encoder_path);
      if (encoder_->net->kind() != NetKind::inference) {
        throw ConfigError("encoder extractor needs an inference-network checkpoint");
      }
      if (encoder_->net->input_shape() != image_shape) {
        throw ShapeError("encoder expects images " + shape_string(encoder_->net->input_shape()) + ", data is " +
                         shape_string(image_shape));
      }
      dim_ = shape_size(encoder_->net->output_shape());
      break;
    }
  }
}

Tensor FeatureExtractor::operator()(const ImageBatch& images) const {
  if (images.sample_shape() != image_shape_) {
    throw ShapeError("feature extractor built for " + shape_string(image_shape_) + ", got " +
                     shape_string(images.sample_shape()));
  }
  const std::size_t n = images.batch();
  switch (spec_.kind) {
    case ExtractorKind::flatten:
      return images.reshaped(Shape{n, dim_});
    case ExtractorKind::encoder:
      return (*encoder_)(images).reshaped(Shape{n, dim_});
    case ExtractorKind::random_conv:
      break;
  }
  std::size_t h = image_shape_[0], w = image_shape_[1], c = image_shape_[2];
  std::vector<double> cur(images.values().begin(), images.values().end());
  for (const Tensor& f : filters_) {
    const auto g = projection_geometry(n, h, w, c, spec_.channels);
    std::vector<double> next(g.out_size());
    const std::vector<double> bias(spec_.channels, 0.0);
    kernels::conv2d_forward(g, cur, f.values(), bias, next);
    for (double& v : next) v = std::max(v, 0.0);
    cur = std::move(next);
    h = g.out_h();
    w = g.out_w();
    c = spec_.channels;
  }
  // Average over a grid of at most 2 x 2 spatial cells.
  const std::size_t ch = std::min<std::size_t>(h, 2), cw = std::min<std::size_t>(w, 2);
  Tensor out(Shape{n, dim_});
  for (std::size_t b = 0; b < n; ++b) {
    double* o = out.data() + b * dim_;
    std::vector<double> cnt(ch * cw, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t cell = (y * ch / h) * cw + (x * cw / w);
        cnt[cell] += 1.0;
        const double* p = cur.data() + ((b * h + y) * w + x) * c;
        for (std::size_t k = 0; k < c; ++k) o[cell * c + k] += p[k];
      }
    }
    for (std::size_t cell = 0; cell < ch * cw; ++cell) {
      for (std::size_t k = 0; k < c; ++k) o[cell * c + k] /= cnt[cell];
    }
  }
  return out;
}

Tensor extract_features(const ImageBatch& images, const ExtractorSpec& spec) {
  return FeatureExtractor(spec, images.sample_shape())(images);
}

GaussianStats feature_stats(const ImageBatch& images, const FeatureExtractor& extractor, std::size_t chunk) {
  const std::size_t n = images.batch();
  Tensor feats(Shape{n, extractor.dim()});
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> idx(std::min(chunk, n - start));
    std::iota(idx.begin(), idx.end(), start);
    feats.scatter(idx, extractor(images.gather(idx)));
  }
  return gaussian_stats(feats);
}

}  // namespace hatebm
