#include "hatebm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <numbers>

#include "hatebm/error.hpp"
#include "hatebm/nets.hpp"

namespace hatebm {

namespace fs = std::filesystem;

std::uint8_t quantize_pixel(double v) {
  const double scaled = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(scaled);
}

Image8 fit_image(const Image8& image, std::size_t height, std::size_t width, std::size_t channels) {
  if (image.height == 0 || image.width == 0) throw IoError("fit_image: empty image");
  // Largest centered crop with the target aspect ratio.
  double crop_h = static_cast<double>(image.height);
  double crop_w = static_cast<double>(image.width);
  const double target_aspect = static_cast<double>(width) / static_cast<double>(height);
  if (crop_w / crop_h > target_aspect) {
    crop_w = crop_h * target_aspect;
  } else {
    crop_h = crop_w / target_aspect;
  }
  const double off_y = (static_cast<double>(image.height) - crop_h) / 2.0;
  const double off_x = (static_cast<double>(image.width) - crop_w) / 2.0;
  const double sy = crop_h / static_cast<double>(height);
  const double sx = crop_w / static_cast<double>(width);

  auto src = [&](std::size_t y, std::size_t x, std::size_t c) -> double {
    return image.pixels[(y * image.width + x) * image.channels + std::min(c, image.channels - 1)];
  };
  auto luma = [&](std::size_t y, std::size_t x) -> double {
    if (image.channels < 3) return src(y, x, 0);
    return 0.299 * src(y, x, 0) + 0.587 * src(y, x, 1) + 0.114 * src(y, x, 2);
  };

  Image8 out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.pixels.resize(height * width * channels);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp(off_y + (static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(image.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp(off_x + (static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(image.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return channels == 1 ? luma(yy, xx) : src(yy, xx, c); };
        const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                         wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
        out.pixels[(y * width + x) * channels + c] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

bool is_builtin(const std::string& source) { return source.rfind("builtin:", 0) == 0; }

fs::path resolve_source(const std::string& source) {
  fs::path p(source);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kDataRootEnv); root && *root) {
      const fs::path rooted = fs::path(root) / p;
      if (fs::exists(rooted)) return rooted;
    }
  }
  return p;
}

namespace {

void write_pixel_row(Tensor& out, std::size_t index, const std::vector<double>& unit_values) {
  // unit_values in [0, 1]; quantize through 8 bits like a decoded file.
  auto dst = out.sample(index);
  for (std::size_t k = 0; k < dst.size(); ++k) {
    const auto v8 = static_cast<std::uint8_t>(std::clamp(std::round(unit_values[k] * 255.0), 0.0, 255.0));
    dst[k] = normalize_pixel(v8);
  }
}

void make_disc(Rng& rng, std::size_t h, std::size_t w, std::size_t c, std::vector<double>& px) {
  std::vector<double> bg0(c), bg1(c), fg(c);
  for (std::size_t k = 0; k < c; ++k) {
    bg0[k] = 0.45 * rng.uniform();
    bg1[k] = 0.45 * rng.uniform();
    fg[k] = 0.55 + 0.45 * rng.uniform();
  }
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  const double dim = static_cast<double>(std::min(h, w));
  const double radius = dim * (1.0 / 6.0 + rng.uniform() / 6.0);
  const double cy = radius * 0.5 + rng.uniform() * (static_cast<double>(h) - radius);
  const double cx = radius * 0.5 + rng.uniform() * (static_cast<double>(w) - radius);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = ((static_cast<double>(x) / static_cast<double>(w) - 0.5) * std::cos(angle) +
                        (static_cast<double>(y) / static_cast<double>(h) - 0.5) * std::sin(angle)) + 0.5;
      const double t = std::clamp(u, 0.0, 1.0);
      const double d = std::hypot(static_cast<double>(y) + 0.5 - cy, static_cast<double>(x) + 0.5 - cx);
      const double alpha = std::clamp(radius - d + 0.5, 0.0, 1.0);
      for (std::size_t k = 0; k < c; ++k) {
        const double bg = (1.0 - t) * bg0[k] + t * bg1[k];
        px[(y * w + x) * c + k] = (1.0 - alpha) * bg + alpha * fg[k];
      }
    }
  }
}

void make_stripes(Rng& rng, std::size_t h, std::size_t w, std::size_t c, std::vector<double>& px) {
  std::vector<double> a(c), b(c);
  for (std::size_t k = 0; k < c; ++k) {
    a[k] = rng.uniform();
    b[k] = rng.uniform();
  }
  const double angle = std::numbers::pi * rng.uniform();
  const double cycles = 2.0 + 4.0 * rng.uniform();
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(w) * std::cos(angle) +
                       static_cast<double>(y) / static_cast<double>(h) * std::sin(angle);
      const double s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * cycles * u + phase);
      for (std::size_t k = 0; k < c; ++k) px[(y * w + x) * c + k] = a[k] + (b[k] - a[k]) * s;
    }
  }
}

}  // namespace

Tensor builtin_images(const std::string& name, const Shape& image_shape, const std::string& split,
                      std::size_t count) {
  if (image_shape.size() != 3) throw ConfigError("builtin dataset needs an (h, w, c) image shape");
  const std::size_t h = image_shape[0], w = image_shape[1], c = image_shape[2];
  Shape shape{count, h, w, c};
  Tensor out(shape);
  const std::uint64_t base = fnv1a64("builtin/" + name + "/" + split);
  std::vector<double> px(h * w * c);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(base, i));
    if (name == "ring8") {
      if (h * w * c != 2) throw ConfigError("builtin:ring8 needs image shape (1, 1, 2)");
      const std::size_t mode = rng.below(kRingModes);
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(mode) / static_cast<double>(kRingModes);
      auto dst = out.sample(i);
      dst[0] = kRingRadius * std::cos(theta) + kRingSigma * rng.normal();
      dst[1] = kRingRadius * std::sin(theta) + kRingSigma * rng.normal();
      continue;
    }
    if (name == "discs") {
      make_disc(rng, h, w, c, px);
    } else if (name == "stripes") {
      make_stripes(rng, h, w, c, px);
    } else if (name == "noise") {
      for (double& v : px) v = rng.uniform();
    } else {
      throw ConfigError("unknown builtin dataset '" + name + "'");
    }
    write_pixel_row(out, i, px);
  }
  return out;
}

LoadedImages load_images(const DatasetSpec& spec) {
  if (spec.image_shape.size() != 3) throw ConfigError("dataset image shape must be (h, w, c)");
  if (is_builtin(spec.source)) {
    const std::size_t count = spec.limit ? spec.limit : kBuiltinDefaultCount;
    return LoadedImages{builtin_images(spec.source.substr(8), spec.image_shape, spec.split, count), 0};
  }
  fs::path dir = resolve_source(spec.source);
  if (!fs::is_directory(dir)) throw IoError("dataset source not found: " + spec.source);
  if (!spec.split.empty() && fs::is_directory(dir / spec.split)) dir /= spec.split;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  const std::size_t h = spec.image_shape[0], w = spec.image_shape[1], c = spec.image_shape[2];
  std::vector<double> values;
  std::size_t kept = 0, skipped = 0;
  for (const fs::path& f : files) {
    if (spec.limit && kept == spec.limit) break;
    try {
      const Image8 img = fit_image(read_image(f), h, w, c);
      for (std::uint8_t v : img.pixels) values.push_back(normalize_pixel(v));
      ++kept;
    } catch (const IoError& e) {
      ++skipped;
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << '\n';
    }
  }
  if (kept == 0) throw IoError("dataset " + dir.string() + " contains no decodable images");
  return LoadedImages{Tensor(Shape{kept, h, w, c}, std::move(values)), skipped};
}

BatchStream::BatchStream(std::shared_ptr<const Tensor> images, std::size_t batch_size, std::uint64_t seed,
                         bool drop_last)
    : images_(std::move(images)), batch_size_(batch_size), seed_(seed), drop_last_(drop_last) {
  if (!images_ || images_->batch() == 0) throw ConfigError("batch stream: empty dataset");
  if (batch_size_ == 0) throw ConfigError("batch stream: batch size must be positive");
  if (drop_last_ && batch_size_ > images_->batch()) {
    throw ConfigError("batch stream: batch size " + std::to_string(batch_size_) + " exceeds dataset size " +
                      std::to_string(images_->batch()));
  }
  start_epoch(0);
}

void BatchStream::start_epoch(std::size_t epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  Rng rng(mix_seed(seed_, epoch));
  order_ = rng.permutation(images_->batch());
}

void BatchStream::seek(std::size_t epoch, std::size_t cursor) {
  start_epoch(epoch);
  cursor_ = std::min(cursor, order_.size());
}

ImageBatch BatchStream::next() {
  const std::size_t n = order_.size();
  if (cursor_ >= n || (drop_last_ && n - cursor_ < batch_size_)) start_epoch(epoch_ + 1);
  const std::size_t take = std::min(batch_size_, n - cursor_);
  std::span<const std::size_t> idx(order_.data() + cursor_, take);
  cursor_ += take;
  return images_->gather(idx);
}

BatchStream load_dataset(const DatasetSpec& spec, std::size_t* skipped) {
  LoadedImages loaded = load_images(spec);
  if (skipped) *skipped = loaded.skipped;
  return BatchStream(std::make_shared<const Tensor>(std::move(loaded.images)), spec.batch_size, spec.seed,
                     spec.drop_last);
}

ImageBatch perturb_data(const ImageBatch& x, double epsilon_data, Rng& rng) {
  if (epsilon_data < 0.0) throw ContractError("perturb_data: epsilon_data must be >= 0");
  ImageBatch out = x;
  if (epsilon_data == 0.0) return out;
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out.values()) v += epsilon_data * dist(rng.engine());
  return out;
}

}  // namespace hatebm
