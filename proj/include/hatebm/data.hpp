#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "hatebm/image_io.hpp"
#include "hatebm/rng.hpp"
#include "hatebm/tensor.hpp"

namespace hatebm {

// Environment variable naming the root that relative dataset folders are
// resolved against.
inline constexpr const char* kDataRootEnv = "HATEBM_DATA_ROOT";

// Positive-sample source. `source` is either an image folder or
// "builtin:<name>" for one of the procedural datasets:
//   ring8    2-D mixture of 8 Gaussians on a ring, stored as (1, 1, 2) images
//   discs    one soft-edged coloured disc over a two-tone gradient
//   stripes  oriented sinusoidal gratings
//   noise    i.i.d. uniform pixels
struct DatasetSpec {
  std::string source = "builtin:discs";
  Shape image_shape{32, 32, 3};
  std::string split = "train";
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;
  std::size_t limit = 0;  // 0: whole folder, or the builtin default count
  bool drop_last = false;
};

inline constexpr std::size_t kBuiltinDefaultCount = 10000;
inline constexpr double kRingRadius = 0.6;
inline constexpr double kRingSigma = 0.04;
inline constexpr std::size_t kRingModes = 8;

struct LoadedImages {
  Tensor images;            // (n, h, w, c) in [-1, 1]
  std::size_t skipped = 0;  // files that failed to decode
};

// 8-bit intensity to [-1, 1]: 0 -> -1, 255 -> +1.
inline double normalize_pixel(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }
std::uint8_t quantize_pixel(double v);

// Center-crop to the target aspect ratio, bilinear resize, and channel
// conversion (luma for 1 channel, replication for gray -> RGB).
Image8 fit_image(const Image8& image, std::size_t height, std::size_t width, std::size_t channels);

std::filesystem::path resolve_source(const std::string& source);
LoadedImages load_images(const DatasetSpec& spec);
Tensor builtin_images(const std::string& name, const Shape& image_shape, const std::string& split, std::size_t count);
bool is_builtin(const std::string& source);

// Infinite sequence of batches; each epoch visits the data in a
// permutation seeded by (spec.seed, epoch).
class BatchStream {
 public:
  BatchStream(std::shared_ptr<const Tensor> images, std::size_t batch_size, std::uint64_t seed, bool drop_last);

  ImageBatch next();
  std::size_t epoch() const { return epoch_; }
  std::size_t cursor() const { return cursor_; }
  void seek(std::size_t epoch, std::size_t cursor);
  std::size_t dataset_size() const { return images_->batch(); }
  const Tensor& images() const { return *images_; }

 private:
  void start_epoch(std::size_t epoch);

  std::shared_ptr<const Tensor> images_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool drop_last_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

BatchStream load_dataset(const DatasetSpec& spec, std::size_t* skipped = nullptr);

// x + epsilon * V with V ~ N(0, I); not clamped back into [-1, 1].
ImageBatch perturb_data(const ImageBatch& x, double epsilon_data, Rng& rng);

}  // namespace hatebm
