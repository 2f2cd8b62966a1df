#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hatebm {

// Interleaved 8-bit image, row-major (h, w, c).
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Decodes PNG or binary PPM/PGM (P6/P5). Throws IoError on failure.
Image8 read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);
void write_ppm(const std::filesystem::path& path, const Image8& image);

bool has_image_extension(const std::filesystem::path& path);

}  // namespace hatebm
