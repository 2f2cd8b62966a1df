#include "hatebm/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <string>

#include "hatebm/error.hpp"

namespace hatebm {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

Image8 read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("png: cannot read " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Image8 out;
  out.height = image.height;
  out.width = image.width;
  out.channels = 3;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("png: cannot decode " + path.string() + ": " + image.message);
  }
  return out;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pnm: cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P6" && magic != "P5") throw IoError("pnm: unsupported format in " + path.string());
  Image8 out;
  try {
    out.width = std::stoul(pnm_token(in));
    out.height = std::stoul(pnm_token(in));
    if (std::stoul(pnm_token(in)) != 255) throw IoError("pnm: only maxval 255 supported: " + path.string());
  } catch (const std::logic_error&) {
    throw IoError("pnm: malformed header in " + path.string());
  }
  out.channels = magic == "P6" ? 3 : 1;
  out.pixels.resize(out.width * out.height * out.channels);
  in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != out.pixels.size() || out.pixels.empty()) {
    throw IoError("pnm: truncated pixel data in " + path.string());
  }
  return out;
}

}  // namespace

bool has_image_extension(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

Image8 read_image(const std::filesystem::path& path) {
  return lower_extension(path) == ".png" ? read_png(path) : read_pnm(path);
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  if (image.channels == 1) {
    img.format = PNG_FORMAT_GRAY;
  } else if (image.channels == 3) {
    img.format = PNG_FORMAT_RGB;
  } else {
    throw IoError("png: cannot write " + std::to_string(image.channels) + "-channel image");
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("png: cannot write " + path.string() + ": " + img.message);
  }
}

void write_ppm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("ppm: cannot open " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

}  // namespace hatebm
