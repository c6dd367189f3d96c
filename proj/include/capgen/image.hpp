#ifndef CAPGEN_IMAGE_HPP_
#define CAPGEN_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

namespace capgen {

/// H×W×C 8-bit raster, row-major with interleaved channels.
struct Image {
  size_t height = 0;
  size_t width = 0;
  size_t channels = 3;
  std::vector<uint8_t> pixels;

  Image() = default;
  Image(size_t h, size_t w, size_t c, uint8_t fill = 0);

  uint8_t& at(size_t r, size_t c, size_t ch) { return pixels[(r * width + c) * channels + ch]; }
  uint8_t at(size_t r, size_t c, size_t ch) const {
    return pixels[(r * width + c) * channels + ch];
  }
  bool operator==(const Image&) const = default;
};

/// Binary PPM (P6) for 3 channels, PGM (P5) for 1. maxval must be 255.
void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

}  // namespace capgen

#endif  // CAPGEN_IMAGE_HPP_
