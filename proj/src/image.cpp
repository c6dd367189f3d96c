#include "capgen/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "capgen/error.hpp"

namespace capgen {

Image::Image(size_t h, size_t w, size_t c, uint8_t fill)
    : height(h), width(w), channels(c), pixels(h * w * c, fill) {
  if (h == 0 || w == 0) throw DomainError("image extents must be positive");
  if (c != 1 && c != 3) throw DomainError("image must have 1 or 3 channels");
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n'
      << img.width << ' ' << img.height << '\n'
      << "255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

class PnmParser {
 public:
  explicit PnmParser(std::string bytes) : bytes_(std::move(bytes)) {}

  std::string magic() {
    if (bytes_.size() < 2) throw FormatError("not a PPM file: too short");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  size_t number() {
    skip_space_and_comments();
    size_t value = 0;
    size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<size_t>(bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError("PPM header value too large");
    }
    if (digits == 0) throw FormatError("malformed PPM header at byte " + std::to_string(pos_));
    return value;
  }

  // Exactly one whitespace byte separates the header from the raster.
  size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("malformed PPM header at byte " + std::to_string(pos_));
    }
    return pos_ + 1;
  }

  const std::string& bytes() const { return bytes_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const unsigned char c = static_cast<unsigned char>(bytes_[pos_]);
      if (std::isspace(c)) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string bytes_;
  size_t pos_ = 0;
};

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image " + path.string());
  PnmParser parser(std::string(std::istreambuf_iterator<char>(in), {}));
  const std::string magic = parser.magic();
  size_t channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw FormatError(path.string() + ": unsupported magic '" + magic + "'");
  }
  const size_t width = parser.number();
  const size_t height = parser.number();
  const size_t maxval = parser.number();
  if (width == 0 || height == 0) throw FormatError(path.string() + ": zero image extent");
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  const size_t offset = parser.raster_offset();
  const size_t needed = width * height * channels;
  if (parser.bytes().size() < offset + needed) {
    throw FormatError(path.string() + ": raster truncated at byte " +
                      std::to_string(parser.bytes().size()));
  }
  Image img(height, width, channels);
  std::copy_n(parser.bytes().begin() + static_cast<long>(offset), needed, img.pixels.begin());
  return img;
}

}  // namespace capgen
