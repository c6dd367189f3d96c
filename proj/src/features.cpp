#include "capgen/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "capgen/error.hpp"

namespace capgen {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'F', 'E'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& buf, float f) { put_u32(buf, std::bit_cast<uint32_t>(f)); }

class Reader {
 public:
  Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  void need(size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(source_ + ": truncated while reading " + what + " at byte offset " +
                        std::to_string(pos_));
    }
  }

  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string raw(size_t n, const char* what) {
    need(n, what);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string source_;
  size_t pos_ = 0;
};

}  // namespace

void write_features(const std::vector<FeatureSet>& sets, const std::filesystem::path& path) {
  uint32_t l = 0, d = 0;
  if (!sets.empty()) {
    l = static_cast<uint32_t>(sets.front().regions());
    d = static_cast<uint32_t>(sets.front().dims());
  }
  for (const auto& s : sets) {
    if (s.regions() != l || s.dims() != d) {
      throw ContractError("feature set '" + s.image_id + "' has shape " +
                          shape_str(s.annotations.shape()) + ", expected [" + std::to_string(l) +
                          "x" + std::to_string(d) + "]");
    }
  }
  std::string buf(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(sets.size()));
  put_u32(buf, l);
  put_u32(buf, d);
  for (const auto& s : sets) {
    put_u32(buf, static_cast<uint32_t>(s.image_id.size()));
    buf += s.image_id;
    for (double v : s.annotations.data()) put_f32(buf, static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write features to " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<FeatureSet> read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read features " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}), path.string());

  if (r.raw(4, "magic") != std::string(kMagic, 4)) {
    throw FormatError(path.string() + ": bad magic, not an ICFE file");
  }
  const uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported ICFE version " + std::to_string(version));
  }
  const uint32_t count = r.u32("count");
  const uint32_t l = r.u32("L");
  const uint32_t d = r.u32("D");
  if (count > 0 && (l == 0 || d == 0)) throw FormatError(path.string() + ": zero L or D");

  std::vector<FeatureSet> sets;
  sets.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t id_len = r.u32("id length");
    FeatureSet fs;
    fs.image_id = r.raw(id_len, "image id");
    r.need(static_cast<size_t>(l) * d * 4, "annotation values");
    std::vector<double> values(static_cast<size_t>(l) * d);
    for (double& v : values) {
      v = r.f32("annotation values");
      if (!std::isfinite(v)) {
        throw FormatError(path.string() + ": non-finite value before byte offset " +
                          std::to_string(r.pos()));
      }
    }
    fs.annotations = Tensor::from({l, d}, std::move(values));
    sets.push_back(std::move(fs));
  }
  if (!r.at_end()) {
    throw FormatError(path.string() + ": trailing bytes at offset " + std::to_string(r.pos()));
  }
  return sets;
}

FeatureSet toy_patch_encode(const Image& img, size_t grid, std::string image_id) {
  if (grid == 0 || img.height < grid || img.width < grid) {
    throw DomainError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                      " is smaller than a " + std::to_string(grid) + "x" + std::to_string(grid) +
                      " grid");
  }
  const size_t c = img.channels;
  const size_t d = c + 2;
  std::vector<double> values(grid * grid * d, 0.0);
  for (size_t gr = 0; gr < grid; ++gr) {
    const size_t r0 = gr * img.height / grid, r1 = (gr + 1) * img.height / grid;
    for (size_t gc = 0; gc < grid; ++gc) {
      const size_t c0 = gc * img.width / grid, c1 = (gc + 1) * img.width / grid;
      double* cell = &values[(gr * grid + gc) * d];
      for (size_t r = r0; r < r1; ++r)
        for (size_t col = c0; col < c1; ++col)
          for (size_t ch = 0; ch < c; ++ch) cell[ch] += img.at(r, col, ch);
      const double n = static_cast<double>((r1 - r0) * (c1 - c0)) * 255.0;
      for (size_t ch = 0; ch < c; ++ch) cell[ch] /= n;
      cell[c] = (static_cast<double>(gr) + 0.5) / static_cast<double>(grid);
      cell[c + 1] = (static_cast<double>(gc) + 0.5) / static_cast<double>(grid);
    }
  }
  return FeatureSet{std::move(image_id), Tensor::from({grid * grid, d}, std::move(values))};
}

}  // namespace capgen
