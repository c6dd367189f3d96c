#include "capgen/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "capgen/error.hpp"
#include "capgen/rng.hpp"

namespace capgen {

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw FormatError("unknown split '" + name + "'");
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

const char* color_name(ShapeColor c) {
  switch (c) {
    case ShapeColor::kRed: return "red";
    case ShapeColor::kGreen: return "green";
    case ShapeColor::kBlue: return "blue";
    case ShapeColor::kYellow: return "yellow";
  }
  return "?";
}

namespace {

std::array<uint8_t, 3> rgb(ShapeColor c) {
  switch (c) {
    case ShapeColor::kRed: return {255, 0, 0};
    case ShapeColor::kGreen: return {0, 255, 0};
    case ShapeColor::kBlue: return {0, 0, 255};
    case ShapeColor::kYellow: return {255, 215, 0};
  }
  return {0, 0, 0};
}

bool inside(ShapeKind kind, double y, double x, double top, double left, double size) {
  // Local coordinates in [0,1]² of the shape's bounding box.
  const double v = (y - top) / size;
  const double u = (x - left) / size;
  if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return false;
  switch (kind) {
    case ShapeKind::kSquare:
      return true;
    case ShapeKind::kCircle:
      return (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25;
    case ShapeKind::kTriangle:
      // Apex at the top centre, base along the bottom edge.
      return std::abs(u - 0.5) <= 0.5 * v;
  }
  return false;
}

void draw(Image& img, const ShapeRecord& s, size_t grid) {
  const size_t r0 = s.row * img.height / grid, r1 = (s.row + 1) * img.height / grid;
  const size_t c0 = s.col * img.width / grid, c1 = (s.col + 1) * img.width / grid;
  const size_t cell = std::min(r1 - r0, c1 - c0);
  const size_t margin = cell >= 4 ? std::max<size_t>(1, cell / 8) : 0;
  const double size = static_cast<double>(cell - 2 * margin);
  const double top = static_cast<double>(r0 + margin);
  const double left = static_cast<double>(c0 + margin);
  const auto color = rgb(s.color);
  for (size_t r = r0; r < r1; ++r)
    for (size_t c = c0; c < c1; ++c) {
      // Sample at the pixel centre.
      if (!inside(s.shape, static_cast<double>(r) + 0.5, static_cast<double>(c) + 0.5, top, left,
                  size))
        continue;
      for (size_t ch = 0; ch < 3; ++ch) img.at(r, c, ch) = color[ch];
    }
}

std::string phrase(const ShapeRecord& s) {
  return std::string(color_name(s.color)) + " " + shape_name(s.shape);
}

std::vector<std::string> captions_for(const std::vector<ShapeRecord>& shapes) {
  if (shapes.size() == 1) {
    const std::string a = phrase(shapes[0]);
    return {"a " + a, "there is a " + a, "a single " + a, "one " + a + " on a black background",
            "a " + a + " on a black background"};
  }
  const ShapeRecord& upper = shapes[0].row < shapes[1].row ? shapes[0] : shapes[1];
  const ShapeRecord& lower = shapes[0].row < shapes[1].row ? shapes[1] : shapes[0];
  const std::string a = phrase(upper), b = phrase(lower);
  return {"a " + a + " above a " + b, "a " + b + " below a " + a,
          "there is a " + a + " above a " + b, "a " + a + " is above a " + b,
          "a " + b + " is below a " + a};
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic_dataset(size_t n, uint64_t seed, size_t image_size,
                                                        size_t grid) {
  if (n < 3) throw DomainError("synthetic dataset needs at least 3 images, got " + std::to_string(n));
  if (grid < 2) throw DomainError("synthetic dataset needs a grid of at least 2");
  if (image_size < grid) throw DomainError("image_size smaller than grid");

  Rng rng(seed);
  const size_t n_val = std::max<size_t>(1, n / 10);
  const size_t n_test = std::max<size_t>(1, n / 10);
  const size_t n_train = n - n_val - n_test;

  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    SyntheticSample s;
    char id[32];
    std::snprintf(id, sizeof(id), "img%05zu", i);
    s.id = id;
    s.image = Image(image_size, image_size, 3, 0);

    const size_t count = rng.bernoulli(0.5) ? 2 : 1;
    auto draw_record = [&](size_t row) {
      return ShapeRecord{static_cast<ShapeKind>(rng.below(3)), static_cast<ShapeColor>(rng.below(4)),
                         row, rng.below(grid)};
    };
    s.shapes.push_back(draw_record(rng.below(grid)));
    if (count == 2) {
      ShapeRecord second;
      do {
        size_t row = rng.below(grid - 1);
        if (row >= s.shapes[0].row) ++row;
        second = draw_record(row);
      } while (second.shape == s.shapes[0].shape && second.color == s.shapes[0].color);
      s.shapes.push_back(second);
    }
    for (const auto& rec : s.shapes) draw(s.image, rec, grid);
    s.captions = captions_for(s.shapes);
    s.split = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
    out.push_back(std::move(s));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    out << e.id << '\t' << split_name(e.split) << '\t';
    for (size_t i = 0; i < e.captions.size(); ++i) {
      if (e.captions[i].find('|') != std::string::npos) {
        throw ContractError("caption contains the '|' separator: " + e.captions[i]);
      }
      out << (i ? "|" : "") << e.captions[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError("expected id<TAB>split<TAB>captions", line_no);
    ManifestEntry e;
    e.id = line.substr(0, t1);
    try {
      e.split = parse_split(line.substr(t1 + 1, t2 - t1 - 1));
    } catch (const FormatError& err) {
      throw ParseError(err.what(), line_no);
    }
    std::stringstream caps(line.substr(t2 + 1));
    std::string cap;
    while (std::getline(caps, cap, '|')) {
      if (!cap.empty()) e.captions.push_back(cap);
    }
    if (e.id.empty() || e.captions.empty()) throw ParseError("missing id or captions", line_no);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace capgen
