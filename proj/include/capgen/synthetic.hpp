#ifndef CAPGEN_SYNTHETIC_HPP_
#define CAPGEN_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capgen/image.hpp"

namespace capgen {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

enum class ShapeKind { kSquare, kCircle, kTriangle };
enum class ShapeColor { kRed, kGreen, kBlue, kYellow };

const char* shape_name(ShapeKind s);
const char* color_name(ShapeColor c);

/// What was drawn where; captions are derived from these records only.
struct ShapeRecord {
  ShapeKind shape;
  ShapeColor color;
  size_t row;
  size_t col;
};

struct SyntheticSample {
  std::string id;
  Image image;
  std::vector<ShapeRecord> shapes;
  /// Five paraphrases; the first is the canonical one.
  std::vector<std::string> captions;
  Split split = Split::kTrain;
};

/// Draws n images of one or two coloured shapes on a black background, each
/// shape filling one cell of a grid×grid lattice. Two-shape images always put
/// the shapes in different rows so every caption states a vertical relation.
/// The last max(1, n/10) samples are test, the max(1, n/10) before them
/// validation, the rest training.
std::vector<SyntheticSample> generate_synthetic_dataset(size_t n, uint64_t seed,
                                                        size_t image_size = 32, size_t grid = 4);

/// Manifest line: id TAB split TAB caption|caption|...
struct ManifestEntry {
  std::string id;
  Split split = Split::kTrain;
  std::vector<std::string> captions;
};

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace capgen

#endif  // CAPGEN_SYNTHETIC_HPP_
