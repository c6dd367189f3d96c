#ifndef CAPGEN_FEATURES_HPP_
#define CAPGEN_FEATURES_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "capgen/image.hpp"
#include "capgen/tensor.hpp"

namespace capgen {

/// Per-image annotation vectors: L regions × D feature dims.
struct FeatureSet {
  std::string image_id;
  Tensor annotations;

  size_t regions() const { return annotations.rows(); }
  size_t dims() const { return annotations.cols(); }
};

/// "ICFE" layout: magic, then u32 LE version=1, count, L, D; per record a u32
/// id length, the id bytes and L·D float32 LE values.
void write_features(const std::vector<FeatureSet>& sets, const std::filesystem::path& path);
std::vector<FeatureSet> read_features(const std::filesystem::path& path);

/// Non-trainable stand-in for a CNN: the image is cut into a grid×grid
/// lattice and each cell yields its per-channel mean intensity in [0,1]
/// followed by the cell-centre (row, col) in [0,1].
FeatureSet toy_patch_encode(const Image& img, size_t grid, std::string image_id = {});

}  // namespace capgen

#endif  // CAPGEN_FEATURES_HPP_
