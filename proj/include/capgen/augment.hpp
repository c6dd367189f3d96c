#ifndef CAPGEN_AUGMENT_HPP_
#define CAPGEN_AUGMENT_HPP_

#include <array>

#include "capgen/image.hpp"
#include "capgen/rng.hpp"

namespace capgen {

enum class FlipAxis { kHorizontal, kVertical };

/// Exact mirror: horizontal maps (r, c) <- (r, W-1-c), vertical (r, c) <- (H-1-r, c).
Image flip(const Image& img, FlipAxis axis);

struct Point {
  double x = 0.0;  // column
  double y = 0.0;  // row
};

/// Projective map in pixel-centre coordinates, normalised so h[2][2] = 1.
struct Homography {
  std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return {}; }
  double at(size_t r, size_t c) const { return h[r * 3 + c]; }
  double determinant() const;
  Point apply(Point p) const;
  /// Throws DegenerateGeometryError when singular.
  Homography inverse() const;
};

/// Solves the 8-unknown system mapping src[i] to dst[i] by Gaussian
/// elimination with partial pivoting.
Homography solve_homography(const std::array<Point, 4>& src, const std::array<Point, 4>& dst);

/// Inverse-maps every output pixel through H⁻¹ and samples bilinearly; sources
/// outside the image take `fill`.
Image warp_perspective(const Image& img, const Homography& h, uint8_t fill = 0);

/// Corners (0,0), (W-1,0), (W-1,H-1), (0,H-1) in that order.
std::array<Point, 4> image_corners(const Image& img);

/// Displaced corners and the homography that produced a random perspective.
struct PerspectiveSample {
  std::array<Point, 4> corners;
  Homography homography;
};

/// Draws corner displacements of up to distortion·min(H,W)/2 per axis, biased
/// inward so the quad stays convex.
PerspectiveSample sample_perspective(const Image& img, double distortion, Rng& rng);
Image random_perspective(const Image& img, double distortion, Rng& rng);

struct AugmentConfig {
  double hflip_prob = 0.5;
  double vflip_prob = 0.0;
  double perspective_prob = 0.5;
  double distortion = 0.3;

  static AugmentConfig disabled() { return {0.0, 0.0, 0.0, 0.3}; }
  bool enabled() const { return hflip_prob > 0 || vflip_prob > 0 || perspective_prob > 0; }
};

/// hflip, vflip, perspective in that order, each gated by its own draw.
Image augment_pipeline(const Image& img, const AugmentConfig& cfg, Rng& rng);

}  // namespace capgen

#endif  // CAPGEN_AUGMENT_HPP_
