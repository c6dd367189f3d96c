#include "capgen/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capgen/error.hpp"

namespace capgen {

Image flip(const Image& img, FlipAxis axis) {
  Image out = img;
  const size_t h = img.height, w = img.width, c = img.channels;
  for (size_t r = 0; r < h; ++r)
    for (size_t col = 0; col < w; ++col) {
      const size_t sr = axis == FlipAxis::kVertical ? h - 1 - r : r;
      const size_t sc = axis == FlipAxis::kHorizontal ? w - 1 - col : col;
      for (size_t ch = 0; ch < c; ++ch) out.at(r, col, ch) = img.at(sr, sc, ch);
    }
  return out;
}

double Homography::determinant() const {
  return h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6]) +
         h[2] * (h[3] * h[7] - h[4] * h[6]);
}

Point Homography::apply(Point p) const {
  const double w = h[6] * p.x + h[7] * p.y + h[8];
  return {(h[0] * p.x + h[1] * p.y + h[2]) / w, (h[3] * p.x + h[4] * p.y + h[5]) / w};
}

Homography Homography::inverse() const {
  const double det = determinant();
  double scale = 0.0;
  for (double v : h) scale = std::max(scale, std::abs(v));
  if (!std::isfinite(det) || std::abs(det) <= 1e-12 * scale * scale * scale) {
    throw DegenerateGeometryError("homography is not invertible (det=" + std::to_string(det) + ")");
  }
  std::array<double, 9> adj{
      h[4] * h[8] - h[5] * h[7], h[2] * h[7] - h[1] * h[8], h[1] * h[5] - h[2] * h[4],
      h[5] * h[6] - h[3] * h[8], h[0] * h[8] - h[2] * h[6], h[2] * h[3] - h[0] * h[5],
      h[3] * h[7] - h[4] * h[6], h[1] * h[6] - h[0] * h[7], h[0] * h[4] - h[1] * h[3]};
  // adj/det, renormalised so the bottom-right entry is 1 when possible.
  const double norm = std::abs(adj[8]) > 1e-15 * scale * scale ? adj[8] : det;
  Homography inv;
  for (size_t i = 0; i < 9; ++i) inv.h[i] = adj[i] / norm;
  return inv;
}

Homography solve_homography(const std::array<Point, 4>& src, const std::array<Point, 4>& dst) {
  // Augmented 8×9 system for h0..h7 with h8 fixed at 1.
  double a[8][9];
  for (size_t i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    const double r0[9] = {x, y, 1, 0, 0, 0, -x * u, -y * u, u};
    const double r1[9] = {0, 0, 0, x, y, 1, -x * v, -y * v, v};
    std::copy(r0, r0 + 9, a[2 * i]);
    std::copy(r1, r1 + 9, a[2 * i + 1]);
  }
  double scale = 0.0;
  for (auto& row : a)
    for (size_t j = 0; j < 8; ++j) scale = std::max(scale, std::abs(row[j]));
  if (scale == 0.0) throw DegenerateGeometryError("all correspondence points at the origin");

  for (size_t col = 0; col < 8; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) <= 1e-12 * scale) {
      throw DegenerateGeometryError("point correspondences are degenerate (collinear or repeated)");
    }
    if (pivot != col) std::swap(a[pivot], a[col]);
    for (size_t r = col + 1; r < 8; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (size_t j = col; j < 9; ++j) a[r][j] -= f * a[col][j];
    }
  }
  double sol[8];
  for (size_t i = 8; i-- > 0;) {
    double acc = a[i][8];
    for (size_t j = i + 1; j < 8; ++j) acc -= a[i][j] * sol[j];
    sol[i] = acc / a[i][i];
  }
  Homography out;
  for (size_t i = 0; i < 8; ++i) out.h[i] = sol[i];
  out.h[8] = 1.0;
  for (double v : out.h) {
    if (!std::isfinite(v)) throw DegenerateGeometryError("homography solve produced non-finite values");
  }
  return out;
}

Image warp_perspective(const Image& img, const Homography& h, uint8_t fill) {
  const Homography inv = h.inverse();
  const size_t rows = img.height, cols = img.width, ch = img.channels;
  // Sub-micro-pixel slack so an exact identity survives round-off at the border.
  constexpr double kEps = 1e-6;
  const double max_x = static_cast<double>(cols - 1), max_y = static_cast<double>(rows - 1);
  Image out(rows, cols, ch, fill);
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) {
      const Point s = inv.apply({static_cast<double>(c), static_cast<double>(r)});
      if (!(s.x >= -kEps && s.x <= max_x + kEps && s.y >= -kEps && s.y <= max_y + kEps)) continue;
      const double x = std::clamp(s.x, 0.0, max_x);
      const double y = std::clamp(s.y, 0.0, max_y);
      const size_t x0 = static_cast<size_t>(std::floor(x));
      const size_t y0 = static_cast<size_t>(std::floor(y));
      const size_t x1 = std::min(x0 + 1, cols - 1);
      const size_t y1 = std::min(y0 + 1, rows - 1);
      const double fx = x - static_cast<double>(x0);
      const double fy = y - static_cast<double>(y0);
      for (size_t k = 0; k < ch; ++k) {
        const double top = (1 - fx) * img.at(y0, x0, k) + fx * img.at(y0, x1, k);
        const double bottom = (1 - fx) * img.at(y1, x0, k) + fx * img.at(y1, x1, k);
        const double v = (1 - fy) * top + fy * bottom;
        out.at(r, c, k) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  return out;
}

std::array<Point, 4> image_corners(const Image& img) {
  const double w = static_cast<double>(img.width - 1), h = static_cast<double>(img.height - 1);
  return {Point{0, 0}, Point{w, 0}, Point{w, h}, Point{0, h}};
}

namespace {

bool convex(const std::array<Point, 4>& q) {
  int sign = 0;
  for (size_t i = 0; i < 4; ++i) {
    const Point& a = q[i];
    const Point& b = q[(i + 1) % 4];
    const Point& c = q[(i + 2) % 4];
    const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (cross == 0.0) return false;
    const int s = cross > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

}  // namespace

PerspectiveSample sample_perspective(const Image& img, double distortion, Rng& rng) {
  if (!(distortion >= 0.0 && distortion < 1.0)) {
    throw DomainError("distortion must lie in [0, 1), got " + std::to_string(distortion));
  }
  const auto src = image_corners(img);
  if (distortion == 0.0) return {src, Homography::identity()};
  const double reach =
      distortion * static_cast<double>(std::min(img.height, img.width)) / 2.0;
  // Inward unit directions for TL, TR, BR, BL.
  constexpr double kInX[4] = {1, -1, -1, 1};
  constexpr double kInY[4] = {1, 1, -1, -1};
  std::array<Point, 4> dst = src;
  for (int attempt = 0; attempt < 32; ++attempt) {
    for (size_t i = 0; i < 4; ++i) {
      dst[i].x = src[i].x + kInX[i] * rng.uniform(-0.25 * reach, reach);
      dst[i].y = src[i].y + kInY[i] * rng.uniform(-0.25 * reach, reach);
    }
    if (convex(dst)) return {dst, solve_homography(src, dst)};
  }
  // Practically unreachable for distortion < 1; fall back to a pure inward squeeze.
  for (size_t i = 0; i < 4; ++i) {
    dst[i].x = src[i].x + kInX[i] * 0.5 * reach;
    dst[i].y = src[i].y + kInY[i] * 0.5 * reach;
  }
  return {dst, solve_homography(src, dst)};
}

Image random_perspective(const Image& img, double distortion, Rng& rng) {
  const PerspectiveSample s = sample_perspective(img, distortion, rng);
  if (distortion == 0.0) return img;
  return warp_perspective(img, s.homography, 0);
}

Image augment_pipeline(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  const bool do_h = rng.bernoulli(cfg.hflip_prob);
  const bool do_v = rng.bernoulli(cfg.vflip_prob);
  const bool do_p = rng.bernoulli(cfg.perspective_prob);
  Image out = img;
  if (do_h) out = flip(out, FlipAxis::kHorizontal);
  if (do_v) out = flip(out, FlipAxis::kVertical);
  if (do_p) out = random_perspective(out, cfg.distortion, rng);
  return out;
}

}  // namespace capgen
