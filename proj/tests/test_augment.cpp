#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "capgen/augment.hpp"
#include "capgen/error.hpp"
#include "capgen/synthetic.hpp"
#include "test_support.hpp"

namespace capgen {
namespace {

Image random_image(size_t h, size_t w, size_t c, Rng& rng) {
  Image img(h, w, c);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  return img;
}

Image checkerboard(size_t n, size_t square) {
  Image img(n, n, 1);
  for (size_t r = 0; r < n; ++r)
    for (size_t c = 0; c < n; ++c) img.at(r, c, 0) = ((r / square + c / square) % 2) ? 255 : 0;
  return img;
}

double max_reprojection_error(const Homography& h, const std::array<Point, 4>& src,
                              const std::array<Point, 4>& dst) {
  double worst = 0.0;
  for (size_t i = 0; i < 4; ++i) {
    const Point p = h.apply(src[i]);
    worst = std::max({worst, std::abs(p.x - dst[i].x), std::abs(p.y - dst[i].y)});
  }
  return worst;
}

TEST(Flip, HorizontalOnOneByTwo) {
  Image img(1, 2, 1);
  img.pixels = {10, 20};
  EXPECT_EQ(flip(img, FlipAxis::kHorizontal).pixels, (std::vector<uint8_t>{20, 10}));
}

TEST(Flip, VerticalOnTwoByOne) {
  Image img(2, 1, 1);
  img.pixels = {10, 20};
  EXPECT_EQ(flip(img, FlipAxis::kVertical).pixels, (std::vector<uint8_t>{20, 10}));
}

TEST(Flip, ChannelsStayTogether) {
  Image img(1, 2, 3);
  img.pixels = {1, 2, 3, 4, 5, 6};
  EXPECT_EQ(flip(img, FlipAxis::kHorizontal).pixels, (std::vector<uint8_t>{4, 5, 6, 1, 2, 3}));
}

TEST(Flip, InvolutionPreservingPixelMultiset) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t h = 1 + rng.below(9), w = 1 + rng.below(9), c = rng.bernoulli(0.5) ? 3 : 1;
    const Image img = random_image(h, w, c, rng);
    for (FlipAxis axis : {FlipAxis::kHorizontal, FlipAxis::kVertical}) {
      const Image once = flip(img, axis);
      ASSERT_EQ(flip(once, axis), img);
      auto a = img.pixels, b = once.pixels;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      ASSERT_EQ(a, b);
    }
  }
}

TEST(Homography, IdenticalQuadsGiveIdentity) {
  const std::array<Point, 4> sq{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  const Homography h = solve_homography(sq, sq);
  const Homography eye = Homography::identity();
  for (size_t i = 0; i < 9; ++i) EXPECT_NEAR(h.h[i], eye.h[i], 1e-9);
}

TEST(Homography, TranslationHasForcedForm) {
  const std::array<Point, 4> src{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  std::array<Point, 4> dst = src;
  for (auto& p : dst) p.x += 5;
  const Homography h = solve_homography(src, dst);
  const double expected[9] = {1, 0, 5, 0, 1, 0, 0, 0, 1};
  for (size_t i = 0; i < 9; ++i) EXPECT_NEAR(h.h[i], expected[i], 1e-9);
}

TEST(Homography, RandomQuadsReprojectWithinTolerance) {
  Rng rng(2);
  size_t solved = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::array<Point, 4> src, dst;
    for (auto& p : src) p = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
    for (auto& p : dst) p = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
    Homography h;
    try {
      h = solve_homography(src, dst);
    } catch (const DegenerateGeometryError&) {
      continue;
    }
    ++solved;
    EXPECT_LT(max_reprojection_error(h, src, dst), 1e-6) << "trial " << trial;
  }
  EXPECT_GT(solved, 450u);
}

TEST(Homography, CollinearPointsAreDegenerate) {
  const std::array<Point, 4> src{{{0, 0}, {1, 1}, {2, 2}, {0, 1}}};
  const std::array<Point, 4> dst{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  EXPECT_THROW(solve_homography(src, dst), DegenerateGeometryError);
}

TEST(Homography, InverseComposesToIdentity) {
  const std::array<Point, 4> src{{{0, 0}, {31, 0}, {31, 31}, {0, 31}}};
  const std::array<Point, 4> dst{{{2, 3}, {29, 1}, {30, 28}, {1, 30}}};
  const Homography h = solve_homography(src, dst);
  const Homography inv = h.inverse();
  for (const Point& p : src) {
    const Point q = inv.apply(h.apply(p));
    EXPECT_NEAR(q.x, p.x, 1e-9);
    EXPECT_NEAR(q.y, p.y, 1e-9);
  }
}

TEST(Warp, IdentityIsByteIdentical) {
  Rng rng(3);
  const Image img = random_image(9, 13, 3, rng);
  EXPECT_EQ(warp_perspective(img, Homography::identity()), img);
}

TEST(Warp, IntegerTranslationShiftsColumn) {
  Image img(2, 2, 1);
  img.pixels = {10, 20, 30, 40};
  Homography shift;
  shift.h[2] = 1;  // x' = x + 1
  const Image out = warp_perspective(img, shift, 7);
  EXPECT_EQ(out.pixels, (std::vector<uint8_t>{7, 10, 7, 30}));
}

TEST(Warp, SingularHomographyIsDegenerate) {
  Homography h;
  h.h = {1, 2, 0, 2, 4, 0, 0, 0, 1};
  EXPECT_THROW(warp_perspective(Image(4, 4, 1), h), DegenerateGeometryError);
}

double round_trip_error(const Image& img, const std::array<Point, 4>& dst, bool skip_edges,
                        size_t square) {
  const Homography h = solve_homography(image_corners(img), dst);
  const Image back = warp_perspective(warp_perspective(img, h), h.inverse());
  auto near_edge = [&](size_t i) { return i % square == 0 || i % square == square - 1; };
  double total = 0.0;
  size_t count = 0;
  for (size_t r = 1; r + 1 < img.height; ++r)
    for (size_t c = 1; c + 1 < img.width; ++c) {
      if (skip_edges && (near_edge(r) || near_edge(c))) continue;
      total += std::abs(int(back.at(r, c, 0)) - int(img.at(r, c, 0)));
      ++count;
    }
  return total / static_cast<double>(count);
}

const std::array<Point, 4> kMildQuad{{{1.5, 0.5}, {62.0, 1.0}, {62.5, 62.0}, {0.5, 62.5}}};

// Two bilinear resamplings blur every hard edge, so the checkerboard is
// scored away from square boundaries and a smooth image over the whole
// interior.
TEST(Warp, CheckerboardRoundTripStaysClose) {
  EXPECT_LT(round_trip_error(checkerboard(64, 16), kMildQuad, true, 16), 2.0);
}

TEST(Warp, SmoothImageRoundTripStaysClose) {
  Image img(64, 64, 1);
  for (size_t r = 0; r < 64; ++r)
    for (size_t c = 0; c < 64; ++c)
      img.at(r, c, 0) = static_cast<uint8_t>(127.5 + 120 * std::sin(r / 9.0) * std::cos(c / 7.0));
  EXPECT_LT(round_trip_error(img, kMildQuad, false, 1), 2.0);
}

TEST(Warp, WrongInverseIsCaughtByRoundTrip) {
  const Image board = checkerboard(64, 16);
  const Homography h = solve_homography(image_corners(board), kMildQuad);
  Homography shifted;
  shifted.h[2] = 8;
  const Image back = warp_perspective(warp_perspective(board, h), shifted);
  double total = 0.0;
  for (size_t i = 0; i < board.pixels.size(); ++i)
    total += std::abs(int(back.pixels[i]) - int(board.pixels[i]));
  EXPECT_GT(total / static_cast<double>(board.pixels.size()), 50.0);
}

TEST(RandomPerspective, ZeroDistortionIsIdentity) {
  Rng rng(4), draw(5);
  const Image img = random_image(16, 16, 3, rng);
  EXPECT_EQ(random_perspective(img, 0.0, draw), img);
}

TEST(RandomPerspective, SameSeedSameOutput) {
  Rng rng(6);
  const Image img = random_image(24, 24, 3, rng);
  Rng a(77), b(77);
  EXPECT_EQ(random_perspective(img, 0.3, a), random_perspective(img, 0.3, b));
}

TEST(RandomPerspective, ChangesImageAndMatchesSampledQuad) {
  const auto samples = generate_synthetic_dataset(3, 8);
  const Image& img = samples[0].image;
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Rng copy = rng;
    const PerspectiveSample s = sample_perspective(img, 0.3, rng);
    EXPECT_LT(max_reprojection_error(s.homography, image_corners(img), s.corners), 1e-6);
    const Homography resolved = solve_homography(image_corners(img), s.corners);
    EXPECT_LT(max_reprojection_error(resolved, image_corners(img), s.corners), 1e-6);
    EXPECT_NE(random_perspective(img, 0.3, copy), img);
  }
}

TEST(RandomPerspective, DisplacementStaysInRange) {
  const Image img(40, 30, 1);
  const double reach = 0.3 * 30 / 2.0;
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const PerspectiveSample s = sample_perspective(img, 0.3, rng);
    const auto corners = image_corners(img);
    for (size_t i = 0; i < 4; ++i) {
      EXPECT_LE(std::abs(s.corners[i].x - corners[i].x), reach + 1e-12);
      EXPECT_LE(std::abs(s.corners[i].y - corners[i].y), reach + 1e-12);
    }
  }
}

TEST(RandomPerspective, DistortionOutOfRangeIsDomainError) {
  Rng rng(1);
  EXPECT_THROW(random_perspective(Image(4, 4, 1), 1.0, rng), DomainError);
  EXPECT_THROW(random_perspective(Image(4, 4, 1), -0.1, rng), DomainError);
}

TEST(Pipeline, DisabledIsIdentity) {
  Rng rng(11), draw(12);
  const Image img = random_image(10, 10, 3, rng);
  EXPECT_EQ(augment_pipeline(img, AugmentConfig::disabled(), draw), img);
}

TEST(Pipeline, HorizontalOnlyEqualsFlip) {
  Rng rng(13), draw(14);
  const Image img = random_image(10, 12, 3, rng);
  AugmentConfig cfg = AugmentConfig::disabled();
  cfg.hflip_prob = 1.0;
  EXPECT_EQ(augment_pipeline(img, cfg, draw), flip(img, FlipAxis::kHorizontal));
}

TEST(Pipeline, DefaultsAreReproducible) {
  Rng rng(15);
  const Image img = random_image(20, 20, 3, rng);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    EXPECT_EQ(augment_pipeline(img, AugmentConfig{}, a), augment_pipeline(img, AugmentConfig{}, b));
  }
}

}  // namespace
}  // namespace capgen
