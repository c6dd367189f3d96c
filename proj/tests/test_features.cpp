#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>

#include "capgen/augment.hpp"
#include "capgen/error.hpp"
#include "capgen/features.hpp"
#include "capgen/image.hpp"
#include "capgen/synthetic.hpp"
#include "capgen/text.hpp"
#include "test_support.hpp"

namespace capgen {
namespace {

using testing::TempDir;
using testing::random_features;
using testing::slurp;
using testing::spit;

float as_float(double v) { return static_cast<float>(v); }

TEST(FeatureFile, SizeFollowsLayout) {
  TempDir dir;
  Rng rng(1);
  write_features({random_features(2, 3, rng, "img42")}, dir / "f.icfe");
  EXPECT_EQ(std::filesystem::file_size(dir / "f.icfe"), 4u + 4 * 4 + (4 + 5) + 24);
}

TEST(FeatureFile, RoundTripWithin32Bits) {
  TempDir dir;
  Rng rng(2);
  std::vector<FeatureSet> sets;
  for (int i = 0; i < 5; ++i) sets.push_back(random_features(4, 7, rng, "id" + std::to_string(i)));
  write_features(sets, dir / "f.icfe");
  const auto back = read_features(dir / "f.icfe");
  ASSERT_EQ(back.size(), sets.size());
  for (size_t i = 0; i < sets.size(); ++i) {
    EXPECT_EQ(back[i].image_id, sets[i].image_id);
    ASSERT_EQ(back[i].annotations.shape(), sets[i].annotations.shape());
    for (size_t j = 0; j < sets[i].annotations.size(); ++j) {
      EXPECT_EQ(back[i].annotations[j], static_cast<double>(as_float(sets[i].annotations[j])));
    }
  }
}

TEST(FeatureFile, EmptyListIsReadable) {
  TempDir dir;
  write_features({}, dir / "f.icfe");
  EXPECT_TRUE(read_features(dir / "f.icfe").empty());
}

TEST(FeatureFile, NonUniformShapesAreContractError) {
  TempDir dir;
  Rng rng(3);
  EXPECT_THROW(write_features({random_features(2, 3, rng), random_features(3, 3, rng)},
                              dir / "f.icfe"),
               ContractError);
}

TEST(FeatureFile, BadMagicIsFormatError) {
  TempDir dir;
  spit(dir / "f.icfe", "NOPE0000000000000000");
  EXPECT_THROW(read_features(dir / "f.icfe"), FormatError);
}

TEST(FeatureFile, BadVersionIsFormatError) {
  TempDir dir;
  write_features({}, dir / "f.icfe");
  std::string bytes = slurp(dir / "f.icfe");
  bytes[4] = 2;
  spit(dir / "f.icfe", bytes);
  EXPECT_THROW(read_features(dir / "f.icfe"), FormatError);
}

TEST(FeatureFile, TruncationReportsByteOffset) {
  TempDir dir;
  Rng rng(4);
  write_features({random_features(2, 3, rng, "x")}, dir / "f.icfe");
  const std::string bytes = slurp(dir / "f.icfe");
  spit(dir / "f.icfe", bytes.substr(0, bytes.size() - 3));
  try {
    read_features(dir / "f.icfe");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
}

TEST(ToyEncoder, UniformGrayImage) {
  const Image img(8, 8, 3, 128);
  const FeatureSet f = toy_patch_encode(img, 1);
  ASSERT_EQ(f.annotations.shape(), (Shape{1, 5}));
  // 128/255 to 18 digits.
  constexpr double kGray = 0.501960784313725490;
  for (size_t ch = 0; ch < 3; ++ch) EXPECT_NEAR(f.annotations[ch], kGray, 1e-15);
  EXPECT_EQ(f.annotations[3], 0.5);
  EXPECT_EQ(f.annotations[4], 0.5);
}

TEST(ToyEncoder, BlackImageKeepsPositions) {
  const FeatureSet f = toy_patch_encode(Image(4, 4, 3, 0), 2);
  ASSERT_EQ(f.annotations.shape(), (Shape{4, 5}));
  const double pos[4][2] = {{0.25, 0.25}, {0.25, 0.75}, {0.75, 0.25}, {0.75, 0.75}};
  for (size_t cell = 0; cell < 4; ++cell) {
    for (size_t ch = 0; ch < 3; ++ch) EXPECT_EQ(f.annotations.at(cell, ch), 0.0);
    EXPECT_EQ(f.annotations.at(cell, 3), pos[cell][0]);
    EXPECT_EQ(f.annotations.at(cell, 4), pos[cell][1]);
  }
}

TEST(ToyEncoder, HorizontalFlipSwapsColumns) {
  Rng rng(5);
  Image img(6, 6, 3);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  const FeatureSet a = toy_patch_encode(img, 2);
  const FeatureSet b = toy_patch_encode(flip(img, FlipAxis::kHorizontal), 2);
  for (size_t gr = 0; gr < 2; ++gr) {
    for (size_t gc = 0; gc < 2; ++gc) {
      const size_t here = gr * 2 + gc, mirror = gr * 2 + (1 - gc);
      for (size_t ch = 0; ch < 3; ++ch) {
        EXPECT_NEAR(b.annotations.at(here, ch), a.annotations.at(mirror, ch), 1e-15);
      }
      EXPECT_EQ(b.annotations.at(here, 3), a.annotations.at(here, 3));
      EXPECT_EQ(b.annotations.at(here, 4), a.annotations.at(here, 4));
    }
  }
}

TEST(ToyEncoder, IsPure) {
  const auto samples = generate_synthetic_dataset(3, 11);
  const FeatureSet a = toy_patch_encode(samples[0].image, 4);
  const FeatureSet b = toy_patch_encode(Image(samples[0].image), 4);
  EXPECT_TRUE(std::equal(a.annotations.data().begin(), a.annotations.data().end(),
                         b.annotations.data().begin()));
}

TEST(ToyEncoder, ImageSmallerThanGridIsDomainError) {
  EXPECT_THROW(toy_patch_encode(Image(2, 8, 3), 3), DomainError);
}

TEST(Synthetic, SameSeedIsByteIdentical) {
  const auto a = generate_synthetic_dataset(20, 5);
  const auto b = generate_synthetic_dataset(20, 5);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].captions, b[i].captions);
    EXPECT_EQ(a[i].split, b[i].split);
  }
}

TEST(Synthetic, TenImagesSplitEightOneOne) {
  const auto s = generate_synthetic_dataset(10, 1);
  size_t counts[3] = {0, 0, 0};
  for (const auto& x : s) ++counts[static_cast<int>(x.split)];
  EXPECT_EQ(counts[0], 8u);
  EXPECT_EQ(counts[1], 1u);
  EXPECT_EQ(counts[2], 1u);
}

TEST(Synthetic, TooFewImagesIsDomainError) {
  EXPECT_THROW(generate_synthetic_dataset(2, 1), DomainError);
}

TEST(Synthetic, CaptionVocabularyIsSmall) {
  std::set<std::string> words;
  for (const auto& s : generate_synthetic_dataset(300, 3)) {
    EXPECT_EQ(s.captions.size(), 5u);
    for (const auto& c : s.captions)
      for (const auto& w : tokenize(c)) words.insert(w);
  }
  EXPECT_LE(words.size(), 30u);
}

TEST(Synthetic, CaptionsNameTheRenderedShapes) {
  const std::set<std::string> colors{"red", "green", "blue", "yellow"};
  const std::set<std::string> kinds{"square", "circle", "triangle"};
  for (const auto& s : generate_synthetic_dataset(100, 9)) {
    std::multiset<std::string> drawn;
    for (const auto& r : s.shapes) drawn.insert(std::string(color_name(r.color)) + " " +
                                                shape_name(r.shape));
    for (const auto& c : s.captions) {
      const TokenList t = tokenize(c);
      std::multiset<std::string> said;
      for (size_t i = 0; i + 1 < t.size(); ++i) {
        if (colors.count(t[i]) && kinds.count(t[i + 1])) said.insert(t[i] + " " + t[i + 1]);
      }
      EXPECT_EQ(said, drawn) << s.id << ": " << c;
    }
    if (s.shapes.size() == 2) {
      const auto& upper = s.shapes[0].row < s.shapes[1].row ? s.shapes[0] : s.shapes[1];
      const std::string first = std::string("a ") + color_name(upper.color) + " " +
                                shape_name(upper.shape) + " above";
      EXPECT_EQ(s.captions[0].rfind(first, 0), 0u) << s.captions[0];
    }
  }
}

TEST(Manifest, RoundTrip) {
  TempDir dir;
  const std::vector<ManifestEntry> entries{{"a", Split::kTrain, {"one", "two words"}},
                                           {"b", Split::kTest, {"x"}}};
  write_manifest(entries, dir / "m.tsv");
  const auto back = read_manifest(dir / "m.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].captions, entries[0].captions);
  EXPECT_EQ(back[1].split, Split::kTest);
}

TEST(Manifest, MalformedLineReportsLineNumber) {
  TempDir dir;
  spit(dir / "m.tsv", "a\ttrain\tcap\nbroken line\n");
  try {
    read_manifest(dir / "m.tsv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Ppm, RoundTripRgbAndGray) {
  TempDir dir;
  Rng rng(6);
  for (size_t channels : {size_t{3}, size_t{1}}) {
    Image img(5, 7, channels);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
    write_ppm(img, dir / "x.ppm");
    EXPECT_EQ(read_ppm(dir / "x.ppm"), img);
  }
}

TEST(Ppm, TruncatedRasterIsFormatError) {
  TempDir dir;
  write_ppm(Image(4, 4, 3, 9), dir / "x.ppm");
  const std::string bytes = slurp(dir / "x.ppm");
  spit(dir / "x.ppm", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_ppm(dir / "x.ppm"), FormatError);
}

}  // namespace
}  // namespace capgen
