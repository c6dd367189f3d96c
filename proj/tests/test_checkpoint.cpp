#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "capgen/checkpoint.hpp"
#include "capgen/error.hpp"
#include "capgen/optimizer.hpp"
#include "capgen/text.hpp"
#include "test_support.hpp"

namespace capgen {
namespace {

using testing::TempDir;
using testing::random_features;
using testing::scale_parameters;
using testing::slurp;
using testing::spit;
using testing::tiny_config;

Vocabulary twelve_tokens() {
  std::vector<std::string> t = Vocabulary::reserved_tokens();
  for (const char* w : {"a", "red", "blue", "square", "circle", "above", "below", "one"})
    t.push_back(w);
  return Vocabulary(t);
}

void train_a_little(CaptionModel& m, Adam& adam) {
  Rng rng(9);
  const FeatureSet f = random_features(4, 5, rng);
  for (int s = 0; s < 3; ++s) {
    zero_grads(m.parameters());
    const Tensor logits = forward_teacher_forced(m, f, EncodedCaption{{1, 4, 5, 7, 2}});
    const std::vector<size_t> targets{4, 5, 7, 2};
    const std::vector<double> mask(4, 1.0);
    masked_cross_entropy(logits, targets, mask).backward();
    adam.step(m.parameters(), 1e-2);
  }
}

class CheckpointTest : public ::testing::TestWithParam<Variant> {
 protected:
  TempDir dir_;
  Vocabulary vocab_ = twelve_tokens();
};

TEST_P(CheckpointTest, RoundTripReproducesDecodingBitwise) {
  CaptionModel m(tiny_config(GetParam()));
  scale_parameters(m, 2.0);
  m.embeddings().trainable = false;
  save_checkpoint(dir_ / "m.ickp", m, vocab_, nullptr, "seed=1\n");
  const Checkpoint ck = read_checkpoint(dir_ / "m.ickp");
  EXPECT_EQ(ck.model, m.config());
  EXPECT_EQ(ck.config_text, "seed=1\n");
  EXPECT_EQ(Vocabulary(ck.vocabulary), vocab_);
  EXPECT_FALSE(ck.adam.has_value());
  const CaptionModel back = model_from_checkpoint(ck);
  EXPECT_EQ(back.snapshot(), m.snapshot());
  EXPECT_FALSE(back.embeddings().trainable);
  EXPECT_EQ(back.embeddings().lr_scale, m.embeddings().lr_scale);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const FeatureSet f = random_features(4, 5, rng);
    const DecodeResult a = greedy_decode(m, f, 8), b = greedy_decode(back, f, 8);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.logprob, b.logprob);
    EXPECT_EQ(a.alphas, b.alphas);
  }
}

TEST_P(CheckpointTest, OptimizerStateRoundTrips) {
  CaptionModel m(tiny_config(GetParam()));
  Adam adam(m.parameters());
  train_a_little(m, adam);
  save_checkpoint(dir_ / "m.ickp", m, vocab_, &adam);
  const Checkpoint ck = read_checkpoint(dir_ / "m.ickp");
  ASSERT_TRUE(ck.adam.has_value());
  CaptionModel other(tiny_config(GetParam(), 12, 99));
  Adam other_adam(other.parameters());
  load_into(ck, other, &other_adam);
  EXPECT_EQ(other.snapshot(), m.snapshot());
  ASSERT_EQ(other_adam.slots().size(), adam.slots().size());
  for (size_t i = 0; i < adam.slots().size(); ++i) {
    EXPECT_EQ(other_adam.slots()[i].step, adam.slots()[i].step);
    EXPECT_EQ(other_adam.slots()[i].m, adam.slots()[i].m);
    EXPECT_EQ(other_adam.slots()[i].v, adam.slots()[i].v);
  }
  // Continuing from either copy gives the same parameters.
  train_a_little(m, adam);
  train_a_little(other, other_adam);
  EXPECT_EQ(other.snapshot(), m.snapshot());
}

TEST_P(CheckpointTest, TruncatedFileIsFormatErrorAndLeavesModelUntouched) {
  const CaptionModel m(tiny_config(GetParam()));
  save_checkpoint(dir_ / "m.ickp", m, vocab_);
  const std::string bytes = slurp(dir_ / "m.ickp");
  for (size_t cut : {size_t{0}, size_t{3}, size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    spit(dir_ / "cut.ickp", bytes.substr(0, cut));
    EXPECT_THROW(read_checkpoint(dir_ / "cut.ickp"), FormatError) << cut;
  }
}

TEST_P(CheckpointTest, TrailingBytesAreFormatError) {
  const CaptionModel m(tiny_config(GetParam()));
  save_checkpoint(dir_ / "m.ickp", m, vocab_);
  spit(dir_ / "m.ickp", slurp(dir_ / "m.ickp") + "x");
  EXPECT_THROW(read_checkpoint(dir_ / "m.ickp"), FormatError);
}

TEST_P(CheckpointTest, MismatchedHiddenSizeNamesDims) {
  const CaptionModel m(tiny_config(GetParam()));
  save_checkpoint(dir_ / "m.ickp", m, vocab_);
  const Checkpoint ck = read_checkpoint(dir_ / "m.ickp");
  ModelConfig bigger = tiny_config(GetParam());
  bigger.hidden = 20;
  CaptionModel target(bigger);
  const auto before = target.snapshot();
  try {
    load_into(ck, target);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("16"), std::string::npos) << msg;
    EXPECT_NE(msg.find("20"), std::string::npos) << msg;
  }
  EXPECT_EQ(target.snapshot(), before);
}

TEST_P(CheckpointTest, BadMagicIsFormatError) {
  spit(dir_ / "m.ickp", "ICFE\x01\x00\x00\x00");
  EXPECT_THROW(read_checkpoint(dir_ / "m.ickp"), FormatError);
}

INSTANTIATE_TEST_SUITE_P(Checkpoint, CheckpointTest,
                         ::testing::Values(Variant::kEncoderDecoder, Variant::kSoftAttention),
                         [](const auto& info) { return std::string(variant_name(info.param)); });

TEST(Checkpoint, VariantMismatchIsFormatError) {
  TempDir dir;
  const CaptionModel m(tiny_config(Variant::kSoftAttention));
  save_checkpoint(dir / "m.ickp", m, twelve_tokens());
  CaptionModel ed(tiny_config(Variant::kEncoderDecoder));
  EXPECT_THROW(load_into(read_checkpoint(dir / "m.ickp"), ed), FormatError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(read_checkpoint("/nonexistent/capgen/m.ickp"), IoError);
}

}  // namespace
}  // namespace capgen
