#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "capgen/error.hpp"
#include "capgen/text.hpp"
#include "test_support.hpp"

namespace capgen {
namespace {

using testing::TempDir;
using testing::spit;

TEST(Tokenize, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(tokenize("A black Dog runs."), (TokenList{"a", "black", "dog", "runs"}));
}

TEST(Tokenize, EmptyText) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, RepeatedWhitespace) {
  EXPECT_EQ(tokenize("two  dogs"), (TokenList{"two", "dogs"}));
  EXPECT_EQ(tokenize("\t one\n\ntwo "), (TokenList{"one", "two"}));
}

TEST(Tokenize, PunctuationOnlyTokensVanish) {
  EXPECT_EQ(tokenize("a , b -- c!"), (TokenList{"a", "b", "c"}));
  EXPECT_EQ(tokenize("don't"), (TokenList{"dont"}));
}

TEST(BuildVocab, MinFreqFilters) {
  const Vocabulary v = build_vocab({{"a", "a", "a"}, {"b"}}, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.index("b"), Vocabulary::kUnk);
}

TEST(BuildVocab, MinFreqOneKeepsEverything) {
  const Vocabulary v = build_vocab({{"x", "y"}, {"z", "x"}}, 1);
  EXPECT_EQ(v.size(), Vocabulary::kReservedCount + 3);
  for (const char* t : {"x", "y", "z"}) EXPECT_TRUE(v.contains(t)) << t;
}

TEST(BuildVocab, TieBreaksLexicographically) {
  const Vocabulary v = build_vocab({{"cat", "ant"}}, 1);
  EXPECT_LT(v.index("ant"), v.index("cat"));
}

TEST(BuildVocab, FrequencyOrdersIndices) {
  const Vocabulary v = build_vocab({{"b", "a", "b"}, {"c", "b", "a"}}, 1);
  EXPECT_EQ(v.token(4), "b");
  EXPECT_EQ(v.token(5), "a");
  EXPECT_EQ(v.token(6), "c");
}

TEST(BuildVocab, ReservedIndicesFixed) {
  const Vocabulary v = build_vocab({{"w"}}, 1);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<PAD>");
  EXPECT_EQ(v.token(Vocabulary::kStart), "<START>");
  EXPECT_EQ(v.token(Vocabulary::kEnd), "<END>");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "<UNK>");
}

TEST(BuildVocab, EmptyCorpusIsDomainError) {
  EXPECT_THROW(build_vocab({}, 1), DomainError);
  EXPECT_THROW(build_vocab({{}}, 1), DomainError);
}

TEST(BuildVocab, DeterministicAcrossRuns) {
  const std::vector<TokenList> corpus{tokenize("a red square above a blue circle"),
                                      tokenize("a blue circle below a red square"),
                                      tokenize("one green triangle")};
  EXPECT_EQ(build_vocab(corpus, 1), build_vocab(corpus, 1));
}

TEST(Vocabulary, IsBijective) {
  const Vocabulary v = build_vocab({tokenize("the quick brown fox jumps over the lazy dog")}, 1);
  for (size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.index(v.token(i)), i);
  EXPECT_EQ(std::set<std::string>(v.tokens().begin(), v.tokens().end()).size(), v.size());
}

TEST(Vocabulary, TooSmallOrMissingReservedPrefix) {
  EXPECT_THROW(Vocabulary(Vocabulary::reserved_tokens()), DomainError);
  EXPECT_THROW(Vocabulary({"a", "b", "c", "d", "e"}), FormatError);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  TempDir dir;
  const Vocabulary v = build_vocab({tokenize("one two two three three three")}, 1);
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
}

TEST(Encode, FramesWithSentinels) {
  const Vocabulary v = build_vocab({{"a", "dog"}}, 1);
  const EncodedCaption enc = encode({"a", "dog"}, v, 16);
  ASSERT_EQ(enc.length(), 4u);
  EXPECT_EQ(enc.tokens.front(), Vocabulary::kStart);
  EXPECT_EQ(enc.tokens.back(), Vocabulary::kEnd);
}

TEST(Encode, TruncatesToMaxLength) {
  const Vocabulary v = build_vocab({{"a", "b", "c", "d"}}, 1);
  const EncodedCaption enc = encode({"a", "b", "c", "d"}, v, 4);
  EXPECT_EQ(enc.length(), 4u);
  EXPECT_EQ(enc.tokens.back(), Vocabulary::kEnd);
  EXPECT_EQ(decode(enc.tokens, v), (TokenList{"a", "b"}));
}

TEST(Encode, UnknownWordsBecomeUnk) {
  const Vocabulary v = build_vocab({{"a"}}, 1);
  EXPECT_EQ(encode({"zebra"}, v, 8).tokens[1], Vocabulary::kUnk);
}

TEST(Encode, RoundTripsInVocabSentences) {
  const std::vector<std::string> sentences{"a red square above a blue circle",
                                           "there is one yellow triangle", "a circle"};
  std::vector<TokenList> corpus;
  for (const auto& s : sentences) corpus.push_back(tokenize(s));
  const Vocabulary v = build_vocab(corpus, 1);
  for (const auto& toks : corpus) EXPECT_EQ(decode(encode(toks, v, 64).tokens, v), toks);
}

TEST(Embed, EmptySequence) {
  EXPECT_TRUE(embed(Tensor::zeros({5, 3}), std::vector<size_t>{}).empty());
}

TEST(Embed, IdentityTableGivesUnitVector) {
  std::vector<double> eye(16, 0.0);
  for (size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  const auto out = embed(Tensor::from({4, 4}, eye), std::vector<size_t>{2});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(std::vector<double>(out[0].data().begin(), out[0].data().end()),
            (std::vector<double>{0, 0, 1, 0}));
}

TEST(Embed, RepeatedIndexAccumulatesAndOtherRowsStayZero) {
  Rng rng(4);
  Tensor table = testing::random_tensor({7, 3}, rng, -1, 1, true);
  const auto rows = embed(table, std::vector<size_t>{5, 5});
  ASSERT_EQ(rows.size(), 2u);
  for (size_t j = 0; j < 3; ++j) EXPECT_EQ(rows[0][j], rows[1][j]);
  sum(add(rows[0], rows[1])).backward();
  for (size_t r = 0; r < 7; ++r) {
    for (size_t j = 0; j < 3; ++j) EXPECT_EQ(table.grad()[r * 3 + j], r == 5 ? 2.0 : 0.0);
  }
}

TEST(Embed, OutOfRangeIsContractError) {
  EXPECT_THROW(embed(Tensor::zeros({3, 2}), std::vector<size_t>{3}), ContractError);
}

class EmbeddingFile : public ::testing::Test {
 protected:
  Vocabulary vocab_ = build_vocab({{"dog", "cat", "emu"}}, 1);
  TempDir dir_;
};

TEST_F(EmbeddingFile, LoadedRowsEchoTheFile) {
  spit(dir_ / "e.txt", "dog 0.1 0.2 0.3\ncat -1 0 1\n");
  const Parameter p = load_embedding_file(dir_ / "e.txt", vocab_, 3, 1);
  EXPECT_EQ(p.name, "embeddings");
  EXPECT_EQ(p.lr_scale, 0.1);
  EXPECT_EQ(p.tensor.shape(), (Shape{vocab_.size(), 3}));
  const size_t dog = vocab_.index("dog");
  EXPECT_EQ(p.tensor.at(dog, 0), 0.1);
  EXPECT_EQ(p.tensor.at(dog, 2), 0.3);
}

TEST_F(EmbeddingFile, MissingTokensGetMeanPlusSmallNoise) {
  spit(dir_ / "e.txt", "3 3\ndog 0.1 0.2 0.3\ncat -1 0 1\nzebra 2 2 2\n");
  const Parameter p = load_embedding_file(dir_ / "e.txt", vocab_, 3, 9);
  const double mean[3] = {(0.1 - 1 + 2) / 3, (0.2 + 0 + 2) / 3, (0.3 + 1 + 2) / 3};
  for (size_t r : {vocab_.index("emu"), Vocabulary::kPad, Vocabulary::kUnk}) {
    for (size_t j = 0; j < 3; ++j) EXPECT_LE(std::abs(p.tensor.at(r, j) - mean[j]), 0.01);
  }
}

TEST_F(EmbeddingFile, EmptyFileFallsBackWithoutError) {
  spit(dir_ / "e.txt", "");
  const Parameter p = load_embedding_file(dir_ / "e.txt", vocab_, 4, 2);
  for (double v : p.tensor.data()) EXPECT_LE(std::abs(v), 0.01);
}

TEST_F(EmbeddingFile, WrongValueCountReportsLine) {
  spit(dir_ / "e.txt", "dog 1 2 3\ncat 1 2\n");
  try {
    load_embedding_file(dir_ / "e.txt", vocab_, 3, 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST_F(EmbeddingFile, HeaderDimMismatchIsConfigError) {
  spit(dir_ / "e.txt", "1 5\ndog 1 2 3 4 5\n");
  EXPECT_THROW(load_embedding_file(dir_ / "e.txt", vocab_, 3, 1), ConfigError);
}

}  // namespace
}  // namespace capgen
