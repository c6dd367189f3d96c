#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "capgen/attention.hpp"
#include "capgen/error.hpp"
#include "test_support.hpp"

namespace capgen {
namespace {

using testing::numeric_grad;
using testing::random_tensor;

struct Att {
  std::vector<Parameter> registry;
  AttentionParams p;

  Att(size_t d, size_t hidden, size_t att, uint64_t seed = 1) {
    Rng rng(seed);
    p = make_attention(d, hidden, att, rng, registry);
  }
};

Tensor permute_rows(const Tensor& x, const std::vector<size_t>& perm) {
  return gather_rows(x, perm);
}

TEST(Score, IdenticalRowsScoreIdentically) {
  Rng rng(1);
  Att a(3, 4, 5);
  const Tensor row = random_tensor({1, 3}, rng);
  const Tensor scores = score(concat({row, row, row}, 0), random_tensor({4}, rng), a.p);
  ASSERT_EQ(scores.shape(), (Shape{3}));
  EXPECT_EQ(scores[0], scores[1]);
  EXPECT_EQ(scores[1], scores[2]);
}

TEST(Score, ZeroOutputWeightsGiveZeroScores) {
  Rng rng(2);
  Att a(3, 4, 5);
  for (double& x : a.p.w_s.mutable_data()) x = 0.0;
  const Tensor scores = score(random_tensor({6, 3}, rng), random_tensor({4}, rng), a.p);
  for (double v : scores.data()) EXPECT_EQ(v, 0.0);
}

TEST(Score, HandSetOneDimensionalCase) {
  // tanh(1) and tanh(2) to 18 digits.
  constexpr double kTanh1 = 0.761594155955764888;
  constexpr double kTanh2 = 0.964027580075816884;
  Att a(1, 1, 1);
  for (auto& p : a.registry) p.tensor.mutable_data()[0] = 1.0;
  const Tensor s = score(Tensor::from({2, 1}, {0, 1}), Tensor::from({1}, {0}), a.p);
  EXPECT_NEAR(s[0], kTanh1, 1e-15);
  EXPECT_NEAR(s[1], kTanh2, 1e-15);
}

TEST(Score, DimensionMismatchIsContractError) {
  Att a(3, 4, 5);
  EXPECT_THROW(score(Tensor::zeros({2, 2}), Tensor::zeros({4}), a.p), ContractError);
  EXPECT_THROW(score(Tensor::zeros({2, 3}), Tensor::zeros({3}), a.p), ContractError);
}

TEST(Normalize, EqualScores) {
  const Tensor alpha = normalize(Tensor::from({4}, {2, 2, 2, 2}));
  for (double v : alpha.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Normalize, SingleRegion) { EXPECT_EQ(normalize(Tensor::from({1}, {3})).item(), 1.0); }

TEST(Normalize, LogThreeRatio) {
  const Tensor alpha = normalize(Tensor::from({2}, {0, std::log(3.0)}));
  EXPECT_NEAR(alpha[0], 0.25, 1e-15);
  EXPECT_NEAR(alpha[1], 0.75, 1e-15);
}

TEST(Normalize, EmptyIsDomainError) { EXPECT_THROW(normalize(Tensor()), DomainError); }

TEST(Context, OneHotSelectsRow) {
  const Tensor a = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor s = context(a, Tensor::from({3}, {0, 1, 0}));
  EXPECT_EQ(s[0], 3.0);
  EXPECT_EQ(s[1], 4.0);
}

TEST(Context, UniformWeightsGiveMean) {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 6});
  const Tensor s = context(a, Tensor::from({2}, {0.5, 0.5}));
  EXPECT_EQ(s[0], 2.0);
  EXPECT_EQ(s[1], 4.0);
}

TEST(Context, WeightedArithmetic) {
  const Tensor s = context(Tensor::from({2, 2}, {0, 4, 4, 0}), Tensor::from({2}, {0.25, 0.75}));
  EXPECT_EQ(s[0], 3.0);
  EXPECT_EQ(s[1], 1.0);
}

TEST(Context, LengthMismatchIsContractError) {
  EXPECT_THROW(context(Tensor::zeros({3, 2}), Tensor::from({2}, {0.5, 0.5})), ContractError);
}

TEST(Simplex, AcceptsSoftmaxRowsAndCounts) {
  Rng rng(3);
  const uint64_t before = simplex_rows_checked();
  check_simplex(softmax(random_tensor({5, 7}, rng, -30, 30)));
  EXPECT_EQ(simplex_rows_checked(), before + 5);
}

TEST(Simplex, RejectsOffSimplexRows) {
  EXPECT_THROW(check_simplex(Tensor::from({2}, {0.5, 0.6})), InvariantError);
  EXPECT_THROW(check_simplex(Tensor::from({2}, {1.0, 0.0})), InvariantError);
  EXPECT_THROW(check_simplex(Tensor::from({2}, {1.5, -0.5})), InvariantError);
}

TEST(Attend, WeightsArePositiveAndSumToOne) {
  Rng rng(4);
  Att a(5, 6, 7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor ann = random_tensor({8, 5}, rng, -3, 3);
    const AttentionStep step =
        attend(ann, project_annotations(ann, a.p), random_tensor({6}, rng), a.p);
    double total = 0.0;
    for (double v : step.alpha.data()) {
      EXPECT_GT(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Attend, PermutationEquivariant) {
  Rng rng(5);
  Att a(4, 3, 6);
  const std::vector<size_t> perm{3, 0, 4, 1, 2};
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor ann = random_tensor({5, 4}, rng);
    const Tensor h = random_tensor({3}, rng);
    const AttentionStep base = attend(ann, project_annotations(ann, a.p), h, a.p);
    const Tensor shuffled = permute_rows(ann, perm);
    const AttentionStep moved = attend(shuffled, project_annotations(shuffled, a.p), h, a.p);
    for (size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(moved.alpha[i], base.alpha[perm[i]], 1e-15);
    for (size_t j = 0; j < 4; ++j) EXPECT_NEAR(moved.context[j], base.context[j], 1e-14);
  }
}

TEST(Attend, BatchedMatchesPerImage) {
  Rng rng(6);
  Att a(4, 3, 6);
  const Tensor a0 = random_tensor({5, 4}, rng), a1 = random_tensor({5, 4}, rng);
  const Tensor h = random_tensor({2, 3}, rng);
  const Tensor stacked = concat({a0, a1}, 0);
  const AttentionStep batch = attend(stacked, project_annotations(stacked, a.p), h, a.p);
  ASSERT_EQ(batch.alpha.shape(), (Shape{2, 5}));
  ASSERT_EQ(batch.context.shape(), (Shape{2, 4}));
  const Tensor* blocks[2] = {&a0, &a1};
  for (size_t b = 0; b < 2; ++b) {
    const std::vector<size_t> row{b};
    const Tensor hb = reshape(gather_rows(h, row), {3});
    const AttentionStep one = attend(*blocks[b], project_annotations(*blocks[b], a.p), hb, a.p);
    for (size_t i = 0; i < 5; ++i) EXPECT_NEAR(batch.alpha.at(b, i), one.alpha[i], 1e-15);
    for (size_t j = 0; j < 4; ++j) EXPECT_NEAR(batch.context.at(b, j), one.context[j], 1e-15);
  }
}

TEST(Attend, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  Att a(3, 4, 5, 7);
  Tensor ann = random_tensor({4, 3}, rng, -1, 1, true);
  Tensor h = random_tensor({4}, rng, -1, 1, true);
  const Tensor probe = random_tensor({3}, rng);
  auto loss = [&] {
    const AttentionStep s = attend(ann, project_annotations(ann, a.p), h, a.p);
    return add(sum(mul(s.context, probe)), sum(mul(s.alpha, s.alpha)));
  };
  std::vector<Tensor*> all{&ann, &h};
  for (auto& p : a.registry) all.push_back(&p.tensor);
  for (Tensor* t : all) t->zero_grad();
  loss().backward();
  NoGradGuard guard;
  for (Tensor* t : all) {
    const std::vector<double> analytic(t->grad().begin(), t->grad().end());
    for (size_t i = 0; i < t->size(); ++i) {
      const double fd = numeric_grad(*t, i, [&] { return loss().item(); });
      EXPECT_LT(std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)), 1e-4);
    }
  }
}

}  // namespace
}  // namespace capgen
