#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sgn/attention.hpp"
#include "support.hpp"

namespace sgn {
namespace {

using test::random_matrix;

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++) = x;
  return m;
}

TEST(AlignScore, ZeroWeightsGiveZero) {
  Tape tape;
  std::mt19937_64 rng(1);
  Tensor s = align_score(tape.constant(random_matrix(rng, 3, 1)),
                         tape.constant(random_matrix(rng, 2, 1)), tape.constant(Matrix::Zero(2, 3)));
  EXPECT_EQ(s.scalar(), 0.0);
}

TEST(AlignScore, IdentityOnBasisVector) {
  Tape tape;
  Tensor e1 = tape.constant(col({1, 0, 0}));
  EXPECT_DOUBLE_EQ(align_score(e1, e1, tape.constant(Matrix::Identity(3, 3))).scalar(), 1.0);
}

TEST(AlignScore, BilinearValue) {
  Tape tape;
  Tensor s = align_score(tape.constant(col({3, -1})), tape.constant(col({1, 2})),
                         tape.constant(Matrix::Identity(2, 2)));
  EXPECT_DOUBLE_EQ(s.scalar(), 1.0);
}

TEST(AlignScore, DimensionMismatchIsShapeError) {
  Tape tape;
  EXPECT_THROW(align_score(tape.constant(col({1, 2, 3})), tape.constant(col({1, 2})),
                           tape.constant(Matrix::Identity(2, 2))),
               ShapeError);
}

TEST(Attend, ZeroWeightsAverageTheRegions) {
  std::mt19937_64 rng(2);
  const Matrix A = random_matrix(rng, 5, 3);
  Tape tape;
  auto att = attend(tape.constant(A), tape.constant(random_matrix(rng, 4, 1)),
                    tape.constant(Matrix::Zero(4, 3)));
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(att.alpha.value()(k), 0.2, 1e-15);
  const Matrix mean = A.colwise().mean().transpose();
  EXPECT_LT((att.context.value() - mean).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attend, SingleRegion) {
  Tape tape;
  const Matrix A = Matrix::Constant(1, 3, 0.7);
  auto att = attend(tape.constant(A), tape.constant(col({1, 2})),
                    tape.constant(Matrix::Constant(2, 3, 0.3)));
  EXPECT_EQ(att.alpha.value()(0), 1.0);
  EXPECT_LT((att.context.value() - A.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attend, ScoresZeroAndLogThree) {
  // W_a^T h = [0, ln 3] with A = I gives scores [0, ln 3].
  Tape tape;
  Matrix W = Matrix::Zero(2, 2);
  W(0, 1) = std::log(3.0);
  auto att = attend(tape.constant(Matrix::Identity(2, 2)), tape.constant(col({1, 0})),
                    tape.constant(W));
  EXPECT_NEAR(att.alpha.value()(0), 0.25, 1e-15);
  EXPECT_NEAR(att.alpha.value()(1), 0.75, 1e-15);
  EXPECT_NEAR(att.context.value()(0), 0.25, 1e-15);
  EXPECT_NEAR(att.context.value()(1), 0.75, 1e-15);
}

TEST(Attend, EmptySetIsContractError) {
  Tape tape;
  EXPECT_THROW(attend(tape.constant(Matrix(0, 2)), tape.constant(col({1, 2})),
                      tape.constant(Matrix::Identity(2, 2))),
               ContractError);
}

TEST(Attend, ConvexHullOverRandomCases) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 9);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = dim(rng), D = dim(rng), H = dim(rng);
    const Matrix A = random_matrix(rng, K, D);
    Tape tape;
    auto att = attend(tape.constant(A), tape.constant(random_matrix(rng, H, 1, 2.0)),
                      tape.constant(random_matrix(rng, H, D, 2.0)));
    const Matrix& a = att.alpha.value();
    ASSERT_TRUE((a.array() > 0.0).all()) << "trial " << trial;
    ASSERT_NEAR(a.sum(), 1.0, 1e-9) << "trial " << trial;
    for (int d = 0; d < D; ++d) {
      const double c = att.context.value()(d);
      ASSERT_GE(c, A.col(d).minCoeff() - 1e-12) << "trial " << trial;
      ASSERT_LE(c, A.col(d).maxCoeff() + 1e-12) << "trial " << trial;
    }
  }
}

TEST(Attend, ShiftingScoresLeavesAlphaUnchanged) {
  // Adding a constant to every score: append a constant column to A and a
  // matching column to W_a so that a_k . W_a^T h shifts by the same amount.
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix A = random_matrix(rng, 6, 3);
    const Matrix h = random_matrix(rng, 4, 1);
    const Matrix W = random_matrix(rng, 4, 3);
    Matrix A2(6, 4), W2(4, 4);
    A2 << A, Matrix::Ones(6, 1);
    W2 << W, random_matrix(rng, 4, 1, 5.0);
    Tape tape;
    const Matrix a1 = attend(tape.constant(A), tape.constant(h), tape.constant(W)).alpha.value();
    const Matrix a2 = attend(tape.constant(A2), tape.constant(h), tape.constant(W2)).alpha.value();
    EXPECT_LT((a1 - a2).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Attend, PermutingRegionsPermutesAlpha) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 7;
    const Matrix A = random_matrix(rng, K, 4);
    const Matrix h = random_matrix(rng, 3, 1), W = random_matrix(rng, 3, 4);
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix P(K, 4);
    for (int k = 0; k < K; ++k) P.row(k) = A.row(perm[k]);
    Tape tape;
    auto base = attend(tape.constant(A), tape.constant(h), tape.constant(W));
    auto moved = attend(tape.constant(P), tape.constant(h), tape.constant(W));
    for (int k = 0; k < K; ++k) {
      EXPECT_NEAR(moved.alpha.value()(k), base.alpha.value()(perm[k]), 1e-12);
    }
    EXPECT_LT((moved.context.value() - base.context.value()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Attend, GradientsMatchCentralDifferences) {
  std::mt19937_64 rng(6);
  const Matrix A0 = random_matrix(rng, 5, 4), h0 = random_matrix(rng, 3, 1),
               W0 = random_matrix(rng, 3, 4), w = random_matrix(rng, 4, 1);
  auto loss = [&](const Matrix& A, const Matrix& h, const Matrix& W) {
    Tape t;
    t.set_recording(false);
    auto att = attend(t.constant(A), t.constant(h), t.constant(W));
    return (att.context.value().array() * w.array()).sum() + att.alpha.value()(2);
  };
  Tape tape;
  Tensor A = tape.leaf(A0), h = tape.leaf(h0), W = tape.leaf(W0);
  auto att = attend(A, h, W);
  tape.backward(add(sum(hadamard(att.context, tape.constant(w))), entry(att.alpha, 2)));
  using test::central_difference;
  EXPECT_LT(test::max_rel_err(A.grad(), central_difference(
                                            [&](const Matrix& x) { return loss(x, h0, W0); }, A0)),
            1e-6);
  EXPECT_LT(test::max_rel_err(h.grad(), central_difference(
                                            [&](const Matrix& x) { return loss(A0, x, W0); }, h0)),
            1e-6);
  EXPECT_LT(test::max_rel_err(W.grad(), central_difference(
                                            [&](const Matrix& x) { return loss(A0, h0, x); }, W0)),
            1e-6);
}

TEST(AnnotationSetType, ValidateRejectsBadSets) {
  AnnotationSet empty{Matrix(0, 3)};
  EXPECT_THROW(empty.validate(), ContractError);
  AnnotationSet bad{Matrix::Constant(2, 2, std::nan(""))};
  EXPECT_ANY_THROW(bad.validate());
  AnnotationSet ok{Matrix::Ones(4, 6)};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_EQ(ok.regions(), 4);
  EXPECT_EQ(ok.feature_dim(), 6);
}

}  // namespace
}  // namespace sgn
