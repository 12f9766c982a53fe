#include <gtest/gtest.h>

#include <random>

#include "deeptwist/errors.hpp"
#include "deeptwist/tensor.hpp"
#include "oracles.hpp"

namespace deeptwist {
namespace {

TEST(UnfoldTest, IdentityMatrixModeZeroIsUnchanged) {
  DenseTensor eye({2, 2}, {1, 0, 0, 1});
  const Matrix m = unfold(eye, 0);
  EXPECT_EQ(m, Matrix(2, 2, {1, 0, 0, 1}));
}

TEST(UnfoldTest, MatrixModeOneIsTranspose) {
  DenseTensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(unfold(x, 1), Matrix(3, 2, {1, 4, 2, 5, 3, 6}));
}

TEST(UnfoldTest, ColumnsFollowRemainingModesRowMajor) {
  // shape [2,3,2]; mode 1 columns enumerate (i0, i2) with i2 fastest.
  DenseTensor x({2, 3, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const Matrix m = unfold(x, 1);
  ASSERT_EQ(m.rows(), 3u);
  ASSERT_EQ(m.cols(), 4u);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t b = 0; b < 2; ++b) EXPECT_EQ(m(k, a * 2 + b), x.at({a, k, b}));
}

TEST(UnfoldTest, ModeOutOfRangeThrows) {
  DenseTensor x({2, 2});
  EXPECT_THROW(unfold(x, 2), ArgumentError);
}

TEST(FoldTest, RowVectorModeZeroUnchanged) {
  Matrix row(1, 4, {1, 2, 3, 4});
  DenseTensor t = fold(row, 0, {1, 4});
  EXPECT_EQ(std::vector<double>(t.data().begin(), t.data().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(FoldTest, MismatchedElementCountThrows) {
  EXPECT_THROW(fold(Matrix(2, 3), 0, {2, 2}), ArgumentError);
  EXPECT_THROW(fold(Matrix(2, 2), 1, {2, 2, 2}), ArgumentError);
}

TEST(FoldTest, RoundTripIsBitwiseForRandomTensorsUpToRankFour) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> ext(1, 5);
  for (int trial = 0; trial < 40; ++trial) {
    Shape shape(1 + trial % 4);
    for (auto& e : shape) e = ext(rng);
    const DenseTensor x = oracle::random_tensor(shape, rng);
    for (std::size_t m = 0; m < shape.size(); ++m) EXPECT_EQ(fold(unfold(x, m), m, shape), x);
  }
}

TEST(FoldTest, RoundTripOnThreeByFourByFive) {
  std::mt19937_64 rng(3);
  const DenseTensor x = oracle::random_tensor({3, 4, 5}, rng);
  const DenseTensor back = fold(unfold(x, 1), 1, x.shape());
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(back[i], x[i]);
}

TEST(ModeMultiplyTest, IdentityLeavesTensorUnchanged) {
  std::mt19937_64 rng(5);
  const DenseTensor x = oracle::random_tensor({3, 4, 2, 5}, rng);
  for (std::size_t m = 0; m < 4; ++m) {
    const DenseTensor y = mode_multiply(x, Matrix::identity(x.extent(m)), m);
    EXPECT_LE(oracle::max_abs_diff(y.data(), x.data()), 1e-12);
  }
}

TEST(ModeMultiplyTest, RowOfOnesSumsAlongMode) {
  DenseTensor ones({2, 2, 2}, 1.0);
  const DenseTensor y = mode_multiply(ones, Matrix(1, 2, {1, 1}), 2);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 1}));
  for (double v : y.data()) EXPECT_EQ(v, 2.0);
}

TEST(ModeMultiplyTest, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> ext(1, 6);
  for (int trial = 0; trial < 25; ++trial) {
    Shape shape(2 + trial % 3);
    for (auto& e : shape) e = ext(rng);
    const DenseTensor x = oracle::random_tensor(shape, rng);
    const std::size_t mode = trial % shape.size();
    const Matrix m = oracle::random_matrix(ext(rng), shape[mode], rng);
    const DenseTensor fast = mode_multiply(x, m, mode);
    const DenseTensor slow = oracle::mode_multiply_loops(x, m, mode);
    ASSERT_EQ(fast.shape(), slow.shape());
    EXPECT_LE(oracle::max_abs_diff(fast.data(), slow.data()), 1e-12);
  }
}

TEST(ModeMultiplyTest, EqualsFoldOfMatrixTimesUnfold) {
  std::mt19937_64 rng(23);
  const DenseTensor x = oracle::random_tensor({3, 4, 5}, rng);
  const Matrix m = oracle::random_matrix(2, 4, rng);
  Shape shape = x.shape();
  shape[1] = 2;
  const DenseTensor via_unfold = fold(matmul(m, unfold(x, 1)), 1, shape);
  EXPECT_LE(oracle::max_abs_diff(mode_multiply(x, m, 1).data(), via_unfold.data()), 1e-12);
}

TEST(ModeMultiplyTest, DimensionMismatchThrows) {
  DenseTensor x({2, 3});
  EXPECT_THROW(mode_multiply(x, Matrix(2, 2), 1), ArgumentError);
}

TEST(DenseTensorTest, ShapeAndDataLengthMustAgree) {
  EXPECT_THROW(DenseTensor({2, 2}, std::vector<double>(3)), ArgumentError);
  EXPECT_THROW(DenseTensor({2, 0}), ArgumentError);
  DenseTensor x({2, 3}, 1.0);
  EXPECT_THROW(x.reshaped({4, 2}), ArgumentError);
  EXPECT_EQ(x.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Kernel4Test, LogicalIndexOrderIsIJST) {
  Kernel4 k(2, 3, 4);
  k(1, 0, 2, 3) = 7.0;
  EXPECT_EQ(k.tensor().at({1, 0, 2, 3}), 7.0);
  EXPECT_THROW(Kernel4(DenseTensor({2, 3, 1, 1})), ArgumentError);
}

}  // namespace
}  // namespace deeptwist
