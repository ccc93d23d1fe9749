#include "cimdl/cimdl.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cimdl;

TEST(Standardize, TrainRowsHaveZeroMeanUnitVariance) {
  Matrix x = oracle::random(4, 50, 1, 3.0);
  x.row(2).array() += 40.0;
  const Matrix y = Standardizer::fit(x).apply(x);
  for (Index r = 0; r < 4; ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.row(r).squaredNorm() / 50.0, 1.0, 1e-12);
  }
}

TEST(Standardize, IdempotentOnStandardizedInput) {
  const Matrix x = oracle::random(3, 30, 2, 7.0);
  const Matrix y = Standardizer::fit(x).apply(x);
  EXPECT_LE((Standardizer::fit(y).apply(y) - y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Standardize, ConstantRowMapsToZero) {
  Matrix x = oracle::random(3, 10, 3);
  x.row(1).setConstant(5.5);
  const Standardizer s = Standardizer::fit(x);
  EXPECT_EQ(s.scale[1], std::sqrt(kVarianceFloor));
  EXPECT_TRUE(s.apply(x).row(1).isZero(0.0));
}

TEST(Standardize, TestBatchUsesTrainStats) {
  const Matrix train = oracle::random(3, 20, 4, 2.0);
  const Matrix test = oracle::random(3, 7, 5, 9.0);
  const Matrix y = Standardizer::fit(train).apply(test);
  for (Index r = 0; r < 3; ++r) {
    long double mean = 0, var = 0;
    for (Index n = 0; n < 20; ++n) mean += train(r, n);
    mean /= 20;
    for (Index n = 0; n < 20; ++n) var += (train(r, n) - mean) * (train(r, n) - mean);
    const long double sd = std::sqrt(var / 20);
    for (Index n = 0; n < 7; ++n) EXPECT_NEAR(y(r, n), static_cast<double>((test(r, n) - mean) / sd), 1e-13);
  }
}

TEST(Standardize, StatsMatrixRoundTrip) {
  const Standardizer s = Standardizer::fit(oracle::random(5, 12, 6));
  const Standardizer back = Standardizer::from_matrix(s.to_matrix());
  EXPECT_EQ(back.mean, s.mean);
  EXPECT_EQ(back.scale, s.scale);
  EXPECT_THROW(Standardizer::from_matrix(Matrix::Ones(3, 5)), FormatError);
  EXPECT_THROW(Standardizer::from_matrix(Matrix::Zero(2, 5)), FormatError);
}

TEST(Standardize, Errors) {
  EXPECT_THROW(Standardizer::fit(Matrix::Zero(3, 1)), ValidationError);
  EXPECT_THROW(Standardizer::fit(Matrix::Ones(3, 4)).apply(Matrix::Zero(2, 4)), ShapeError);
}
