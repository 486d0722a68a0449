#include <cmath>

#include <gtest/gtest.h>

#include "statefuse/ssm.hpp"

using namespace statefuse;

namespace {

ContinuousSsm<double> scalar_sys(double a, double b) {
  return ContinuousSsm<double>{Vec<double>::Constant(1, a), Vec<double>::Constant(1, b),
                               Vec<double>::Constant(1, 1.0), 0.0};
}

DiscreteSsm<double> discrete(double a, double b, double c, double d) {
  return {Vec<double>::Constant(1, a), Vec<double>::Constant(1, b), Vec<double>::Constant(1, c), d};
}

}  // namespace

TEST(Discretize, IntegratorLimit) {
  const auto d = discretize_zoh(scalar_sys(0.0, 1.0), TimescaleDelta<double>(1.0));
  EXPECT_EQ(d.a_bar(0), 1.0);
  EXPECT_EQ(d.b_bar(0), 1.0);
}

TEST(Discretize, HalfLife) {
  const auto d = discretize_zoh(scalar_sys(-1.0, 1.0), TimescaleDelta<double>(std::log(2.0)));
  EXPECT_NEAR(d.a_bar(0), 0.5, 1e-15);
  EXPECT_NEAR(d.b_bar(0), 0.5, 1e-15);
}

TEST(Discretize, TinyStep) {
  const auto d = discretize_zoh(scalar_sys(-1.0, 1.0), TimescaleDelta<double>(1e-8));
  EXPECT_NEAR(d.a_bar(0), 1.0 - 1e-8, 1e-15);
  EXPECT_NEAR(d.b_bar(0), 1e-8 - 0.5e-16, 1e-23);
}

TEST(Discretize, RejectsBadInput) {
  EXPECT_THROW(TimescaleDelta<double>(0.0), Error);
  EXPECT_THROW(TimescaleDelta<double>(-1.0), Error);
  EXPECT_THROW(discretize_zoh(scalar_sys(0.5, 1.0), TimescaleDelta<double>(1.0)), Error);
  EXPECT_THROW(ContinuousSsm<double>::stable(Vec<double>::Zero(1), Vec<double>::Ones(1),
                                             Vec<double>::Ones(1), 0.0),
               Error);
}

TEST(Scan, IntegratorCumulativeSum) {
  const Eigen::Vector3d x(1, 2, 3);
  const auto y = scan_recurrent(discrete(1, 1, 1, 0), x);
  EXPECT_EQ(y, Eigen::Vector3d(1, 3, 6));
}

TEST(Scan, SingleStep) {
  const auto sys = random_stable_ssm<double>(8, 4);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);
  const auto y = scan_recurrent(sys, x);
  EXPECT_NEAR(y(0), sys.c_bar.dot(sys.b_bar) * 0.7 + sys.d_bar * 0.7, 1e-15);
}

TEST(Scan, EmptyInputRejected) {
  EXPECT_THROW(scan_recurrent(discrete(1, 1, 1, 0), Eigen::VectorXd()), Error);
}

TEST(Kernel, GeometricTaps) {
  const auto k = materialize_kernel(discrete(0.5, 0.5, 2.0, 0.0), 3);
  EXPECT_EQ(k.taps, Eigen::Vector3d(1.0, 0.5, 0.25));
}

TEST(Kernel, NilpotentState) {
  const auto k = materialize_kernel(discrete(0.0, 3.0, 2.0, 0.0), 4);
  EXPECT_EQ(k.taps, Eigen::Vector4d(6, 0, 0, 0));
  EXPECT_EQ(materialize_kernel(discrete(0.3, 3.0, 2.0, 0.0), 1).taps(0), 6.0);
  EXPECT_THROW(materialize_kernel(discrete(0.3, 3.0, 2.0, 0.0), 0), Error);
}

TEST(Convolution, DeltaAndFeedThrough) {
  const Eigen::Vector3d x(0.3, -1.2, 4.0);
  SsmKernel<double> delta{Eigen::Vector3d(1, 0, 0), 0.0};
  SsmKernel<double> feed{Eigen::Vector3d::Zero(), 1.0};
  for (auto mode : {ConvolutionMode::kDirect, ConvolutionMode::kFft}) {
    EXPECT_LT((apply_convolution(delta, x, mode) - x).norm(), 1e-15);
    EXPECT_LT((apply_convolution(feed, x, mode) - x).norm(), 1e-15);
  }
  EXPECT_THROW(apply_convolution(delta, Eigen::Vector2d(1, 2)), Error);
}

TEST(Convolution, MatchesScan) {
  for (Eigen::Index len : {64, 128}) {
    const auto sys = random_stable_ssm<double>(16, 99 + len);
    Rng rng(len);
    const Eigen::VectorXd x = rng.uniform_vector(len, -1.0, 1.0);
    const auto k = materialize_kernel(sys, len);
    EXPECT_LE(max_relative_error(scan_recurrent(sys, x), apply_convolution(k, x)), 1e-9);
    EXPECT_LE(max_relative_error(scan_recurrent(sys, x), apply_convolution(k, x, ConvolutionMode::kFft)),
              1e-9);
  }
}

TEST(Convolution, FloatScalar) {
  const auto sys = random_stable_ssm<float>(4, 1);
  const Eigen::VectorXf x = Eigen::VectorXf::LinSpaced(32, -1.0f, 1.0f);
  EXPECT_LE(max_relative_error(scan_recurrent(sys, x), apply_convolution(materialize_kernel(sys, 32), x)),
            1e-4);
}

TEST(Defaults, BankIsDeterministicAndStable) {
  const auto a = default_ssm_bank<double>(4, 16, 7);
  const auto b = default_ssm_bank<double>(4, 16, 7);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].a_bar, b[i].a_bar);
    EXPECT_TRUE((a[i].a_bar.array() > 0).all() && (a[i].a_bar.array() < 1).all());
  }
}

TEST(NextPow2, Values) {
  EXPECT_EQ(next_pow2(1), 1);
  EXPECT_EQ(next_pow2(5), 8);
  EXPECT_EQ(next_pow2(8191), 8192);
}

TEST(Convolution, FftLengthOne) {
  SsmKernel<double> k{Eigen::VectorXd::Constant(1, 2.0), 0.5};
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 3.0);
  EXPECT_NEAR(apply_convolution(k, x, ConvolutionMode::kFft)(0), 7.5, 1e-15);
}
