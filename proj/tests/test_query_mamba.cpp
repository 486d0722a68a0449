#include <cmath>

#include <gtest/gtest.h>

#include "statefuse/query_mamba.hpp"

using namespace statefuse;

namespace {

FusedQuerySequence seq(const Eigen::MatrixXd& data, Eigen::Index k) {
  FusedQuerySequence s;
  s.data = data;
  s.k_queries = k;
  s.embed_dim = data.cols() / k;
  for (Eigen::Index i = 0; i < data.rows(); ++i) s.frame_order.push_back(static_cast<int>(i));
  return s;
}

}  // namespace

TEST(LayerNorm, Examples) {
  const Eigen::Vector3d ones = Eigen::Vector3d::Ones();
  const Eigen::Vector3d zeros = Eigen::Vector3d::Zero();
  EXPECT_EQ(layer_norm(Eigen::Vector3d::Constant(4.2), ones, zeros, 1e-5), zeros);
  const auto a = layer_norm(Eigen::Vector2d(-1, 1), Eigen::Vector2d::Ones(), Eigen::Vector2d::Zero(), 0.0);
  EXPECT_NEAR(a(0), -1.0, 1e-15);
  EXPECT_NEAR(a(1), 1.0, 1e-15);
  const auto b = layer_norm(Eigen::Vector3d(1, 2, 3), ones, zeros, 0.0);
  EXPECT_NEAR(b(0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(b(1), 0.0, 1e-15);
  EXPECT_NEAR(b(2), 1.224744871391589, 1e-12);
  EXPECT_THROW(layer_norm(Eigen::Vector3d::Constant(1.0), ones, zeros, 0.0), Error);
  EXPECT_THROW(layer_norm(Eigen::Vector3d(1, 2, 3), ones, zeros, -1.0), Error);
}

TEST(DepthwiseConv, Examples) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(depthwise_causal_conv(x, Eigen::MatrixXd::Ones(2, 1)), x);
  Eigen::MatrixXd delay(2, 2);
  delay << 0, 1, 0, 1;
  Eigen::MatrixXd shifted(3, 2);
  shifted << 0, 0, 1, 2, 3, 4;
  EXPECT_EQ(depthwise_causal_conv(x, delay), shifted);
  const Eigen::MatrixXd x2 = Eigen::Vector2d(2, 4);
  const Eigen::MatrixXd half = Eigen::RowVector2d(0.5, 0.5);
  EXPECT_EQ(depthwise_causal_conv(x2, half), Eigen::MatrixXd(Eigen::Vector2d(1, 3)));
}

TEST(Gelu, ExactErf) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
}

TEST(Gs4, ClosedGate) {
  auto p = QueryMambaLayerParams::random(4, 8, 3, 1).gs4;
  p.w_v.setZero();
  Rng rng(2);
  EXPECT_EQ(gs4_layer(rng.uniform_matrix(5, 4, -1, 1), p), Eigen::MatrixXd::Zero(5, 4));
  const auto q = QueryMambaLayerParams::random(4, 8, 3, 1).gs4;
  EXPECT_EQ(gs4_layer(Eigen::MatrixXd::Zero(5, 4), q), Eigen::MatrixXd::Zero(5, 4));
}

TEST(Gs4, ScalarComposition) {
  Gs4Params p;
  p.bank.push_back({Vec<double>::Ones(1), Vec<double>::Ones(1), Vec<double>::Zero(1), 1.0});
  p.w_u = p.w_v = p.w_o = Eigen::MatrixXd::Ones(1, 1);
  const auto y = gs4_layer(Eigen::MatrixXd::Ones(1, 1), p);
  EXPECT_NEAR(y(0, 0), gelu(1.0) * gelu(1.0), 1e-15);
  EXPECT_NEAR(y(0, 0), 0.7078609817371, 1e-12);
}

TEST(Block, ZeroWeightsIsIdentity) {
  Rng rng(3);
  const auto x = seq(rng.uniform_matrix(6, 8, -2, 2), 2);
  EXPECT_EQ(query_mamba_block(x, QueryMambaLayerParams::zero(8, 16, 3)).data, x.data);
  EXPECT_EQ(query_mamba_stack(x, QueryMambaStack::zero(1, 8, 16, 3)).data, x.data);
  EXPECT_EQ(query_mamba_stack(x, QueryMambaStack::zero(6, 8, 16, 3)).data, x.data);
}

TEST(Block, ZeroInputZeroBias) {
  auto p = QueryMambaLayerParams::random(8, 16, 3, 4);
  p.ln1.shift.setZero();
  p.ln2.shift.setZero();
  p.out_bias.setZero();
  const auto x = seq(Eigen::MatrixXd::Zero(4, 8), 2);
  EXPECT_EQ(query_mamba_block(x, p).data, x.data);
}

TEST(Block, RandomForward) {
  Rng rng(5);
  const auto x = seq(rng.uniform_matrix(4, 8, -1, 1), 2);
  const auto y = query_mamba_block(x, QueryMambaLayerParams::random(8, 16, 3, 6));
  EXPECT_EQ(y.data.rows(), 4);
  EXPECT_EQ(y.data.cols(), 8);
  EXPECT_TRUE(y.data.allFinite());
  EXPECT_NE(y.data, x.data);
}

TEST(Stack, Deterministic) {
  Rng rng(7);
  const auto x = seq(rng.uniform_matrix(8, 12, -1, 1), 3);
  const auto a = query_mamba_stack(x, QueryMambaStack::random(6, 12, 16, 3, 8));
  const auto b = query_mamba_stack(x, QueryMambaStack::random(6, 12, 16, 3, 8));
  EXPECT_EQ(0, std::memcmp(a.data.data(), b.data.data(), sizeof(double) * a.data.size()));
}

TEST(Block, ShapeMismatchRejected) {
  Rng rng(9);
  const auto x = seq(rng.uniform_matrix(4, 8, -1, 1), 2);
  EXPECT_THROW(query_mamba_block(x, QueryMambaLayerParams::zero(6, 16, 3)), Error);
}

TEST(Gs4, OverflowIsTagged) {
  auto p = QueryMambaLayerParams::random(2, 4, 3, 1).gs4;
  p.w_u.setConstant(1e200);
  p.w_v.setConstant(1e200);
  try {
    gs4_layer(Eigen::MatrixXd::Constant(3, 2, 1e200), p, 4);
    FAIL() << "expected overflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumericOverflow);
    EXPECT_NE(std::string(e.what()).find('4'), std::string::npos);
  }
}
