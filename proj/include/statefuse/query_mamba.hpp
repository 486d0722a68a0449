#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "statefuse/ssm.hpp"

namespace statefuse {

/// N frames x E channels, E = K * D (K query slots of width D concatenated
/// per frame). Rows run oldest to newest.
struct FusedQuerySequence {
  Eigen::MatrixXd data;
  std::vector<int> frame_order;
  Eigen::Index k_queries = 0;
  Eigen::Index embed_dim = 0;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index width() const { return data.cols(); }

  /// Checks E = K * D, frame_order length, and finiteness.
  void validate() const;
};

struct LayerNormParams {
  Eigen::VectorXd scale;
  Eigen::VectorXd shift;
  double epsilon = 1e-5;
};

/// Gated S4: y = (scan(GELU(x W_u)) * GELU(x W_v)) W_o, one SSM per channel.
struct Gs4Params {
  std::vector<DiscreteSsm<double>> bank;
  Eigen::MatrixXd w_u;
  Eigen::MatrixXd w_v;
  Eigen::MatrixXd w_o;
};

struct QueryMambaLayerParams {
  LayerNormParams ln1;
  LayerNormParams ln2;
  Eigen::MatrixXd dw_kernel;  // E x ksize, column i multiplies x[k - i]
  Gs4Params gs4;
  Eigen::MatrixXd out_weight;  // E x E
  Eigen::VectorXd out_bias;    // E

  Eigen::Index width() const { return out_bias.size(); }
  void validate() const;

  /// Seeded layer; every learnable entry uniform in [-0.1, 0.1] (LN scales
  /// are 1 + U[-0.1, 0.1]).
  static QueryMambaLayerParams random(Eigen::Index width, Eigen::Index state_dim,
                                      Eigen::Index ksize, std::uint64_t seed);
  /// All projections, kernels and biases zero; LN scales 1, shifts 0.
  static QueryMambaLayerParams zero(Eigen::Index width, Eigen::Index state_dim,
                                    Eigen::Index ksize, std::uint64_t seed = 0);
};

struct QueryMambaStack {
  std::vector<QueryMambaLayerParams> layers;

  static QueryMambaStack random(std::size_t n_layers, Eigen::Index width,
                                Eigen::Index state_dim, Eigen::Index ksize, std::uint64_t seed);
  static QueryMambaStack zero(std::size_t n_layers, Eigen::Index width, Eigen::Index state_dim,
                              Eigen::Index ksize);
};

inline constexpr Eigen::Index kDefaultDwKernelSize = 3;
inline constexpr Eigen::Index kDefaultStateDim = 16;
inline constexpr std::size_t kDefaultMambaLayers = 6;

/// Exact (erf) GELU.
double gelu(double x);

template <typename Derived>
auto gelu(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return gelu(v); });
}

/// scale * (x - mean) / sqrt(var + epsilon) + shift, population variance.
/// epsilon == 0 is accepted as long as the input is not constant.
Eigen::VectorXd layer_norm(const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& scale,
                           const Eigen::Ref<const Eigen::VectorXd>& shift, double epsilon);

/// Row-wise layer_norm over an N x E sequence.
Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, const LayerNormParams& p);

/// y[k, e] = sum_i kernel(e, i) * x[k - i, e] with zero history.
Eigen::MatrixXd depthwise_causal_conv(const Eigen::MatrixXd& x, const Eigen::MatrixXd& kernel);

Eigen::MatrixXd gs4_layer(const Eigen::MatrixXd& x, const Gs4Params& params, int layer_index = 0);

/// z  = DWConv(LN1(x)) + LN1(x)
/// z' = GS4(LN2(z)) + LN2(z)
/// out = z' W + b + x
FusedQuerySequence query_mamba_block(const FusedQuerySequence& x,
                                     const QueryMambaLayerParams& params, int layer_index = 0);

FusedQuerySequence query_mamba_stack(const FusedQuerySequence& x, const QueryMambaStack& stack);

}  // namespace statefuse
