#include "statefuse/query_mamba.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace statefuse {

namespace {

void check_finite(const Eigen::MatrixXd& m, int layer_index, const char* stage) {
  if (!m.allFinite())
    throw Error(ErrorKind::kNumericOverflow,
                std::string("non-finite ") + stage + " output in layer " + std::to_string(layer_index));
}

void validate_ln(const LayerNormParams& p, Eigen::Index width, const char* name) {
  require(p.scale.size() == width && p.shift.size() == width, ErrorKind::kInvalidParameter,
          std::string(name) + " width mismatch");
  require(p.epsilon > 0.0 && std::isfinite(p.epsilon), ErrorKind::kInvalidParameter,
          std::string(name) + " epsilon must be > 0");
  require(p.scale.allFinite() && p.shift.allFinite(), ErrorKind::kInvalidParameter,
          std::string(name) + " non-finite parameter");
}

}  // namespace

void FusedQuerySequence::validate() const {
  require(data.rows() >= 1, ErrorKind::kInvalidParameter, "fused sequence has no frames");
  require(k_queries * embed_dim == data.cols(), ErrorKind::kInvalidParameter,
          "fused width must equal K * D");
  require(static_cast<Eigen::Index>(frame_order.size()) == data.rows(),
          ErrorKind::kInvalidParameter, "frame_order length must equal frame count");
  require(data.allFinite(), ErrorKind::kInvalidParameter, "fused sequence has non-finite entries");
}

void QueryMambaLayerParams::validate() const {
  const Eigen::Index e = width();
  require(e >= 1, ErrorKind::kInvalidParameter, "layer width must be >= 1");
  validate_ln(ln1, e, "ln1");
  validate_ln(ln2, e, "ln2");
  require(dw_kernel.rows() == e && dw_kernel.cols() >= 1, ErrorKind::kInvalidParameter,
          "dw_kernel must be E x ksize");
  require(static_cast<Eigen::Index>(gs4.bank.size()) == e, ErrorKind::kInvalidParameter,
          "gs4 bank must hold one SSM per channel");
  for (const auto* w : {&gs4.w_u, &gs4.w_v, &gs4.w_o, &out_weight})
    require(w->rows() == e && w->cols() == e && w->allFinite(), ErrorKind::kInvalidParameter,
            "projection must be finite E x E");
  require(dw_kernel.allFinite() && out_bias.allFinite(), ErrorKind::kInvalidParameter,
          "non-finite layer parameter");
}

QueryMambaLayerParams QueryMambaLayerParams::random(Eigen::Index width, Eigen::Index state_dim,
                                                    Eigen::Index ksize, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x51a7eULL));
  QueryMambaLayerParams p;
  p.ln1.scale = Eigen::VectorXd::Ones(width) + rng.uniform_vector(width, -0.1, 0.1);
  p.ln1.shift = rng.uniform_vector(width, -0.1, 0.1);
  p.ln2.scale = Eigen::VectorXd::Ones(width) + rng.uniform_vector(width, -0.1, 0.1);
  p.ln2.shift = rng.uniform_vector(width, -0.1, 0.1);
  p.dw_kernel = rng.uniform_matrix(width, ksize, -0.1, 0.1);
  p.gs4.bank = default_ssm_bank<double>(width, state_dim, mix_seed(seed, 0xb4c4ULL));
  p.gs4.w_u = rng.uniform_matrix(width, width, -0.1, 0.1);
  p.gs4.w_v = rng.uniform_matrix(width, width, -0.1, 0.1);
  p.gs4.w_o = rng.uniform_matrix(width, width, -0.1, 0.1);
  p.out_weight = rng.uniform_matrix(width, width, -0.1, 0.1);
  p.out_bias = rng.uniform_vector(width, -0.1, 0.1);
  return p;
}

QueryMambaLayerParams QueryMambaLayerParams::zero(Eigen::Index width, Eigen::Index state_dim,
                                                  Eigen::Index ksize, std::uint64_t seed) {
  QueryMambaLayerParams p;
  p.ln1 = {Eigen::VectorXd::Ones(width), Eigen::VectorXd::Zero(width), 1e-5};
  p.ln2 = p.ln1;
  p.dw_kernel = Eigen::MatrixXd::Zero(width, ksize);
  p.gs4.bank = default_ssm_bank<double>(width, state_dim, seed);
  p.gs4.w_u = Eigen::MatrixXd::Zero(width, width);
  p.gs4.w_v = Eigen::MatrixXd::Zero(width, width);
  p.gs4.w_o = Eigen::MatrixXd::Zero(width, width);
  p.out_weight = Eigen::MatrixXd::Zero(width, width);
  p.out_bias = Eigen::VectorXd::Zero(width);
  return p;
}

QueryMambaStack QueryMambaStack::random(std::size_t n_layers, Eigen::Index width,
                                        Eigen::Index state_dim, Eigen::Index ksize,
                                        std::uint64_t seed) {
  QueryMambaStack s;
  for (std::size_t i = 0; i < n_layers; ++i)
    s.layers.push_back(QueryMambaLayerParams::random(width, state_dim, ksize, mix_seed(seed, i)));
  return s;
}

QueryMambaStack QueryMambaStack::zero(std::size_t n_layers, Eigen::Index width,
                                      Eigen::Index state_dim, Eigen::Index ksize) {
  QueryMambaStack s;
  for (std::size_t i = 0; i < n_layers; ++i)
    s.layers.push_back(QueryMambaLayerParams::zero(width, state_dim, ksize, i));
  return s;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Eigen::VectorXd layer_norm(const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& scale,
                           const Eigen::Ref<const Eigen::VectorXd>& shift, double epsilon) {
  const Eigen::Index e = x.size();
  require(e >= 1, ErrorKind::kInvalidParameter, "layer_norm width must be >= 1");
  require(scale.size() == e && shift.size() == e, ErrorKind::kInvalidParameter,
          "layer_norm parameter width mismatch");
  require(epsilon >= 0.0 && std::isfinite(epsilon), ErrorKind::kInvalidParameter,
          "layer_norm epsilon must be >= 0");
  require(x.allFinite(), ErrorKind::kInvalidParameter, "layer_norm input not finite");
  const double mean = x.mean();
  const Eigen::ArrayXd centered = x.array() - mean;
  const double var = centered.square().sum() / static_cast<double>(e);
  const double denom = std::sqrt(var + epsilon);
  require(denom > 0.0, ErrorKind::kInvalidParameter,
          "layer_norm of a constant row needs epsilon > 0");
  return (scale.array() * centered / denom + shift.array()).matrix();
}

Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, const LayerNormParams& p) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    y.row(r) = layer_norm(x.row(r).transpose(), p.scale, p.shift, p.epsilon).transpose();
  return y;
}

Eigen::MatrixXd depthwise_causal_conv(const Eigen::MatrixXd& x, const Eigen::MatrixXd& kernel) {
  require(x.rows() >= 1, ErrorKind::kInvalidParameter, "dwconv needs N >= 1");
  require(kernel.cols() >= 1, ErrorKind::kInvalidParameter, "dwconv needs ksize >= 1");
  require(kernel.rows() == x.cols(), ErrorKind::kInvalidParameter,
          "dwconv kernel rows must equal channel count");
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < kernel.cols(); ++i) {
    if (i >= n) break;
    // Rows [i, n) receive tap i applied to rows [0, n - i).
    y.bottomRows(n - i).array() +=
        x.topRows(n - i).array().rowwise() * kernel.col(i).transpose().array();
  }
  return y;
}

Eigen::MatrixXd gs4_layer(const Eigen::MatrixXd& x, const Gs4Params& params, int layer_index) {
  const Eigen::Index e = x.cols();
  require(static_cast<Eigen::Index>(params.bank.size()) == e, ErrorKind::kInvalidParameter,
          "gs4 bank size must equal channel count");
  require(params.w_u.rows() == e && params.w_u.cols() == e && params.w_v.rows() == e &&
              params.w_v.cols() == e && params.w_o.rows() == e && params.w_o.cols() == e,
          ErrorKind::kInvalidParameter, "gs4 projections must be E x E");

  const Eigen::MatrixXd u = gelu(x * params.w_u);
  const Eigen::MatrixXd v = gelu(x * params.w_v);
  check_finite(u, layer_index, "gs4 u-projection");
  check_finite(v, layer_index, "gs4 v-projection");

  Eigen::MatrixXd s(x.rows(), e);
  // Channels are independent; each column is its own scan.
  for (Eigen::Index c = 0; c < e; ++c) s.col(c) = scan_recurrent(params.bank[c], u.col(c));
  check_finite(s, layer_index, "gs4 scan");

  Eigen::MatrixXd y = s.cwiseProduct(v) * params.w_o;
  check_finite(y, layer_index, "gs4");
  return y;
}

FusedQuerySequence query_mamba_block(const FusedQuerySequence& x,
                                     const QueryMambaLayerParams& params, int layer_index) {
  x.validate();
  params.validate();
  require(params.width() == x.width(), ErrorKind::kInvalidParameter,
          "layer width does not match sequence width");

  const Eigen::MatrixXd ln1 = layer_norm_rows(x.data, params.ln1);
  const Eigen::MatrixXd z = depthwise_causal_conv(ln1, params.dw_kernel) + ln1;
  check_finite(z, layer_index, "dwconv");
  const Eigen::MatrixXd ln2 = layer_norm_rows(z, params.ln2);
  const Eigen::MatrixXd z2 = gs4_layer(ln2, params.gs4, layer_index) + ln2;

  FusedQuerySequence out = x;
  Eigen::MatrixXd lin = z2 * params.out_weight;
  lin.rowwise() += params.out_bias.transpose();
  out.data = x.data + lin;
  check_finite(out.data, layer_index, "linear");
  return out;
}

FusedQuerySequence query_mamba_stack(const FusedQuerySequence& x, const QueryMambaStack& stack) {
  require(!stack.layers.empty(), ErrorKind::kInvalidParameter, "stack needs at least one layer");
  FusedQuerySequence cur = x;
  for (std::size_t i = 0; i < stack.layers.size(); ++i)
    cur = query_mamba_block(cur, stack.layers[i], static_cast<int>(i));
  return cur;
}

}  // namespace statefuse
