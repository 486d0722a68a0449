#include "statefuse/query_generator.hpp"

#include <algorithm>
#include <cmath>

#include "statefuse/error.hpp"
#include "statefuse/random.hpp"

namespace statefuse {

void FeatureMap::validate() const {
  require(height >= 2 && width >= 2 && channels >= 1, ErrorKind::kInvalidParameter,
          "feature map must be at least 2 x 2 x 1");
  require(data.size() == static_cast<std::size_t>(height) * width * channels,
          ErrorKind::kInvalidParameter, "feature map storage size mismatch");
  for (double v : data)
    require(std::isfinite(v), ErrorKind::kInvalidParameter, "feature map has non-finite entries");
}

void Proposal2D::validate() const {
  require(center.allFinite() && (center.array() >= 0.0).all() && (center.array() <= 1.0).all(),
          ErrorKind::kInvalidParameter, "proposal center must lie in [0, 1]^2");
  require(score >= 0.0 && score <= 1.0, ErrorKind::kInvalidParameter,
          "proposal score must lie in [0, 1]");
  require(depth_dist.size() >= 1 && (depth_dist.array() >= 0.0).all() &&
              std::abs(depth_dist.sum() - 1.0) <= 1e-9,
          ErrorKind::kInvalidParameter, "depth distribution must be a probability vector");
}

void DeformAttnParams::validate(int c) const {
  require(n_heads >= 1 && n_keys >= 1, ErrorKind::kInvalidParameter,
          "deformable attention needs >= 1 head and key");
  require(static_cast<int>(value_proj.size()) == n_heads &&
              static_cast<int>(out_proj.size()) == n_heads &&
              static_cast<int>(offsets.size()) == n_heads,
          ErrorKind::kInvalidParameter, "per-head parameter count mismatch");
  require(weights.rows() == n_heads && weights.cols() == n_keys, ErrorKind::kInvalidParameter,
          "attention weight table must be n_heads x n_keys");
  for (int m = 0; m < n_heads; ++m) {
    require(value_proj[m].rows() == c && out_proj[m].cols() == c &&
                value_proj[m].cols() == out_proj[m].rows(),
            ErrorKind::kInvalidParameter, "head projection shape mismatch");
    require(static_cast<int>(offsets[m].size()) == n_keys, ErrorKind::kInvalidParameter,
            "offset table must have n_keys entries per head");
    require((weights.row(m).array() >= 0.0).all() && (weights.row(m).array() <= 1.0).all() &&
                std::abs(weights.row(m).sum() - 1.0) <= 1e-9,
            ErrorKind::kInvalidParameter, "attention weights must be convex per head");
  }
}

Eigen::MatrixXd DeformAttnParams::normalize_weights(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd w(logits.rows(), logits.cols());
  for (Eigen::Index m = 0; m < logits.rows(); ++m) {
    const Eigen::ArrayXd e = (logits.row(m).array() - logits.row(m).maxCoeff()).exp();
    w.row(m) = (e / e.sum()).matrix().transpose();
  }
  return w;
}

DeformAttnParams DeformAttnParams::seeded(int channels, int n_heads, int n_keys, int head_dim,
                                          std::uint64_t seed, double offset_scale_px) {
  Rng rng(mix_seed(seed, 0xdefaULL));
  DeformAttnParams p;
  p.n_heads = n_heads;
  p.n_keys = n_keys;
  for (int m = 0; m < n_heads; ++m) {
    p.value_proj.push_back(rng.uniform_matrix(channels, head_dim, -0.1, 0.1));
    p.out_proj.push_back(rng.uniform_matrix(head_dim, channels, -0.1, 0.1));
    std::vector<Eigen::Vector2d> offs;
    for (int n = 0; n < n_keys; ++n) {
      const double dx = rng.uniform(-offset_scale_px, offset_scale_px);
      const double dy = rng.uniform(-offset_scale_px, offset_scale_px);
      offs.emplace_back(dx, dy);
    }
    p.offsets.push_back(std::move(offs));
  }
  p.weights = normalize_weights(rng.uniform_matrix(n_heads, n_keys, -1.0, 1.0));
  p.validate(channels);
  return p;
}

Query3D Query3D::padding(Eigen::Index embed_dim, int source_frame) {
  Query3D q;
  q.q_sem = Eigen::VectorXd::Zero(embed_dim);
  q.q_pos = Eigen::VectorXd::Zero(embed_dim);
  q.q_3d = Eigen::VectorXd::Zero(embed_dim);
  q.source_frame = source_frame;
  q.valid = false;
  return q;
}

Eigen::VectorXd QueryGenConfig::default_depth_bins() {
  Eigen::VectorXd bins(60);
  for (int i = 0; i < 60; ++i) bins(i) = 1.5 + i;
  return bins;
}

Eigen::VectorXd bilinear_sample(const FeatureMap& f, const Eigen::Vector2d& p) {
  const double x = std::clamp(p.x(), 0.0, static_cast<double>(f.width - 1));
  const double y = std::clamp(p.y(), 0.0, static_cast<double>(f.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, f.width - 1);
  const int y1 = std::min(y0 + 1, f.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  if (fx == 0.0 && fy == 0.0) return f.texel(y0, x0);
  return (1.0 - fx) * (1.0 - fy) * f.texel(y0, x0) + fx * (1.0 - fy) * f.texel(y0, x1) +
         (1.0 - fx) * fy * f.texel(y1, x0) + fx * fy * f.texel(y1, x1);
}

Eigen::Vector2d normalized_to_pixel(const FeatureMap& f, const Eigen::Vector2d& c2d) {
  return {c2d.x() * (f.width - 1), c2d.y() * (f.height - 1)};
}

Eigen::VectorXd deformable_attention(const Eigen::VectorXd& query, const Eigen::Vector2d& c2d,
                                     const FeatureMap& f, const DeformAttnParams& params) {
  params.validate(f.channels);
  require(query.size() == f.channels, ErrorKind::kInvalidParameter,
          "query width must equal feature channels");
  const Eigen::Vector2d ref = normalized_to_pixel(f, c2d);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.channels);
  for (int m = 0; m < params.n_heads; ++m) {
    // Projections are linear, so the convex sample mix can be formed first.
    Eigen::VectorXd mixed = Eigen::VectorXd::Zero(f.channels);
    for (int n = 0; n < params.n_keys; ++n)
      mixed += params.weights(m, n) * bilinear_sample(f, ref + params.offsets[m][n]);
    out += params.out_proj[m].transpose() * (params.value_proj[m].transpose() * mixed);
  }
  return out;
}

namespace {
void check_depth_inputs(const Eigen::VectorXd& dist, const Eigen::VectorXd& bins) {
  require(dist.size() == bins.size() && dist.size() >= 1, ErrorKind::kInvalidParameter,
          "depth distribution and bins must have equal non-zero length");
  require((dist.array() >= 0.0).all() && std::abs(dist.sum() - 1.0) <= 1e-9,
          ErrorKind::kInvalidParameter, "depth distribution must sum to 1");
}
}  // namespace

double expected_depth(const Eigen::VectorXd& depth_dist, const Eigen::VectorXd& bin_centers) {
  check_depth_inputs(depth_dist, bin_centers);
  return depth_dist.dot(bin_centers);
}

double argmax_depth(const Eigen::VectorXd& depth_dist, const Eigen::VectorXd& bin_centers) {
  check_depth_inputs(depth_dist, bin_centers);
  Eigen::Index best = 0;
  depth_dist.maxCoeff(&best);
  return bin_centers(best);
}

Query3D build_query(const Proposal2D& prop, const FeatureMap& f, const CameraModel& cam,
                    const DeformAttnParams& attn, const PosEmbedParams& pe,
                    const Eigen::MatrixXd& sem_proj, const QueryGenConfig& cfg) {
  require(prop.camera_id == f.camera_id && prop.frame_index == f.frame_index,
          ErrorKind::kInvalidParameter, "proposal and feature map disagree on camera/frame");
  require(cam.camera_id == prop.camera_id, ErrorKind::kInvalidParameter,
          "camera does not match proposal");
  require(sem_proj.rows() == f.channels && sem_proj.cols() == pe.embed_dim,
          ErrorKind::kInvalidParameter, "semantic projection must be C x D");
  prop.validate();

  const Eigen::Vector2d pixel = normalized_to_pixel(f, prop.center);
  const Eigen::VectorXd q2d = bilinear_sample(f, pixel);
  const Eigen::VectorXd attended = deformable_attention(q2d, prop.center, f, attn);

  Query3D q;
  q.q_sem = sem_proj.transpose() * attended;
  const double depth = cfg.reduction == DepthReduction::kExpectation
                           ? expected_depth(prop.depth_dist, cfg.bin_centers)
                           : argmax_depth(prop.depth_dist, cfg.bin_centers);
  q.center3d = lift_center(cam, pixel, depth);
  q.q_pos = pos_embed(q.center3d, pe);
  q.q_3d = q.q_pos + q.q_sem;
  q.category = prop.category;
  q.source_frame = prop.frame_index;
  q.valid = true;
  q.object_id = prop.object_id;
  q.camera_id = prop.camera_id;
  q.score = prop.score;
  return q;
}

}  // namespace statefuse
