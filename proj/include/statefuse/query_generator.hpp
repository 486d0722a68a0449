#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "statefuse/camera.hpp"

namespace statefuse {

/// H x W x C feature grid, stored row-major as ((row * W) + col) * C + channel.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;
  int camera_id = 0;
  int frame_index = 0;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c, int camera, int frame)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, 0.0), camera_id(camera), frame_index(frame) {}

  double& at(int row, int col, int channel) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + channel];
  }
  double at(int row, int col, int channel) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + channel];
  }
  Eigen::Map<const Eigen::VectorXd> texel(int row, int col) const {
    return {data.data() + (static_cast<std::size_t>(row) * width + col) * channels, channels};
  }

  void validate() const;
};

struct Proposal2D {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // normalized (c_w, c_h) in [0, 1]
  Eigen::Vector2d box = Eigen::Vector2d::Zero();     // normalized (w, h)
  int category = 0;
  double score = 0.0;
  Eigen::VectorXd depth_dist;
  int camera_id = 0;
  int frame_index = 0;
  int object_id = -1;  // simulator provenance, -1 when unknown

  void validate() const;
};

/// Frozen deformable-attention weights. `weights(m, n)` is A_mn; each row is
/// a softmax, so it is non-negative and sums to one.
struct DeformAttnParams {
  int n_heads = 0;
  int n_keys = 0;
  std::vector<Eigen::MatrixXd> value_proj;           // per head, C x C_h
  std::vector<Eigen::MatrixXd> out_proj;             // per head, C_h x C
  std::vector<std::vector<Eigen::Vector2d>> offsets;  // [head][key], pixels
  Eigen::MatrixXd weights;                           // n_heads x n_keys

  int channels() const { return value_proj.empty() ? 0 : static_cast<int>(value_proj[0].rows()); }
  void validate(int channels) const;

  /// Row-wise softmax of `logits` (n_heads x n_keys).
  static Eigen::MatrixXd normalize_weights(const Eigen::MatrixXd& logits);
  static DeformAttnParams seeded(int channels, int n_heads, int n_keys, int head_dim,
                                 std::uint64_t seed, double offset_scale_px = 2.0);
};

struct Query3D {
  Eigen::VectorXd q_sem;
  Eigen::VectorXd q_pos;
  Eigen::VectorXd q_3d;
  Eigen::Vector3d center3d = Eigen::Vector3d::Zero();
  int category = -1;
  int source_frame = 0;
  bool valid = false;
  int object_id = -1;
  int camera_id = -1;
  double score = 0.0;

  /// Zero-embedding placeholder used for padding.
  static Query3D padding(Eigen::Index embed_dim, int source_frame);
};

enum class DepthReduction { kExpectation, kArgmax };

struct QueryGenConfig {
  Eigen::VectorXd bin_centers = default_depth_bins();
  DepthReduction reduction = DepthReduction::kExpectation;

  /// 60 uniform bins over [1, 61] m; centers at 1.5, 2.5, ..., 60.5.
  static Eigen::VectorXd default_depth_bins();
};

/// Clamped bilinear interpolation at continuous pixel (x = column, y = row).
Eigen::VectorXd bilinear_sample(const FeatureMap& f, const Eigen::Vector2d& p);

/// Pixel coordinates of a normalized center: (c_w (W - 1), c_h (H - 1)).
Eigen::Vector2d normalized_to_pixel(const FeatureMap& f, const Eigen::Vector2d& c2d);

Eigen::VectorXd deformable_attention(const Eigen::VectorXd& query, const Eigen::Vector2d& c2d,
                                     const FeatureMap& f, const DeformAttnParams& params);

double expected_depth(const Eigen::VectorXd& depth_dist, const Eigen::VectorXd& bin_centers);
double argmax_depth(const Eigen::VectorXd& depth_dist, const Eigen::VectorXd& bin_centers);

Query3D build_query(const Proposal2D& prop, const FeatureMap& f, const CameraModel& cam,
                    const DeformAttnParams& attn, const PosEmbedParams& pe,
                    const Eigen::MatrixXd& sem_proj, const QueryGenConfig& cfg = {});

}  // namespace statefuse
