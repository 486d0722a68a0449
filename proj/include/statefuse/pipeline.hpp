#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "statefuse/motion_elimination.hpp"
#include "statefuse/query_generator.hpp"
#include "statefuse/query_mamba.hpp"
#include "statefuse/scene.hpp"

namespace statefuse {

enum class BoxMode { kBypass, kLinear };

const char* to_string(BoxMode mode);
BoxMode box_mode_from_string(const std::string& s);

struct PipelineDims {
  int k_queries = 1;  // slot capacity of the fusion stack; scenes may use fewer
  int embed_dim = 24;
  int feature_channels = 8;
  int state_dim = 16;
  int n_layers = 6;
  int dw_ksize = 3;
  int n_heads = 2;
  int n_keys = 4;
  int head_dim = 4;
  int decoder_keys_per_camera = 16;

  void validate() const;
  bool operator==(const PipelineDims&) const = default;
};

/// Single cross-attention layer against the current frame's features.
struct DecoderParams {
  Eigen::MatrixXd w_q;  // D x D
  Eigen::MatrixXd w_k;  // C x D
  Eigen::MatrixXd w_v;  // C x D
  Eigen::MatrixXd w_o;  // D x D
  std::uint64_t sample_seed = 0;
};

/// Affine map from a refined query to box fields:
/// [dx dy dz, log l, log w, log h, yaw, vx, vy, score logit].
struct BoxHead {
  Eigen::MatrixXd weight;  // D x 10
  Eigen::VectorXd bias;    // 10
};

struct PipelineWeights {
  std::uint64_t seed = 0;
  PipelineDims dims;
  BoxMode box_mode = BoxMode::kBypass;
  QueryMambaStack stack;
  DeformAttnParams attn;
  PosEmbedParams pos;
  Eigen::MatrixXd sem_proj;  // C x D
  DecoderParams decoder;
  BoxHead box;

  Eigen::Index fused_width() const {
    return static_cast<Eigen::Index>(dims.k_queries) * dims.embed_dim;
  }
  void validate() const;

  static PipelineWeights seeded(const PipelineDims& dims, std::uint64_t seed,
                                BoxMode mode = BoxMode::kBypass);
  /// Replaces the Query Mamba stack with zero weights (residual identity).
  void zero_fusion();
};

struct Detection {
  Eigen::Vector3d center3d = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  int category = 0;
  double score = 0.0;
  int slot = 0;
  int object_id = -1;
};

struct OpCountReport {
  std::uint64_t n_frames = 0;
  std::uint64_t k_queries = 0;
  std::uint64_t dim = 0;
  std::uint64_t state_dim = 0;
  std::uint64_t cross_attention_ops = 0;
  std::uint64_t ssm_ops = 0;
};

/// 4 N (K D)^2 + 2 N^2 K D, exact.
std::uint64_t op_count_cross_attention(std::int64_t n, std::int64_t k, std::int64_t d);
/// 3 N (2 D) M + N (2 K D) M, exact.
std::uint64_t op_count_ssm(std::int64_t n, std::int64_t k, std::int64_t d, std::int64_t m = 16);
OpCountReport op_count_report(std::int64_t n, std::int64_t k, std::int64_t d, std::int64_t m);

/// Smallest N in [1, n_max] from which op_count_ssm < op_count_cross_attention
/// holds for every N up to n_max and the ssm/cross ratio strictly decreases.
/// Returns 0 when no such N exists on the grid.
std::int64_t op_count_crossover(std::int64_t k, std::int64_t d, std::int64_t m,
                                std::int64_t n_max);

/// Builds the fusion input: one row per frame (oldest first), K_cap * D wide.
FusedQuerySequence fuse_queries(const PaddedQuerySequence& seq, Eigen::Index k_capacity);

/// One cross-attention layer: each slot's query is the current-frame row of
/// the fused output; keys/values are features at seeded positions of the
/// current frame's maps. Returns K refined vectors (residual included).
std::vector<Eigen::VectorXd> decode_current_frame(const FusedQuerySequence& fused,
                                                  const std::vector<Query3D>& current_queries,
                                                  const std::vector<FeatureMap>& feats,
                                                  const PipelineWeights& w);

struct PipelineConfig {
  MotionElimConfig motion;
  /// Feed simulator velocities into frame alignment instead of ego motion only.
  bool ground_truth_velocity = false;
};

struct PipelineResult {
  std::vector<Detection> detections;
  OpCountReport ops;
  MotionMask mask;
  PaddedQuerySequence padded;  // before masking
  FusedQuerySequence fused_input;
  FusedQuerySequence fused_output;
};

PipelineResult run_pipeline(const Scene& scene, const PipelineWeights& w,
                            const PipelineConfig& cfg = {});

/// Dimensions sized for `scene`: K capacity = max proposals in any frame.
PipelineDims dims_for_scene(const Scene& scene);

/// The trailing `count` frames of a scene, indices preserved.
Scene last_frames(const Scene& scene, int count);

/// frame,object_slot,retained,center_x,center_y,center_z,category,score
std::string run_report_csv(const PipelineResult& result);

std::string serialize_weights(const PipelineWeights& w);
PipelineWeights parse_weights(const std::string& bytes);

}  // namespace statefuse
