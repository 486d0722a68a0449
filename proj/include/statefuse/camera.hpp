#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "statefuse/error.hpp"

namespace statefuse {

/// Pinhole camera. `extrinsic` maps ego-frame homogeneous points into the
/// camera frame (x right, y down, z forward).
struct CameraModel {
  Eigen::Matrix3d intrinsic = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d extrinsic = Eigen::Matrix4d::Identity();
  int camera_id = 0;

  /// Upper-triangular intrinsic with positive diagonal, rigid extrinsic.
  void validate() const;

  static CameraModel pinhole(double focal_px, double cx, double cy,
                             const Eigen::Matrix4d& camera_from_ego, int camera_id);
};

struct EgoPose {
  Eigen::Matrix4d world_from_ego = Eigen::Matrix4d::Identity();
  double timestamp = 0.0;

  void validate() const;
};

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Rotation block orthonormal within `tol`, det +1, bottom row (0 0 0 1).
bool is_rigid(const Eigen::Matrix4d& t, double tol = 1e-9);
Eigen::Matrix4d rigid_inverse(const Eigen::Matrix4d& t);
Eigen::Matrix4d make_rigid(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);
/// Rotation about +z by `yaw` radians followed by translation.
Eigen::Matrix4d yaw_pose(double yaw, const Eigen::Vector3d& translation);

PixelDepth project_point(const CameraModel& cam, const Eigen::Vector3d& p_ego);

/// Inverse of project_point: pixel (u, v) at camera depth -> ego-frame point.
Eigen::Vector3d lift_center(const CameraModel& cam, const Eigen::Vector2d& pixel, double depth);

struct PosEmbedParams {
  int embed_dim = 0;
  double temperature = 10000.0;
  // Two affine maps, applied as y = W^T x + b, each D x D.
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  void validate() const;
  static PosEmbedParams seeded(int embed_dim, std::uint64_t seed, double temperature = 10000.0);
};

/// Sinusoid stage only: floor(D/6)*2 interleaved sin/cos features per axis,
/// zero-padded to D. Every entry lies in [-1, 1].
Eigen::VectorXd pos_embed_features(const Eigen::Vector3d& c3d, int embed_dim, double temperature);

Eigen::VectorXd pos_embed(const Eigen::Vector3d& c3d, const PosEmbedParams& params);

/// Moves past-frame centers into the current ego frame:
///   out = now_from_past * (center + velocity * dt),
///   now_from_past = inv(world_from_ego_now) * world_from_ego_past.
std::vector<Eigen::Vector3d> align_centers(const std::vector<Eigen::Vector3d>& centers,
                                           const std::vector<Eigen::Vector3d>& velocities,
                                           double dt, const EgoPose& pose_now,
                                           const EgoPose& pose_past);

}  // namespace statefuse
