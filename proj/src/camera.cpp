#include "statefuse/camera.hpp"

#include <cmath>

#include "statefuse/error.hpp"
#include "statefuse/query_mamba.hpp"
#include "statefuse/random.hpp"

namespace statefuse {

bool is_rigid(const Eigen::Matrix4d& t, double tol) {
  if (!t.allFinite()) return false;
  const Eigen::Matrix3d r = t.topLeftCorner<3, 3>();
  if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  return t(3, 0) == 0.0 && t(3, 1) == 0.0 && t(3, 2) == 0.0 && t(3, 3) == 1.0;
}

Eigen::Matrix4d rigid_inverse(const Eigen::Matrix4d& t) {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rt = t.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * t.topRightCorner<3, 1>();
  return inv;
}

Eigen::Matrix4d make_rigid(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() = rotation;
  t.topRightCorner<3, 1>() = translation;
  return t;
}

Eigen::Matrix4d yaw_pose(double yaw, const Eigen::Vector3d& translation) {
  return make_rigid(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(),
                    translation);
}

void CameraModel::validate() const {
  require(intrinsic.allFinite(), ErrorKind::kInvalidCamera, "non-finite intrinsic");
  require(intrinsic(1, 0) == 0.0 && intrinsic(2, 0) == 0.0 && intrinsic(2, 1) == 0.0,
          ErrorKind::kInvalidCamera, "intrinsic must be upper-triangular");
  require(intrinsic(0, 0) > 0.0 && intrinsic(1, 1) > 0.0 && intrinsic(2, 2) > 0.0,
          ErrorKind::kInvalidCamera, "intrinsic diagonal must be positive");
  require(is_rigid(extrinsic), ErrorKind::kInvalidCamera, "extrinsic must be a rigid transform");
}

CameraModel CameraModel::pinhole(double focal_px, double cx, double cy,
                                 const Eigen::Matrix4d& camera_from_ego, int camera_id) {
  CameraModel cam;
  cam.intrinsic << focal_px, 0.0, cx, 0.0, focal_px, cy, 0.0, 0.0, 1.0;
  cam.extrinsic = camera_from_ego;
  cam.camera_id = camera_id;
  cam.validate();
  return cam;
}

void EgoPose::validate() const {
  require(is_rigid(world_from_ego), ErrorKind::kInvalidPose, "ego pose must be rigid");
}

PixelDepth project_point(const CameraModel& cam, const Eigen::Vector3d& p_ego) {
  const Eigen::Vector3d q =
      cam.extrinsic.topLeftCorner<3, 3>() * p_ego + cam.extrinsic.topRightCorner<3, 1>();
  if (!(q.z() > 1e-6)) throw Error(ErrorKind::kBehindCamera, "point is not in front of camera");
  const Eigen::Vector3d pix = cam.intrinsic * q;
  return {pix.x() / pix.z(), pix.y() / pix.z(), q.z()};
}

Eigen::Vector3d lift_center(const CameraModel& cam, const Eigen::Vector2d& pixel, double depth) {
  require(std::isfinite(depth) && depth > 0.0, ErrorKind::kInvalidDepth, "depth must be > 0");
  const double det = cam.intrinsic.determinant();
  require(std::isfinite(det) && std::abs(det) > 0.0, ErrorKind::kInvalidCamera,
          "singular intrinsic");
  const Eigen::Vector3d scaled(pixel.x() * depth, pixel.y() * depth, depth);
  // Intrinsic is upper-triangular: back-substitution instead of a general inverse.
  const Eigen::Vector3d q =
      cam.intrinsic.triangularView<Eigen::Upper>().solve(scaled);
  const Eigen::Matrix3d r = cam.extrinsic.topLeftCorner<3, 3>();
  return r.transpose() * (q - cam.extrinsic.topRightCorner<3, 1>());
}

void PosEmbedParams::validate() const {
  require(embed_dim >= 2 && embed_dim % 2 == 0, ErrorKind::kInvalidParameter,
          "embed_dim must be a positive even integer");
  require(temperature > 0.0, ErrorKind::kInvalidParameter, "temperature must be > 0");
  require(w1.rows() == embed_dim && w1.cols() == embed_dim && b1.size() == embed_dim &&
              w2.rows() == embed_dim && w2.cols() == embed_dim && b2.size() == embed_dim,
          ErrorKind::kInvalidParameter, "pos-embed MLP must be D x D");
}

PosEmbedParams PosEmbedParams::seeded(int embed_dim, std::uint64_t seed, double temperature) {
  Rng rng(mix_seed(seed, 0x9057ULL));
  PosEmbedParams p;
  p.embed_dim = embed_dim;
  p.temperature = temperature;
  p.w1 = rng.uniform_matrix(embed_dim, embed_dim, -0.1, 0.1);
  p.b1 = rng.uniform_vector(embed_dim, -0.1, 0.1);
  p.w2 = rng.uniform_matrix(embed_dim, embed_dim, -0.1, 0.1);
  p.b2 = rng.uniform_vector(embed_dim, -0.1, 0.1);
  p.validate();
  return p;
}

Eigen::VectorXd pos_embed_features(const Eigen::Vector3d& c3d, int embed_dim, double temperature) {
  require(embed_dim >= 2 && embed_dim % 2 == 0, ErrorKind::kInvalidParameter,
          "embed_dim must be a positive even integer");
  const int per_axis = (embed_dim / 6) * 2;
  const int n_freq = per_axis / 2;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(embed_dim);
  for (int axis = 0; axis < 3; ++axis) {
    for (int i = 0; i < n_freq; ++i) {
      const double freq = std::pow(temperature, -2.0 * i / static_cast<double>(per_axis));
      const double phase = c3d(axis) * freq;
      f(axis * per_axis + 2 * i) = std::sin(phase);
      f(axis * per_axis + 2 * i + 1) = std::cos(phase);
    }
  }
  return f;
}

Eigen::VectorXd pos_embed(const Eigen::Vector3d& c3d, const PosEmbedParams& params) {
  params.validate();
  const Eigen::VectorXd f = pos_embed_features(c3d, params.embed_dim, params.temperature);
  const Eigen::VectorXd hidden = gelu(params.w1.transpose() * f + params.b1);
  return params.w2.transpose() * hidden + params.b2;
}

std::vector<Eigen::Vector3d> align_centers(const std::vector<Eigen::Vector3d>& centers,
                                           const std::vector<Eigen::Vector3d>& velocities,
                                           double dt, const EgoPose& pose_now,
                                           const EgoPose& pose_past) {
  require(centers.size() == velocities.size(), ErrorKind::kInvalidParameter,
          "centers and velocities must have equal length");
  pose_now.validate();
  pose_past.validate();
  // Equal poses give the exact identity rather than R^T R rounding.
  const Eigen::Matrix4d now_from_past =
      pose_now.world_from_ego == pose_past.world_from_ego
          ? Eigen::Matrix4d::Identity().eval()
          : (rigid_inverse(pose_now.world_from_ego) * pose_past.world_from_ego).eval();
  const Eigen::Matrix3d r = now_from_past.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = now_from_past.topRightCorner<3, 1>();
  std::vector<Eigen::Vector3d> out;
  out.reserve(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i)
    out.push_back(r * (centers[i] + velocities[i] * dt) + t);
  return out;
}

}  // namespace statefuse
