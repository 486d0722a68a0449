#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "statefuse/camera.hpp"
#include "statefuse/query_generator.hpp"

namespace statefuse {

/// Synthetic multi-camera world. Every field has a working default.
struct SceneConfig {
  int n_frames = 6;
  double frame_dt = 0.5;
  int n_objects = 8;
  int n_cameras = 6;
  int image_height = 48;
  int image_width = 96;
  int feature_channels = 8;
  double speed_min = 2.0;  // m/s, moving objects
  double speed_max = 8.0;
  double static_fraction = 0.5;
  double noise_sigma_px = 0.0;
  std::uint64_t seed = 0;

  double focal_px = 64.0;
  double camera_height = 1.5;
  double ego_speed_max = 6.0;     // m/s
  double ego_yaw_rate_max = 0.2;  // rad/s
  int segment_frames = 4;         // frames per constant (speed, yaw-rate) segment
  double spawn_radius_min = 8.0;  // m from the final ego position
  double spawn_radius_max = 30.0;
  int n_categories = 10;
  double alpha = 0.5;  // threshold for ground-truth motion labels

  void validate() const;
};

struct ObjectTrack {
  int object_id = 0;
  int category = 0;
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // l, w, h
  Eigen::Vector3d position0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  bool is_static = true;

  Eigen::Vector3d position_at(double t) const { return position0 + velocity * t; }
};

struct ObjectState {
  int object_id = 0;
  Eigen::Vector3d center_ego = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity_ego = Eigen::Vector3d::Zero();
  /// World displacement between this frame and the last frame is <= alpha.
  bool motion_static = true;
};

struct SceneFrame {
  int frame_index = 0;
  EgoPose ego_pose;
  std::vector<ObjectState> objects;
  std::vector<Proposal2D> proposals;
  std::vector<FeatureMap> features;  // one per camera, indexed by camera_id

  double timestamp() const { return ego_pose.timestamp; }
};

struct Scene {
  SceneConfig config;
  std::vector<CameraModel> cameras;
  std::vector<ObjectTrack> tracks;
  std::vector<SceneFrame> frames;
};

/// Ring of n cameras, evenly spaced in yaw starting at the ego +x axis.
std::vector<CameraModel> make_camera_rig(const SceneConfig& cfg);

Scene generate_scene(const SceneConfig& cfg);

/// Proposals for every object whose center projects inside the image at a
/// depth the depth bins can represent. The depth distribution splits mass
/// between the two bins bracketing the true depth, so its expectation is the
/// true depth and its argmax is the nearest bin.
std::vector<Proposal2D> oracle_proposals(const SceneFrame& frame,
                                         const std::vector<ObjectTrack>& tracks,
                                         const std::vector<CameraModel>& cams,
                                         const SceneConfig& cfg, double noise_sigma);

/// Seeded smooth field (sum of low-frequency sinusoids), values in [-1, 1].
FeatureMap synth_features(int frame_index, int camera_id, const SceneConfig& cfg);

/// Probability vector over `bins` whose expectation equals `depth`.
Eigen::VectorXd depth_distribution(double depth, const Eigen::VectorXd& bins);

}  // namespace statefuse
