#include "statefuse/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "statefuse/error.hpp"
#include "statefuse/random.hpp"

namespace statefuse {

namespace {

constexpr std::uint64_t kTagEgo = 0xe90;
constexpr std::uint64_t kTagObjects = 0x0b7;
constexpr std::uint64_t kTagNoise = 0x401e;
constexpr std::uint64_t kTagFeatures = 0xfea7;

Eigen::Vector3d to_ego(const EgoPose& pose, const Eigen::Vector3d& world) {
  const Eigen::Matrix3d r = pose.world_from_ego.topLeftCorner<3, 3>();
  return r.transpose() * (world - pose.world_from_ego.topRightCorner<3, 1>());
}

std::vector<EgoPose> ego_trajectory(const SceneConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kTagEgo));
  std::vector<EgoPose> poses;
  double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  double speed = 0.0;
  double yaw_rate = 0.0;
  for (int f = 0; f < cfg.n_frames; ++f) {
    EgoPose p;
    p.world_from_ego = yaw_pose(yaw, pos);
    p.timestamp = f * cfg.frame_dt;
    poses.push_back(p);
    if (f % cfg.segment_frames == 0) {
      speed = rng.uniform(0.0, cfg.ego_speed_max);
      yaw_rate = rng.uniform(-cfg.ego_yaw_rate_max, cfg.ego_yaw_rate_max);
    }
    pos += speed * cfg.frame_dt * Eigen::Vector3d(std::cos(yaw), std::sin(yaw), 0.0);
    yaw += yaw_rate * cfg.frame_dt;
  }
  return poses;
}

}  // namespace

void SceneConfig::validate() const {
  require(n_frames >= 1 && n_objects >= 1 && n_cameras >= 1 && feature_channels >= 1,
          ErrorKind::kInvalidConfig, "frame, object, camera and channel counts must be >= 1");
  require(image_height >= 2 && image_width >= 2, ErrorKind::kInvalidConfig,
          "image must be at least 2 x 2");
  require(frame_dt > 0.0 && std::isfinite(frame_dt), ErrorKind::kInvalidConfig, "dt must be > 0");
  require(noise_sigma_px >= 0.0, ErrorKind::kInvalidConfig, "noise sigma must be >= 0");
  require(static_fraction >= 0.0 && static_fraction <= 1.0, ErrorKind::kInvalidConfig,
          "static_fraction must lie in [0, 1]");
  require(speed_min >= 0.0 && speed_max >= speed_min, ErrorKind::kInvalidConfig,
          "speed range must satisfy 0 <= min <= max");
  require(focal_px > 0.0 && segment_frames >= 1 && n_categories >= 1, ErrorKind::kInvalidConfig,
          "focal, segment length and category count must be positive");
  require(spawn_radius_min > 0.0 && spawn_radius_max >= spawn_radius_min,
          ErrorKind::kInvalidConfig, "spawn radius range invalid");
  require(ego_speed_max >= 0.0 && ego_yaw_rate_max >= 0.0 && alpha >= 0.0,
          ErrorKind::kInvalidConfig, "ego limits and alpha must be >= 0");
}

std::vector<CameraModel> make_camera_rig(const SceneConfig& cfg) {
  std::vector<CameraModel> cams;
  const double cx = 0.5 * (cfg.image_width - 1);
  const double cy = 0.5 * (cfg.image_height - 1);
  const Eigen::Vector3d mount(0.0, 0.0, cfg.camera_height);
  for (int i = 0; i < cfg.n_cameras; ++i) {
    const double yaw = 2.0 * std::numbers::pi * i / cfg.n_cameras;
    const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Eigen::Vector3d down(0.0, 0.0, -1.0);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    cams.push_back(CameraModel::pinhole(cfg.focal_px, cx, cy, make_rigid(r, -r * mount), i));
  }
  return cams;
}

Eigen::VectorXd depth_distribution(double depth, const Eigen::VectorXd& bins) {
  const Eigen::Index n = bins.size();
  require(n >= 1, ErrorKind::kInvalidParameter, "need at least one depth bin");
  require(depth >= bins(0) && depth <= bins(n - 1), ErrorKind::kInvalidDepth,
          "depth outside the bin range");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  if (n == 1) {
    p(0) = 1.0;
    return p;
  }
  Eigen::Index lo = 0;
  while (lo + 2 < n && bins(lo + 1) <= depth) ++lo;
  const double t = (depth - bins(lo)) / (bins(lo + 1) - bins(lo));
  p(lo) = 1.0 - t;
  p(lo + 1) = t;
  return p;
}

std::vector<Proposal2D> oracle_proposals(const SceneFrame& frame,
                                         const std::vector<ObjectTrack>& tracks,
                                         const std::vector<CameraModel>& cams,
                                         const SceneConfig& cfg, double noise_sigma) {
  const Eigen::VectorXd bins = QueryGenConfig::default_depth_bins();
  const double wmax = cfg.image_width - 1;
  const double hmax = cfg.image_height - 1;
  std::vector<Proposal2D> out;
  for (const auto& cam : cams) {
    Rng noise(mix_seed(cfg.seed, kTagNoise, frame.frame_index, cam.camera_id));
    for (const auto& obj : frame.objects) {
      const Eigen::Vector3d q = cam.extrinsic.topLeftCorner<3, 3>() * obj.center_ego +
                                cam.extrinsic.topRightCorner<3, 1>();
      if (!(q.z() > 1e-6)) continue;
      const PixelDepth pd = project_point(cam, obj.center_ego);
      if (pd.u < 0.0 || pd.u > wmax || pd.v < 0.0 || pd.v > hmax) continue;
      if (pd.depth < bins(0) || pd.depth > bins(bins.size() - 1)) continue;

      const ObjectTrack& track = tracks.at(static_cast<std::size_t>(obj.object_id));
      double u = pd.u;
      double v = pd.v;
      if (noise_sigma > 0.0) {
        u = std::clamp(u + noise_sigma * noise.gaussian(), 0.0, wmax);
        v = std::clamp(v + noise_sigma * noise.gaussian(), 0.0, hmax);
      }
      Proposal2D p;
      p.center = Eigen::Vector2d(u / wmax, v / hmax);
      const double f = cam.intrinsic(0, 0);
      p.box = Eigen::Vector2d(
          std::min(1.0, std::max(track.size.x(), track.size.y()) * f / pd.depth / wmax),
          std::min(1.0, track.size.z() * f / pd.depth / hmax));
      p.category = track.category;
      p.score = 1.0 / (1.0 + 0.01 * pd.depth);
      p.depth_dist = depth_distribution(pd.depth, bins);
      p.camera_id = cam.camera_id;
      p.frame_index = frame.frame_index;
      p.object_id = obj.object_id;
      out.push_back(std::move(p));
    }
  }
  return out;
}

FeatureMap synth_features(int frame_index, int camera_id, const SceneConfig& cfg) {
  constexpr int kWaves = 3;
  FeatureMap fm(cfg.image_height, cfg.image_width, cfg.feature_channels, camera_id, frame_index);
  for (int c = 0; c < cfg.feature_channels; ++c) {
    Rng rng(mix_seed(cfg.seed, kTagFeatures, frame_index, camera_id, c));
    double amp[kWaves], fx[kWaves], fy[kWaves], phase[kWaves];
    double total = 0.0;
    for (int k = 0; k < kWaves; ++k) {
      amp[k] = rng.uniform(0.1, 1.0);
      fx[k] = rng.uniform(-6.0, 6.0);
      fy[k] = rng.uniform(-6.0, 6.0);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      total += amp[k];
    }
    // Keeps |value| strictly below 1 despite rounding.
    for (double& a : amp) a *= 0.999 / total;
    for (int row = 0; row < fm.height; ++row) {
      const double y = static_cast<double>(row) / (fm.height - 1);
      for (int col = 0; col < fm.width; ++col) {
        const double x = static_cast<double>(col) / (fm.width - 1);
        double v = 0.0;
        for (int k = 0; k < kWaves; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + phase[k]);
        fm.at(row, col, c) = v;
      }
    }
  }
  return fm;
}

Scene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  Scene scene;
  scene.config = cfg;
  scene.cameras = make_camera_rig(cfg);
  const std::vector<EgoPose> poses = ego_trajectory(cfg);
  const EgoPose& last = poses.back();
  const double t_last = last.timestamp;

  Rng rng(mix_seed(cfg.seed, kTagObjects));
  const int n_static =
      static_cast<int>(std::lround(cfg.static_fraction * static_cast<double>(cfg.n_objects)));
  for (int i = 0; i < cfg.n_objects; ++i) {
    ObjectTrack tr;
    tr.object_id = i;
    tr.category = i % cfg.n_categories;
    tr.size = Eigen::Vector3d(rng.uniform(1.0, 5.0), rng.uniform(0.5, 2.5), rng.uniform(1.0, 2.5));
    tr.is_static = i < n_static;
    const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
    tr.velocity = tr.is_static
                      ? Eigen::Vector3d::Zero()
                      : Eigen::Vector3d(speed * std::cos(heading), speed * std::sin(heading), 0.0);
    if (!tr.is_static && tr.velocity.isZero(0.0)) tr.is_static = true;
    // Placed relative to the final ego pose so every object is near the current frame.
    const double bearing = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double radius = rng.uniform(cfg.spawn_radius_min, cfg.spawn_radius_max);
    const Eigen::Vector3d rel(radius * std::cos(bearing), radius * std::sin(bearing), 0.0);
    Eigen::Vector3d final_pos = last.world_from_ego.topLeftCorner<3, 3>() * rel +
                                last.world_from_ego.topRightCorner<3, 1>();
    final_pos.z() = 0.5 * tr.size.z();
    tr.position0 = final_pos - tr.velocity * t_last;
    scene.tracks.push_back(tr);
  }

  for (int f = 0; f < cfg.n_frames; ++f) {
    SceneFrame frame;
    frame.frame_index = f;
    frame.ego_pose = poses[f];
    const double t = poses[f].timestamp;
    for (const auto& tr : scene.tracks) {
      ObjectState st;
      st.object_id = tr.object_id;
      st.center_ego = to_ego(poses[f], tr.position_at(t));
      st.velocity_ego = poses[f].world_from_ego.topLeftCorner<3, 3>().transpose() * tr.velocity;
      st.motion_static = (tr.position_at(t_last) - tr.position_at(t)).norm() <= cfg.alpha;
      frame.objects.push_back(st);
    }
    frame.proposals = oracle_proposals(frame, scene.tracks, scene.cameras, cfg, cfg.noise_sigma_px);
    for (const auto& cam : scene.cameras) frame.features.push_back(synth_features(f, cam.camera_id, cfg));
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

}  // namespace statefuse
