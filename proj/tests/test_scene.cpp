#include <gtest/gtest.h>

#include "statefuse/scene.hpp"
#include "statefuse/scene_io.hpp"

using namespace statefuse;

TEST(Scene, SameSeedSameBytes) {
  SceneConfig cfg;
  cfg.seed = 17;
  EXPECT_EQ(serialize_scene(generate_scene(cfg)), serialize_scene(generate_scene(cfg)));
  const Scene a = generate_scene(cfg);
  EXPECT_EQ(serialize_scene(parse_scene(serialize_scene(a))), serialize_scene(a));
  EXPECT_EQ(serialize_feature_blob(a), serialize_feature_blob(parse_scene(serialize_scene(a))));
  cfg.seed = 18;
  EXPECT_NE(serialize_scene(generate_scene(cfg)), serialize_scene(a));
}

TEST(Scene, ConstantVelocityLaw) {
  ObjectTrack t;
  t.velocity = {2, 0, 0};
  EXPECT_EQ(t.position_at(0.5) - t.position_at(0.0), Eigen::Vector3d(1, 0, 0));
}

TEST(Scene, StaticFractionOne) {
  SceneConfig cfg;
  cfg.static_fraction = 1.0;
  cfg.seed = 2;
  for (const auto& t : generate_scene(cfg).tracks) EXPECT_EQ(t.velocity, Eigen::Vector3d::Zero());
}

TEST(Scene, NoiselessProposalsMatchProjection) {
  SceneConfig cfg;
  cfg.seed = 5;
  const Scene s = generate_scene(cfg);
  const auto bins = QueryGenConfig::default_depth_bins();
  int checked = 0;
  for (const auto& fr : s.frames)
    for (const auto& p : fr.proposals) {
      const auto& cam = s.cameras.at(p.camera_id);
      const auto pd = project_point(cam, fr.objects.at(p.object_id).center_ego);
      EXPECT_NEAR(p.center.x(), pd.u / (cfg.image_width - 1), 1e-12);
      EXPECT_NEAR(p.center.y(), pd.v / (cfg.image_height - 1), 1e-12);
      Eigen::Index best = 0;
      p.depth_dist.maxCoeff(&best);
      EXPECT_LE(std::abs(bins(best) - pd.depth), 0.5);
      EXPECT_NEAR(expected_depth(p.depth_dist, bins), pd.depth, 1e-9);
      ++checked;
    }
  EXPECT_GT(checked, 0);
}

TEST(Scene, BehindCameraEmitsNothing) {
  SceneConfig cfg;
  cfg.n_objects = 1;
  cfg.n_frames = 1;
  cfg.seed = 1;
  Scene s = generate_scene(cfg);
  SceneFrame fr = s.frames[0];
  auto tracks = s.tracks;
  // Put the object straight behind the first camera, outside every other view.
  tracks[0].position0 = (fr.ego_pose.world_from_ego *
                         Eigen::Vector4d(0.0, 0.0, -100.0, 1.0)).head<3>();
  tracks[0].velocity.setZero();
  fr.objects[0].center_ego = Eigen::Vector3d(0.0, 0.0, -100.0);
  for (const auto& p : oracle_proposals(fr, tracks, s.cameras, cfg, 0.0)) {
    const auto& cam = s.cameras[p.camera_id];
    const Eigen::Vector3d q =
        cam.extrinsic.topLeftCorner<3, 3>() * fr.objects[0].center_ego + cam.extrinsic.topRightCorner<3, 1>();
    EXPECT_GT(q.z(), 0.0);
  }
}

TEST(Features, DeterministicAndCameraDependent) {
  SceneConfig cfg;
  const auto a = synth_features(2, 1, cfg);
  EXPECT_EQ(a.data, synth_features(2, 1, cfg).data);
  EXPECT_NE(a.data, synth_features(2, 3, cfg).data);
}

TEST(SceneConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_scene_config(R"({"n_frame": 3})"), Error);
  EXPECT_THROW(parse_scene_config(R"({"n_frames": 0})"), Error);
  EXPECT_EQ(parse_scene_config(R"({})", 42).seed, 42u);
  EXPECT_EQ(parse_scene_config(R"({"seed": 3})", 42).seed, 3u);
}

TEST(FeatureBlob, RoundTrip) {
  SceneConfig cfg;
  cfg.n_frames = 2;
  cfg.n_cameras = 2;
  const Scene s = generate_scene(cfg);
  const auto blob = parse_feature_blob(serialize_feature_blob(s));
  ASSERT_EQ(blob.shape.size(), 5u);
  EXPECT_EQ(blob.shape[0], 2);
  EXPECT_EQ(blob.values.size(), 2u * 2 * 48 * 96 * 8);
  EXPECT_EQ(blob.values[1], static_cast<float>(s.frames[0].features[0].data[1]));
}
