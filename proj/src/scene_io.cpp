#include "statefuse/scene_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "statefuse/error.hpp"

namespace statefuse {

using nlohmann::json;

namespace {

template <typename Derived>
json to_json_array(const Eigen::MatrixBase<Derived>& m) {
  // Row-major flattening.
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(static_cast<double>(m(r, c)));
  return a;
}

template <int Rows, int Cols>
Eigen::Matrix<double, Rows, Cols> fixed_from_json(const json& a) {
  require(a.is_array() && a.size() == static_cast<std::size_t>(Rows * Cols),
          ErrorKind::kInvalidInput, "matrix array has wrong length");
  Eigen::Matrix<double, Rows, Cols> m;
  for (int r = 0; r < Rows; ++r)
    for (int c = 0; c < Cols; ++c) m(r, c) = a.at(static_cast<std::size_t>(r * Cols + c)).get<double>();
  return m;
}

Eigen::VectorXd vector_from_json(const json& a) {
  require(a.is_array(), ErrorKind::kInvalidInput, "expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

json config_to_json(const SceneConfig& c) {
  json j;
  j["n_frames"] = c.n_frames;
  j["frame_dt"] = c.frame_dt;
  j["n_objects"] = c.n_objects;
  j["n_cameras"] = c.n_cameras;
  j["image_height"] = c.image_height;
  j["image_width"] = c.image_width;
  j["feature_channels"] = c.feature_channels;
  j["speed_min"] = c.speed_min;
  j["speed_max"] = c.speed_max;
  j["static_fraction"] = c.static_fraction;
  j["noise_sigma_px"] = c.noise_sigma_px;
  j["seed"] = c.seed;
  j["focal_px"] = c.focal_px;
  j["camera_height"] = c.camera_height;
  j["ego_speed_max"] = c.ego_speed_max;
  j["ego_yaw_rate_max"] = c.ego_yaw_rate_max;
  j["segment_frames"] = c.segment_frames;
  j["spawn_radius_min"] = c.spawn_radius_min;
  j["spawn_radius_max"] = c.spawn_radius_max;
  j["n_categories"] = c.n_categories;
  j["alpha"] = c.alpha;
  return j;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SceneConfig config_from_json(const json& j, std::uint64_t default_seed) {
  require(j.is_object(), ErrorKind::kInvalidConfig, "scene config must be a JSON object");
  static const char* const kKeys[] = {
      "n_frames", "frame_dt", "n_objects", "n_cameras", "image_height", "image_width",
      "feature_channels", "speed_min", "speed_max", "static_fraction", "noise_sigma_px", "seed",
      "focal_px", "camera_height", "ego_speed_max", "ego_yaw_rate_max", "segment_frames",
      "spawn_radius_min", "spawn_radius_max", "n_categories", "alpha"};
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    require(known, ErrorKind::kInvalidConfig, "unknown scene config key: " + key);
  }
  SceneConfig c;
  c.seed = default_seed;
  try {
    read_opt(j, "n_frames", c.n_frames);
    read_opt(j, "frame_dt", c.frame_dt);
    read_opt(j, "n_objects", c.n_objects);
    read_opt(j, "n_cameras", c.n_cameras);
    read_opt(j, "image_height", c.image_height);
    read_opt(j, "image_width", c.image_width);
    read_opt(j, "feature_channels", c.feature_channels);
    read_opt(j, "speed_min", c.speed_min);
    read_opt(j, "speed_max", c.speed_max);
    read_opt(j, "static_fraction", c.static_fraction);
    read_opt(j, "noise_sigma_px", c.noise_sigma_px);
    read_opt(j, "seed", c.seed);
    read_opt(j, "focal_px", c.focal_px);
    read_opt(j, "camera_height", c.camera_height);
    read_opt(j, "ego_speed_max", c.ego_speed_max);
    read_opt(j, "ego_yaw_rate_max", c.ego_yaw_rate_max);
    read_opt(j, "segment_frames", c.segment_frames);
    read_opt(j, "spawn_radius_min", c.spawn_radius_min);
    read_opt(j, "spawn_radius_max", c.spawn_radius_max);
    read_opt(j, "n_categories", c.n_categories);
    read_opt(j, "alpha", c.alpha);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("bad scene config value: ") + e.what());
  }
  c.validate();
  return c;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kInvalidInput, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

std::string serialize_scene_config(const SceneConfig& cfg) { return config_to_json(cfg).dump(2); }

SceneConfig parse_scene_config(const std::string& json_text, std::uint64_t default_seed) {
  return config_from_json(parse_json(json_text), default_seed);
}

std::string serialize_scene(const Scene& scene) {
  json j;
  j["format"] = "statefuse-scene";
  j["version"] = 1;
  j["config"] = config_to_json(scene.config);
  json cams = json::array();
  for (const auto& c : scene.cameras)
    cams.push_back({{"camera_id", c.camera_id},
                    {"intrinsic", to_json_array(c.intrinsic)},
                    {"extrinsic", to_json_array(c.extrinsic)}});
  j["cameras"] = std::move(cams);
  json tracks = json::array();
  for (const auto& t : scene.tracks)
    tracks.push_back({{"object_id", t.object_id},
                      {"category", t.category},
                      {"size", to_json_array(t.size)},
                      {"position0", to_json_array(t.position0)},
                      {"velocity", to_json_array(t.velocity)},
                      {"is_static", t.is_static}});
  j["tracks"] = std::move(tracks);
  json frames = json::array();
  for (const auto& f : scene.frames) {
    json objs = json::array();
    for (const auto& o : f.objects)
      objs.push_back({{"object_id", o.object_id},
                      {"center_ego", to_json_array(o.center_ego)},
                      {"velocity_ego", to_json_array(o.velocity_ego)},
                      {"motion_static", o.motion_static}});
    json props = json::array();
    for (const auto& p : f.proposals)
      props.push_back({{"camera_id", p.camera_id},
                       {"frame_index", p.frame_index},
                       {"object_id", p.object_id},
                       {"category", p.category},
                       {"score", p.score},
                       {"center", to_json_array(p.center)},
                       {"box", to_json_array(p.box)},
                       {"depth_dist", to_json_array(p.depth_dist)}});
    frames.push_back({{"frame_index", f.frame_index},
                      {"timestamp", f.ego_pose.timestamp},
                      {"world_from_ego", to_json_array(f.ego_pose.world_from_ego)},
                      {"objects", std::move(objs)},
                      {"proposals", std::move(props)}});
  }
  j["frames"] = std::move(frames);
  return j.dump(1) + "\n";
}

Scene parse_scene(const std::string& json_text) {
  const json j = parse_json(json_text);
  Scene s;
  try {
    require(j.value("format", "") == "statefuse-scene", ErrorKind::kInvalidInput,
            "not a statefuse scene document");
    s.config = config_from_json(j.at("config"), 0);
    for (const auto& c : j.at("cameras")) {
      CameraModel cam;
      cam.camera_id = c.at("camera_id").get<int>();
      cam.intrinsic = fixed_from_json<3, 3>(c.at("intrinsic"));
      cam.extrinsic = fixed_from_json<4, 4>(c.at("extrinsic"));
      cam.validate();
      s.cameras.push_back(cam);
    }
    for (const auto& t : j.at("tracks")) {
      ObjectTrack tr;
      tr.object_id = t.at("object_id").get<int>();
      tr.category = t.at("category").get<int>();
      tr.size = fixed_from_json<3, 1>(t.at("size"));
      tr.position0 = fixed_from_json<3, 1>(t.at("position0"));
      tr.velocity = fixed_from_json<3, 1>(t.at("velocity"));
      tr.is_static = t.at("is_static").get<bool>();
      s.tracks.push_back(tr);
    }
    for (const auto& f : j.at("frames")) {
      SceneFrame fr;
      fr.frame_index = f.at("frame_index").get<int>();
      fr.ego_pose.timestamp = f.at("timestamp").get<double>();
      fr.ego_pose.world_from_ego = fixed_from_json<4, 4>(f.at("world_from_ego"));
      fr.ego_pose.validate();
      for (const auto& o : f.at("objects")) {
        ObjectState st;
        st.object_id = o.at("object_id").get<int>();
        st.center_ego = fixed_from_json<3, 1>(o.at("center_ego"));
        st.velocity_ego = fixed_from_json<3, 1>(o.at("velocity_ego"));
        st.motion_static = o.at("motion_static").get<bool>();
        fr.objects.push_back(st);
      }
      for (const auto& p : f.at("proposals")) {
        Proposal2D pr;
        pr.camera_id = p.at("camera_id").get<int>();
        pr.frame_index = p.at("frame_index").get<int>();
        pr.object_id = p.at("object_id").get<int>();
        pr.category = p.at("category").get<int>();
        pr.score = p.at("score").get<double>();
        pr.center = fixed_from_json<2, 1>(p.at("center"));
        pr.box = fixed_from_json<2, 1>(p.at("box"));
        pr.depth_dist = vector_from_json(p.at("depth_dist"));
        pr.validate();
        fr.proposals.push_back(std::move(pr));
      }
      for (const auto& cam : s.cameras)
        fr.features.push_back(synth_features(fr.frame_index, cam.camera_id, s.config));
      s.frames.push_back(std::move(fr));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidInput, std::string("bad scene document: ") + e.what());
  }
  require(!s.frames.empty(), ErrorKind::kInvalidInput, "scene has no frames");
  return s;
}

std::string serialize_feature_blob(const Scene& scene) {
  static_assert(std::endian::native == std::endian::little, "feature blob assumes little-endian");
  const auto& cfg = scene.config;
  json header;
  header["dtype"] = "float32";
  header["endianness"] = "little";
  header["order"] = "frame,camera,row,col,channel";
  header["shape"] = {scene.frames.size(), scene.cameras.size(), cfg.image_height, cfg.image_width,
                     cfg.feature_channels};
  const std::string h = header.dump();
  std::string out;
  const std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out += h;
  for (const auto& f : scene.frames)
    for (const auto& fm : f.features)
      for (double v : fm.data) {
        const float x = static_cast<float>(v);
        out.append(reinterpret_cast<const char*>(&x), sizeof(x));
      }
  return out;
}

FeatureBlob parse_feature_blob(const std::string& bytes) {
  require(bytes.size() >= 8, ErrorKind::kInvalidInput, "feature blob too short");
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data(), sizeof(hlen));
  require(bytes.size() >= 8 + hlen, ErrorKind::kInvalidInput, "feature blob header truncated");
  const json header = parse_json(bytes.substr(8, hlen));
  FeatureBlob blob;
  std::size_t count = 1;
  for (const auto& d : header.at("shape")) {
    blob.shape.push_back(d.get<std::int64_t>());
    count *= static_cast<std::size_t>(blob.shape.back());
  }
  require(bytes.size() == 8 + hlen + count * sizeof(float), ErrorKind::kInvalidInput,
          "feature blob payload size does not match its shape");
  blob.values.resize(count);
  std::memcpy(blob.values.data(), bytes.data() + 8 + hlen, count * sizeof(float));
  return blob;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed for " + path);
}

}  // namespace statefuse
