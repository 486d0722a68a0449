#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statefuse/scene.hpp"

namespace statefuse {

std::string serialize_scene(const Scene& scene);
/// Feature maps are regenerated from the config; they are not carried in JSON.
Scene parse_scene(const std::string& json_text);

std::string serialize_scene_config(const SceneConfig& cfg);
/// Missing keys keep their defaults; `default_seed` applies when "seed" is absent.
SceneConfig parse_scene_config(const std::string& json_text, std::uint64_t default_seed = 0);

/// Raw feature blob: u64 little-endian header length, JSON header with the
/// shape [frames, cameras, height, width, channels], then float32 LE values.
std::string serialize_feature_blob(const Scene& scene);
struct FeatureBlob {
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};
FeatureBlob parse_feature_blob(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace statefuse
