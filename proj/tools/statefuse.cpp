// statefuse command-line front end.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "statefuse/bench.hpp"
#include "statefuse/checks.hpp"
#include "statefuse/error.hpp"
#include "statefuse/pipeline.hpp"
#include "statefuse/scene.hpp"
#include "statefuse/scene_io.hpp"

namespace sf = statefuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

std::uint64_t env_seed() {
  const char* s = std::getenv("STATEFUSE_SEED");
  if (s == nullptr || *s == '\0') return 0;
  std::size_t used = 0;
  const std::string text(s);
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  sf::require(used == text.size() && text[0] != '-', sf::ErrorKind::kInvalidConfig,
              "STATEFUSE_SEED must be an unsigned 64-bit integer");
  return v;
}

sf::PipelineWeights load_weights(const std::string& source, const sf::Scene& scene, sf::BoxMode mode) {
  const std::string prefix = "seed:";
  if (source.rfind(prefix, 0) == 0) {
    const std::string digits = source.substr(prefix.size());
    std::size_t used = 0;
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(digits, &used, 10);
    } catch (const std::exception&) {
      used = 0;
    }
    sf::require(!digits.empty() && used == digits.size() && digits[0] != '-',
                sf::ErrorKind::kInvalidConfig, "bad weights seed '" + digits + "'");
    return sf::PipelineWeights::seeded(sf::dims_for_scene(scene), seed, mode);
  }
  return sf::parse_weights(sf::read_file(source));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statefuse: state-space temporal fusion for multi-camera 3D query detection"};
  app.require_subcommand(1);
  app.footer(
      "Environment:\n"
      "  STATEFUSE_SEED   default seed for configs that do not set \"seed\" (default 0)\n\n"
      "Exit codes: 0 success, 2 bad usage, 3 validation failure, 4 numeric failure");

  std::string config_path, out_path, features_path, scene_path, weights_spec, svg_path;
  std::string box_mode = "bypass";
  double alpha = 0.5;
  bool gt_velocity = false;
  std::uint64_t weights_seed = 0;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic multi-camera scene");
  simulate->add_option("--config", config_path, "scene config JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_path, "scene JSON output")->required();
  simulate->add_option("--features-out", features_path, "optional float32 feature blob output");

  auto* run = app.add_subcommand("run", "run the detection pipeline on a scene");
  run->add_option("--scene", scene_path, "scene JSON from `simulate`")->required()->check(CLI::ExistingFile);
  run->add_option("--weights", weights_spec, "weights file, or seed:<u64> for seeded weights")->required();
  run->add_option("--alpha", alpha, "motion elimination threshold in meters")->required();
  run->add_option("--out", out_path, "report CSV output")->required();
  run->add_option("--box-mode", box_mode, "box head for seed: weights (bypass|linear)")
      ->check(CLI::IsMember({"bypass", "linear"}));
  run->add_flag("--gt-velocity", gt_velocity, "align past queries with ground-truth velocities");

  auto* weights = app.add_subcommand("weights", "write a seeded weights file sized for a scene");
  weights->add_option("--scene", scene_path, "scene JSON")->required()->check(CLI::ExistingFile);
  weights->add_option("--seed", weights_seed, "weights seed")->required();
  weights->add_option("--out", out_path, "weights output")->required();
  weights->add_option("--box-mode", box_mode, "box head (bypass|linear)")
      ->check(CLI::IsMember({"bypass", "linear"}));

  auto* bench = app.add_subcommand("bench", "measure fusion scaling over sequence length");
  bench->add_option("--config", config_path, "bench config JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out_path, "CSV output")->required();
  bench->add_option("--svg", svg_path, "optional log-log plot");

  auto* check = app.add_subcommand("check", "run the property suite; exit 0 iff all pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*simulate) {
      const sf::SceneConfig cfg = sf::parse_scene_config(sf::read_file(config_path), env_seed());
      const sf::Scene scene = sf::generate_scene(cfg);
      sf::write_file(out_path, sf::serialize_scene(scene));
      if (!features_path.empty()) sf::write_file(features_path, sf::serialize_feature_blob(scene));
    } else if (*run) {
      const sf::Scene scene = sf::parse_scene(sf::read_file(scene_path));
      const sf::PipelineWeights w = load_weights(weights_spec, scene, sf::box_mode_from_string(box_mode));
      sf::PipelineConfig cfg;
      cfg.motion.alpha = alpha;
      cfg.ground_truth_velocity = gt_velocity;
      sf::write_file(out_path, sf::run_report_csv(sf::run_pipeline(scene, w, cfg)));
    } else if (*weights) {
      const sf::Scene scene = sf::parse_scene(sf::read_file(scene_path));
      sf::write_file(out_path, sf::serialize_weights(sf::PipelineWeights::seeded(
                                   sf::dims_for_scene(scene), weights_seed, sf::box_mode_from_string(box_mode))));
    } else if (*bench) {
      const sf::BenchConfig cfg = sf::parse_bench_config(sf::read_file(config_path), env_seed());
      const auto rows = sf::bench_scaling(cfg);
      sf::write_file(out_path, sf::bench_csv(rows));
      if (!svg_path.empty()) sf::write_file(svg_path, sf::bench_svg(rows));
    } else if (*check) {
      bool ok = true;
      for (const auto& r : sf::run_property_checks()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.passed) std::cout << ": " << r.detail;
        std::cout << '\n';
        ok = ok && r.passed;
      }
      return ok ? kExitOk : kExitValidation;
    }
  } catch (const sf::Error& e) {
    std::cerr << "error [" << sf::to_string(e.kind()) << "]: " << e.what() << '\n';
    return e.kind() == sf::ErrorKind::kNumericOverflow ? kExitNumeric : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}
