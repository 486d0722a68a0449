// Full-scale acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. argv[1] is the statefuse CLI binary.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include "statefuse/bench.hpp"
#include "statefuse/camera.hpp"
#include "statefuse/motion_elimination.hpp"
#include "statefuse/pipeline.hpp"
#include "statefuse/query_mamba.hpp"
#include "statefuse/random.hpp"
#include "statefuse/scene.hpp"
#include "statefuse/scene_io.hpp"
#include "statefuse/ssm.hpp"

using namespace statefuse;
namespace fs = std::filesystem;

namespace {

std::string g_cli;

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    if (passed) detail.str("");
    passed = false;
    detail << why;
  }
};

Eigen::VectorXd random_input(Eigen::Index len, std::uint64_t seed) {
  Rng rng(seed);
  return rng.uniform_vector(len, -1.0, 1.0);
}

// 1
void scan_kernel(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto sys = random_stable_ssm<double>(16, mix_seed(1, s));
    for (Eigen::Index len = 1; len <= 256; len *= 2) {
      const Eigen::VectorXd x = random_input(len, mix_seed(2, s, len));
      worst = std::max(worst, max_relative_error(scan_recurrent(sys, x),
                                                 apply_convolution(materialize_kernel(sys, len), x)));
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.detail << "max rel err " << worst << ", " << secs << " s";
  if (worst > 1e-9) o.fail("max rel err " + std::to_string(worst));
  if (secs >= 30.0) o.fail("runtime " + std::to_string(secs) + " s");
}

// 2
void fft_direct(Outcome& o) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto sys = random_stable_ssm<double>(16, mix_seed(3, s));
    for (Eigen::Index len : {1, 2, 3, 17, 100, 255, 256, 1000, 2049, 4096}) {
      const Eigen::VectorXd x = random_input(len, mix_seed(4, s, len));
      const auto k = materialize_kernel(sys, len);
      worst = std::max(worst, max_relative_error(apply_convolution(k, x, ConvolutionMode::kDirect),
                                                 apply_convolution(k, x, ConvolutionMode::kFft)));
    }
  }
  o.detail << "max rel err " << worst << " up to L=4096";
  if (worst > 1e-9) o.fail("max rel err " + std::to_string(worst));
}

// 3
void linearity(Outcome& o) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto sys = random_stable_ssm<double>(16, mix_seed(5, s));
    Rng rng(mix_seed(6, s));
    const Eigen::Index len = 1 + static_cast<Eigen::Index>(rng.below(256));
    const Eigen::VectorXd x = rng.uniform_vector(len, -1.0, 1.0);
    const Eigen::VectorXd z = rng.uniform_vector(len, -1.0, 1.0);
    const double a = rng.uniform(-3.0, 3.0), b = rng.uniform(-3.0, 3.0);
    const Eigen::VectorXd mixed = a * x + b * z;
    const Eigen::VectorXd lhs = scan_recurrent(sys, mixed);
    const Eigen::VectorXd rhs = a * scan_recurrent(sys, x) + b * scan_recurrent(sys, z);
    worst = std::max(worst, max_relative_error(lhs, rhs));
    const auto k = materialize_kernel(sys, len);
    worst = std::max(worst, max_relative_error(apply_convolution(k, mixed),
                                               (a * apply_convolution(k, x) + b * apply_convolution(k, z)).eval()));
  }
  o.detail << "max rel err " << worst;
  if (worst > 1e-9) o.fail("max rel err " + std::to_string(worst));
}

// 4
void complexity(Outcome& o) {
  using u128 = unsigned __int128;
  int grid = 0;
  for (std::int64_t n : {1, 2, 4, 8, 16})
    for (std::int64_t k : {1, 2, 4, 8, 16})
      for (std::int64_t d : {1, 2, 4, 8, 16}) {
        const std::uint64_t kd = static_cast<std::uint64_t>(k * d);
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t ud = static_cast<std::uint64_t>(d);
        if (op_count_cross_attention(n, k, d) != 4 * un * kd * kd + 2 * un * un * kd)
          o.fail("cross-attention mismatch at " + std::to_string(n));
        if (op_count_ssm(n, k, d, 16) != 3 * un * (2 * ud) * 16 + un * (2 * kd) * 16)
          o.fail("ssm mismatch at " + std::to_string(n));
        ++grid;
      }
  const std::int64_t n_star = op_count_crossover(64, 32, 16, 4096);
  if (n_star < 1) {
    o.fail("no crossover found");
    return;
  }
  for (std::int64_t n = n_star; n < 4096; ++n) {
    // ssm(n+1)/cross(n+1) < ssm(n)/cross(n), compared exactly.
    const u128 lhs = u128(op_count_ssm(n + 1, 64, 32, 16)) * op_count_cross_attention(n, 64, 32);
    const u128 rhs = u128(op_count_ssm(n, 64, 32, 16)) * op_count_cross_attention(n + 1, 64, 32);
    if (!(lhs < rhs)) {
      o.fail("ratio not strictly decreasing at N=" + std::to_string(n));
      return;
    }
  }
  o.detail << grid << " grid points exact; N*=" << n_star << ", ratio strictly decreasing to 4096";
}

// 5
void scaling(Outcome& o) {
  BenchConfig cfg;
  cfg.n_values = {64, 128, 256, 512, 1024, 2048};
  cfg.repetitions = 7;
  cfg.warmup = 2;
  cfg.seed = 5;
  const auto rows = bench_scaling(cfg);
  std::vector<std::pair<double, double>> ssm, cross;
  for (const auto& r : rows) (r.mechanism == "ssm" ? ssm : cross).emplace_back(double(r.n), r.wall_nanos);
  const double s_ssm = fit_loglog_slope(ssm);
  const double s_cross = fit_loglog_slope(cross);
  o.detail << "ssm slope " << s_ssm << ", cross-attention slope " << s_cross;
  if (s_ssm < 0.7 || s_ssm > 1.3) o.fail("ssm slope " + std::to_string(s_ssm));
  if (s_cross < 1.7) o.fail("cross-attention slope " + std::to_string(s_cross));

  const auto bytes = [](std::int64_t n) { return analytic_peak_bytes(Mechanism::kSsm, n, 2, 8, 16); };
  const std::uint64_t step = bytes(65) - bytes(64);
  for (std::int64_t n = 1; n <= 4096; ++n)
    if (bytes(n) != bytes(1) + step * static_cast<std::uint64_t>(n - 1)) {
      o.fail("ssm byte model not affine at N=" + std::to_string(n));
      return;
    }
  o.detail << "; ssm byte model affine (" << step << " B/frame)";
}

// 6
void geometry(Outcome& o) {
  Rng rng(6);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double f = rng.uniform(20, 2000);
    const Eigen::Matrix4d t = make_rigid(
        Eigen::AngleAxisd(rng.uniform(-3.14, 3.14),
                          (Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) +
                           Eigen::Vector3d(0, 0, 1e-3))
                              .normalized())
            .toRotationMatrix(),
        Eigen::Vector3d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)));
    CameraModel cam = CameraModel::pinhole(f, rng.uniform(0, 1600), rng.uniform(0, 900), t, 0);
    cam.intrinsic(0, 1) = rng.uniform(-1, 1);
    // Sample inside the frustum in camera coordinates, then map to ego.
    const double depth = rng.uniform(0.5, 80.0);
    const Eigen::Vector3d q(rng.uniform(-1, 1) * depth, rng.uniform(-0.6, 0.6) * depth, depth);
    const Eigen::Vector3d p = rigid_inverse(cam.extrinsic).topLeftCorner<3, 3>() * q +
                              rigid_inverse(cam.extrinsic).topRightCorner<3, 1>();
    const PixelDepth pd = project_point(cam, p);
    const Eigen::Vector3d back = lift_center(cam, {pd.u, pd.v}, pd.depth);
    worst = std::max(worst, (back - p).norm());
  }
  const Eigen::Vector3d id = lift_center(CameraModel{}, {0.5, 0.25}, 10.0);
  const double id_err = (id - Eigen::Vector3d(5, 2.5, 10)).cwiseAbs().maxCoeff();
  o.detail << "10^5 points max err " << worst << ", identity case err " << id_err;
  if (worst > 1e-9) o.fail("round trip err " + std::to_string(worst));
  if (id_err > 1e-12) o.fail("identity case err " + std::to_string(id_err));
}

// 7
void alignment(Outcome& o) {
  double worst = 0.0, worst_pair = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    SceneConfig cfg;
    cfg.seed = mix_seed(7, s);
    cfg.static_fraction = 1.0;
    cfg.n_frames = 8;
    cfg.ego_yaw_rate_max = 0.6;
    const Scene scene = generate_scene(cfg);
    const auto& cur = scene.frames.back();
    for (const auto& fr : scene.frames) {
      std::vector<Eigen::Vector3d> c, v;
      for (const auto& obj : fr.objects) {
        c.push_back(obj.center_ego);
        v.push_back(Eigen::Vector3d::Zero());
      }
      const auto a = align_centers(c, v, cur.timestamp() - fr.timestamp(), cur.ego_pose, fr.ego_pose);
      for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, (a[i] - cur.objects[i].center_ego).norm());
        for (std::size_t j = 0; j < a.size(); ++j)
          worst_pair = std::max(worst_pair, std::abs((a[i] - a[j]).norm() - (c[i] - c[j]).norm()));
      }
    }
  }
  o.detail << "100 trajectories, max alignment err " << worst << ", max distance drift " << worst_pair;
  if (worst > 1e-9) o.fail("alignment err " + std::to_string(worst));
  if (worst_pair > 1e-9) o.fail("distance drift " + std::to_string(worst_pair));
}

struct RandomFrame {
  std::vector<Eigen::Vector3d> cur, past;
  std::vector<int> cc, pc;
  std::vector<std::array<bool, 2>> valid;
};

RandomFrame random_frame(std::uint64_t seed) {
  Rng rng(seed);
  RandomFrame f;
  const std::size_t k = 1 + rng.below(12);
  for (std::size_t i = 0; i < k; ++i) {
    f.cur.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-0.5, 0.5));
    f.past.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-0.5, 0.5));
    f.cc.push_back(static_cast<int>(rng.below(3)));
    f.pc.push_back(static_cast<int>(rng.below(3)));
    f.valid.push_back({rng.uniform() < 0.85, rng.uniform() < 0.85});
  }
  return f;
}

SlotMask brute_force(const RandomFrame& f, double alpha, bool same_cat) {
  SlotMask m(f.cur.size(), 0);
  for (std::size_t n = 0; n < f.cur.size(); ++n) {
    if (!f.valid[n][1]) continue;
    bool exists = false;
    for (std::size_t j = 0; j < f.cur.size(); ++j)
      if (f.valid[j][0] && (f.cur[j] - f.past[n]).norm() <= alpha && (!same_cat || f.cc[j] == f.pc[n]))
        exists = true;
    m[n] = exists ? 0 : 1;
  }
  return m;
}

// 8
void motion_oracle(Outcome& o) {
  int mismatches = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const RandomFrame f = random_frame(mix_seed(8, s));
    const MotionElimConfig cfg{Rng(s).uniform(0.0, 3.0), s % 4 != 0};
    if (motion_mask(motion_cost(f.cur, f.past, f.valid), f.cc, f.pc, cfg) !=
        brute_force(f, cfg.alpha, cfg.require_same_category))
      ++mismatches;
  }
  int monotone_violations = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const RandomFrame f = random_frame(mix_seed(9, s));
    const auto cost = motion_cost(f.cur, f.past, f.valid);
    SlotMask prev = motion_mask(cost, f.cc, f.pc, {0.0, true});
    for (double alpha = 0.1; alpha <= 6.0; alpha += 0.1) {
      const SlotMask m = motion_mask(cost, f.cc, f.pc, {alpha, true});
      for (std::size_t i = 0; i < m.size(); ++i) monotone_violations += m[i] > prev[i] ? 1 : 0;
      prev = m;
    }
  }
  int current_violations = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    SceneConfig cfg;
    cfg.seed = mix_seed(10, s);
    cfg.n_frames = 4;
    const Scene scene = generate_scene(cfg);
    const auto res = run_pipeline(scene, PipelineWeights::seeded(dims_for_scene(scene), s));
    const auto& m = res.mask.per_frame[static_cast<std::size_t>(res.padded.current_index)];
    for (auto b : m) current_violations += b == 1 ? 0 : 1;
  }
  o.detail << "1000 frames: " << mismatches << " mismatches; alpha monotonicity violations "
           << monotone_violations << "; current-frame zeros " << current_violations;
  if (mismatches != 0) o.fail(std::to_string(mismatches) + " mask mismatches");
  if (monotone_violations != 0) o.fail("mask not monotone in alpha");
  if (current_violations != 0) o.fail("current frame not all ones");
}

// 9
void end_to_end(Outcome& o) {
  double worst = 0.0;
  std::size_t detections = 0, slots = 0, set_mismatch = 0, eliminated = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    SceneConfig cfg;
    cfg.seed = mix_seed(11, s);
    cfg.noise_sigma_px = 0.0;
    cfg.n_objects = 8;
    cfg.n_frames = 5;
    const Scene scene = generate_scene(cfg);
    PipelineConfig pc;
    pc.motion.alpha = cfg.alpha;
    const auto res = run_pipeline(scene, PipelineWeights::seeded(dims_for_scene(scene), s, BoxMode::kBypass), pc);
    const auto& cur = scene.frames.back();
    for (const auto& d : res.detections) {
      worst = std::max(worst, (d.center3d - cur.objects.at(d.object_id).center_ego).norm());
      ++detections;
    }
    // A past slot is eliminated iff its object is ground-truth static and
    // the object is observed in the current frame.
    std::set<int> seen_now;
    for (const auto& q : res.padded.frames[res.padded.current_index])
      if (q.valid) seen_now.insert(q.object_id);
    for (std::size_t f = 0; f < res.padded.frames.size(); ++f) {
      if (static_cast<int>(f) == res.padded.current_index) continue;
      for (std::size_t k = 0; k < res.padded.frames[f].size(); ++k) {
        const Query3D& q = res.padded.frames[f][k];
        if (!q.valid) continue;
        ++slots;
        const bool is_elim = res.mask.per_frame[f][k] == 0;
        const bool gt_static = scene.frames[f].objects.at(q.object_id).motion_static;
        eliminated += is_elim ? 1 : 0;
        if (is_elim != (gt_static && seen_now.count(q.object_id) > 0)) ++set_mismatch;
      }
    }
  }
  o.detail << detections << " detections, max center err " << worst << " m; " << eliminated << "/" << slots
           << " past slots eliminated, " << set_mismatch << " disagree with ground truth";
  if (detections == 0) o.fail("no detections");
  if (worst > 1e-6) o.fail("center err " + std::to_string(worst));
  if (set_mismatch != 0) o.fail(std::to_string(set_mismatch) + " eliminated-set mismatches");
}

// 10
void residual_identity(Outcome& o) {
  Rng rng(10);
  FusedQuerySequence x;
  x.data = rng.uniform_matrix(9, 24, -3, 3);
  x.k_queries = 3;
  x.embed_dim = 8;
  for (int i = 0; i < 9; ++i) x.frame_order.push_back(i);
  if (query_mamba_block(x, QueryMambaLayerParams::zero(24, 16, 3)).data != x.data) o.fail("block not identity");
  if (query_mamba_stack(x, QueryMambaStack::zero(6, 24, 16, 3)).data != x.data) o.fail("stack not identity");

  std::size_t compared = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    SceneConfig cfg;
    cfg.seed = mix_seed(12, s);
    cfg.n_frames = 6;
    const Scene scene = generate_scene(cfg);
    for (BoxMode mode : {BoxMode::kBypass, BoxMode::kLinear}) {
      PipelineWeights w = PipelineWeights::seeded(dims_for_scene(scene), s, mode);
      w.zero_fusion();
      const auto multi = run_pipeline(scene, w).detections;
      const auto single = run_pipeline(last_frames(scene, 1), w).detections;
      if (multi.size() != single.size()) {
        o.fail("detection counts differ");
        return;
      }
      for (std::size_t i = 0; i < multi.size(); ++i) {
        const auto& a = multi[i];
        const auto& b = single[i];
        const bool same = a.center3d == b.center3d && a.size == b.size && a.yaw == b.yaw &&
                          a.velocity == b.velocity && a.score == b.score && a.category == b.category;
        if (!same) o.fail("detection " + std::to_string(i) + " differs");
        ++compared;
      }
    }
  }
  o.detail << "block and 6-layer stack exact identity; " << compared << " detections bit-identical";
}

int cli(const std::string& args) {
  const int rc = std::system((g_cli + " " + args + " 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// 11
void determinism(Outcome& o) {
  if (g_cli.empty()) {
    o.fail("CLI path not given");
    return;
  }
  const fs::path dir = fs::temp_directory_path() / "statefuse_acceptance";
  fs::create_directories(dir);
  const auto p = [&](const std::string& n) { return (dir / n).string(); };
  std::ofstream(p("scene.json")) << R"({"seed": 2024, "n_frames": 6, "n_objects": 10})";
  std::ofstream(p("bench.json")) << R"({"n_values": [16, 32, 64, 128], "repetitions": 3, "seed": 7})";
  bool ok = true;
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    ok = ok && cli("simulate --config " + p("scene.json") + " --out " + p("s" + t + ".json") +
                   " --features-out " + p("f" + t + ".bin")) == 0;
    ok = ok && cli("run --scene " + p("sa.json") + " --weights seed:99 --alpha 0.5 --out " + p("r" + t + ".csv")) == 0;
    ok = ok && cli("run --scene " + p("sa.json") + " --weights seed:99 --box-mode linear --alpha 0.5 --out " +
                   p("l" + t + ".csv")) == 0;
    ok = ok && cli("bench --config " + p("bench.json") + " --out " + p("b" + t + ".csv")) == 0;
    ok = ok && cli("weights --scene " + p("sa.json") + " --seed 99 --out " + p("w" + t + ".bin")) == 0;
  }
  if (!ok) {
    o.fail("CLI invocation failed");
    fs::remove_all(dir);
    return;
  }
  for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{
           {"sa.json", "sb.json"}, {"fa.bin", "fb.bin"}, {"ra.csv", "rb.csv"}, {"la.csv", "lb.csv"},
           {"wa.bin", "wb.bin"}})
    if (read_file(p(a)) != read_file(p(b))) o.fail(a + " and " + b + " differ");

  const auto ba = parse_bench_csv(read_file(p("ba.csv")));
  const auto bb = parse_bench_csv(read_file(p("bb.csv")));
  bool bench_same = ba.size() == bb.size() && !ba.empty();
  for (std::size_t i = 0; bench_same && i < ba.size(); ++i)
    bench_same = std::tie(ba[i].mechanism, ba[i].n, ba[i].k, ba[i].d, ba[i].m, ba[i].peak_bytes,
                          ba[i].peak_bytes_source, ba[i].op_count) ==
                 std::tie(bb[i].mechanism, bb[i].n, bb[i].k, bb[i].d, bb[i].m, bb[i].peak_bytes,
                          bb[i].peak_bytes_source, bb[i].op_count);
  if (!bench_same) o.fail("bench op-count columns differ");

  const std::string wbytes = read_file(p("wa.bin"));
  if (serialize_weights(parse_weights(wbytes)) != wbytes) o.fail("weights round trip not bit-exact");
  if (cli("run --scene " + p("sa.json") + " --weights " + p("wa.bin") + " --alpha 0.5 --out " + p("rw.csv")) != 0 ||
      read_file(p("rw.csv")) != read_file(p("ra.csv")))
    o.fail("weights file and seed: weights disagree");
  if (o.passed)
    o.detail << "simulate, features, run (bypass, linear), weights byte-identical; bench op columns identical; "
                "weights round trip bit-exact ("
             << wbytes.size() << " bytes)";
  fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_cli = argv[1];
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"scan/kernel equivalence", scan_kernel},
      {"FFT vs direct convolution", fft_direct},
      {"SSM linearity", linearity},
      {"complexity formulas and crossover", complexity},
      {"empirical scaling", scaling},
      {"geometry round trip", geometry},
      {"ego alignment", alignment},
      {"motion elimination oracle", motion_oracle},
      {"end-to-end geometric correctness", end_to_end},
      {"residual-identity chain", residual_identity},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": "
              << o.detail.str() << std::endl;
    failed += o.passed ? 0 : 1;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
