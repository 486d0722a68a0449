#include "statefuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "statefuse/error.hpp"
#include "statefuse/random.hpp"

namespace statefuse {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r))
    throw Error(ErrorKind::kNumericOverflow, "operation count overflows 64 bits");
  return r;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r))
    throw Error(ErrorKind::kNumericOverflow, "operation count overflows 64 bits");
  return r;
}

std::uint64_t positive(std::int64_t v, const char* name) {
  require(v >= 1, ErrorKind::kInvalidParameter, std::string(name) + " must be >= 1");
  return static_cast<std::uint64_t>(v);
}

// Runs one pipeline stage, tagging any failure with the stage name.
template <typename F>
auto stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
  }
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::kNumericOverflow, std::string("non-finite ") + what);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(BoxMode mode) { return mode == BoxMode::kBypass ? "bypass" : "linear"; }

BoxMode box_mode_from_string(const std::string& s) {
  if (s == "bypass") return BoxMode::kBypass;
  if (s == "linear") return BoxMode::kLinear;
  throw Error(ErrorKind::kInvalidParameter, "unknown box mode: " + s);
}

void PipelineDims::validate() const {
  require(k_queries >= 1 && embed_dim >= 2 && embed_dim % 2 == 0 && feature_channels >= 1 &&
              state_dim >= 1 && n_layers >= 1 && dw_ksize >= 1 && n_heads >= 1 && n_keys >= 1 &&
              head_dim >= 1 && decoder_keys_per_camera >= 1,
          ErrorKind::kInvalidParameter, "invalid pipeline dimensions");
}

void PipelineWeights::validate() const {
  dims.validate();
  require(static_cast<int>(stack.layers.size()) == dims.n_layers, ErrorKind::kInvalidParameter,
          "layer count mismatch");
  for (const auto& l : stack.layers) {
    l.validate();
    require(l.width() == fused_width(), ErrorKind::kInvalidParameter, "fusion width mismatch");
  }
  attn.validate(dims.feature_channels);
  pos.validate();
  require(pos.embed_dim == dims.embed_dim, ErrorKind::kInvalidParameter, "pos-embed width mismatch");
  const Eigen::Index c = dims.feature_channels;
  const Eigen::Index d = dims.embed_dim;
  require(sem_proj.rows() == c && sem_proj.cols() == d, ErrorKind::kInvalidParameter,
          "semantic projection must be C x D");
  require(decoder.w_q.rows() == d && decoder.w_q.cols() == d && decoder.w_k.rows() == c &&
              decoder.w_k.cols() == d && decoder.w_v.rows() == c && decoder.w_v.cols() == d &&
              decoder.w_o.rows() == d && decoder.w_o.cols() == d,
          ErrorKind::kInvalidParameter, "decoder projection shape mismatch");
  require(box.weight.rows() == d && box.weight.cols() == 10 && box.bias.size() == 10,
          ErrorKind::kInvalidParameter, "box head must be D x 10");
}

PipelineWeights PipelineWeights::seeded(const PipelineDims& dims, std::uint64_t seed,
                                        BoxMode mode) {
  dims.validate();
  PipelineWeights w;
  w.seed = seed;
  w.dims = dims;
  w.box_mode = mode;
  const Eigen::Index d = dims.embed_dim;
  const Eigen::Index c = dims.feature_channels;
  w.stack = QueryMambaStack::random(static_cast<std::size_t>(dims.n_layers), w.fused_width(),
                                    dims.state_dim, dims.dw_ksize, mix_seed(seed, 1));
  w.attn = DeformAttnParams::seeded(dims.feature_channels, dims.n_heads, dims.n_keys,
                                    dims.head_dim, mix_seed(seed, 2));
  w.pos = PosEmbedParams::seeded(dims.embed_dim, mix_seed(seed, 3));
  Rng rng(mix_seed(seed, 4));
  w.sem_proj = rng.uniform_matrix(c, d, -0.1, 0.1);
  w.decoder.w_q = rng.uniform_matrix(d, d, -0.1, 0.1);
  w.decoder.w_k = rng.uniform_matrix(c, d, -0.1, 0.1);
  w.decoder.w_v = rng.uniform_matrix(c, d, -0.1, 0.1);
  w.decoder.w_o = rng.uniform_matrix(d, d, -0.1, 0.1);
  w.decoder.sample_seed = mix_seed(seed, 5);
  w.box.weight = rng.uniform_matrix(d, 10, -0.1, 0.1);
  w.box.bias = rng.uniform_vector(10, -0.1, 0.1);
  return w;
}

void PipelineWeights::zero_fusion() {
  stack = QueryMambaStack::zero(static_cast<std::size_t>(dims.n_layers), fused_width(),
                                dims.state_dim, dims.dw_ksize);
}

std::uint64_t op_count_cross_attention(std::int64_t n, std::int64_t k, std::int64_t d) {
  const std::uint64_t un = positive(n, "N"), uk = positive(k, "K"), ud = positive(d, "D");
  const std::uint64_t kd = checked_mul(uk, ud);
  const std::uint64_t proj = checked_mul(checked_mul(4, un), checked_mul(kd, kd));
  const std::uint64_t attn = checked_mul(checked_mul(2, checked_mul(un, un)), kd);
  return checked_add(proj, attn);
}

std::uint64_t op_count_ssm(std::int64_t n, std::int64_t k, std::int64_t d, std::int64_t m) {
  const std::uint64_t un = positive(n, "N"), uk = positive(k, "K"), ud = positive(d, "D"),
                      um = positive(m, "M");
  const std::uint64_t a = checked_mul(checked_mul(3, un), checked_mul(checked_mul(2, ud), um));
  const std::uint64_t b = checked_mul(un, checked_mul(checked_mul(2, checked_mul(uk, ud)), um));
  return checked_add(a, b);
}

OpCountReport op_count_report(std::int64_t n, std::int64_t k, std::int64_t d, std::int64_t m) {
  OpCountReport r;
  r.n_frames = positive(n, "N");
  r.k_queries = positive(k, "K");
  r.dim = positive(d, "D");
  r.state_dim = positive(m, "M");
  r.cross_attention_ops = op_count_cross_attention(n, k, d);
  r.ssm_ops = op_count_ssm(n, k, d, m);
  return r;
}

std::int64_t op_count_crossover(std::int64_t k, std::int64_t d, std::int64_t m,
                                std::int64_t n_max) {
  using u128 = unsigned __int128;
  require(n_max >= 1, ErrorKind::kInvalidParameter, "n_max must be >= 1");
  std::int64_t crossover = 0;
  for (std::int64_t n = n_max; n >= 1; --n) {
    const std::uint64_t s = op_count_ssm(n, k, d, m);
    const std::uint64_t c = op_count_cross_attention(n, k, d);
    if (!(s < c)) break;
    if (n < n_max) {
      // ratio(n) > ratio(n + 1)  <=>  s(n) c(n+1) > s(n+1) c(n)
      const u128 lhs = static_cast<u128>(s) * op_count_cross_attention(n + 1, k, d);
      const u128 rhs = static_cast<u128>(op_count_ssm(n + 1, k, d, m)) * c;
      if (!(lhs > rhs)) break;
    }
    crossover = n;
  }
  return crossover;
}

FusedQuerySequence fuse_queries(const PaddedQuerySequence& seq, Eigen::Index k_capacity) {
  require(seq.k_max <= k_capacity, ErrorKind::kInvalidParameter,
          "scene needs " + std::to_string(seq.k_max) + " query slots but the weights hold " +
              std::to_string(k_capacity));
  const Eigen::Index d = seq.embed_dim;
  FusedQuerySequence out;
  out.k_queries = k_capacity;
  out.embed_dim = d;
  out.data = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(seq.frames.size()), k_capacity * d);
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    out.frame_order.push_back(static_cast<int>(f));
    for (Eigen::Index s = 0; s < seq.k_max; ++s)
      out.data.row(static_cast<Eigen::Index>(f)).segment(s * d, d) =
          seq.frames[f][static_cast<std::size_t>(s)].q_3d.transpose();
  }
  return out;
}

std::vector<Eigen::VectorXd> decode_current_frame(const FusedQuerySequence& fused,
                                                  const std::vector<Query3D>& current_queries,
                                                  const std::vector<FeatureMap>& feats,
                                                  const PipelineWeights& w) {
  const Eigen::Index d = w.dims.embed_dim;
  const Eigen::Index c = w.dims.feature_channels;
  require(fused.embed_dim == d && fused.frames() >= 1, ErrorKind::kInvalidParameter,
          "fused sequence width does not match decoder");
  require(static_cast<Eigen::Index>(current_queries.size()) <= fused.k_queries,
          ErrorKind::kInvalidParameter, "more current queries than fused slots");
  require(!feats.empty(), ErrorKind::kInvalidParameter, "decoder needs feature maps");

  // Keys and values: features at seeded positions, the same positions every frame.
  std::vector<Eigen::VectorXd> samples;
  for (const auto& fm : feats) {
    require(fm.channels == c, ErrorKind::kInvalidParameter, "feature channel mismatch");
    Rng rng(mix_seed(w.decoder.sample_seed, static_cast<std::uint64_t>(fm.camera_id)));
    for (int i = 0; i < w.dims.decoder_keys_per_camera; ++i) {
      const int row = static_cast<int>(rng.below(static_cast<std::uint64_t>(fm.height)));
      const int col = static_cast<int>(rng.below(static_cast<std::uint64_t>(fm.width)));
      samples.emplace_back(fm.texel(row, col));
    }
  }
  const Eigen::Index n_keys = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd keys(n_keys, d), values(n_keys, d);
  for (Eigen::Index s = 0; s < n_keys; ++s) {
    keys.row(s) = (w.decoder.w_k.transpose() * samples[s]).transpose();
    values.row(s) = (w.decoder.w_v.transpose() * samples[s]).transpose();
  }

  const Eigen::Index t = fused.frames() - 1;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Eigen::VectorXd> refined;
  refined.reserve(current_queries.size());
  for (std::size_t slot = 0; slot < current_queries.size(); ++slot) {
    const Eigen::VectorXd q = fused.data.row(t).segment(static_cast<Eigen::Index>(slot) * d, d).transpose();
    const Eigen::VectorXd qp = w.decoder.w_q.transpose() * q;
    Eigen::VectorXd logits = keys * qp * inv_sqrt_d;
    Eigen::ArrayXd a = (logits.array() - logits.maxCoeff()).exp();
    a /= a.sum();
    const Eigen::VectorXd attended = values.transpose() * a.matrix();
    refined.push_back(q + w.decoder.w_o.transpose() * attended);
  }
  return refined;
}

PipelineDims dims_for_scene(const Scene& scene) {
  PipelineDims dims;
  std::size_t k = 1;
  for (const auto& f : scene.frames) k = std::max(k, f.proposals.size());
  dims.k_queries = static_cast<int>(k);
  dims.feature_channels = scene.config.feature_channels;
  return dims;
}

Scene last_frames(const Scene& scene, int count) {
  require(count >= 1 && count <= static_cast<int>(scene.frames.size()),
          ErrorKind::kInvalidParameter, "frame count out of range");
  Scene out = scene;
  out.frames.erase(out.frames.begin(), out.frames.end() - count);
  return out;
}

PipelineResult run_pipeline(const Scene& scene, const PipelineWeights& w,
                            const PipelineConfig& cfg) {
  require(!scene.frames.empty(), ErrorKind::kEmptySequence, "scene has no frames");
  w.validate();
  cfg.motion.validate();
  require(scene.config.feature_channels == w.dims.feature_channels, ErrorKind::kInvalidParameter,
          "weights expect a different feature channel count");

  PipelineResult res;

  auto raw = stage("query-generation", [&] {
    std::vector<std::vector<Query3D>> frames;
    for (const auto& fr : scene.frames) {
      std::vector<Query3D> qs;
      for (const auto& p : fr.proposals) {
        const auto cam = static_cast<std::size_t>(p.camera_id);
        require(cam < scene.cameras.size() && cam < fr.features.size(),
                ErrorKind::kInvalidParameter, "proposal references an unknown camera");
        Query3D q = build_query(p, fr.features[cam], scene.cameras[cam], w.attn, w.pos, w.sem_proj);
        q.source_frame = fr.frame_index;
        check_finite(q.q_3d, "query embedding");
        qs.push_back(std::move(q));
      }
      frames.push_back(std::move(qs));
    }
    return frames;
  });

  res.padded = stage("zero-padding", [&] { return pad_frames(raw); });

  res.mask = stage("motion-elimination", [&] {
    std::vector<EgoPose> poses;
    for (const auto& fr : scene.frames) poses.push_back(fr.ego_pose);
    if (!cfg.ground_truth_velocity) return build_motion_mask(res.padded, poses, cfg.motion);
    std::vector<std::vector<Eigen::Vector3d>> vel(res.padded.frames.size());
    for (std::size_t f = 0; f < res.padded.frames.size(); ++f)
      for (const auto& q : res.padded.frames[f]) {
        Eigen::Vector3d v = Eigen::Vector3d::Zero();
        if (q.valid && q.object_id >= 0)
          for (const auto& o : scene.frames[f].objects)
            if (o.object_id == q.object_id) v = o.velocity_ego;
        vel[f].push_back(v);
      }
    return build_motion_mask(res.padded, poses, cfg.motion, &vel);
  });

  const PaddedQuerySequence moving = apply_motion_mask(res.padded, res.mask);

  res.fused_input = stage("fusion-packing", [&] { return fuse_queries(moving, w.dims.k_queries); });
  res.fused_output = stage("query-mamba", [&] { return query_mamba_stack(res.fused_input, w.stack); });

  const auto& current = moving.frames[static_cast<std::size_t>(moving.current_index)];
  const auto refined = stage("decoder", [&] {
    auto r = decode_current_frame(res.fused_output, current, scene.frames.back().features, w);
    for (const auto& v : r) check_finite(v, "decoder output");
    return r;
  });

  stage("box-readout", [&] {
    for (std::size_t s = 0; s < current.size(); ++s) {
      const Query3D& q = current[s];
      if (!q.valid) continue;
      Detection det;
      det.slot = static_cast<int>(s);
      det.object_id = q.object_id;
      det.category = q.category;
      if (w.box_mode == BoxMode::kBypass) {
        det.center3d = q.center3d;
        det.score = q.score;
      } else {
        const Eigen::VectorXd o = w.box.weight.transpose() * refined[s] + w.box.bias;
        det.center3d = q.center3d + o.head<3>();
        det.size = o.segment<3>(3).array().exp().matrix();
        det.yaw = o(6);
        det.velocity = o.segment<2>(7);
        det.score = 1.0 / (1.0 + std::exp(-o(9)));
        check_finite(o, "box head output");
      }
      res.detections.push_back(det);
    }
    return 0;
  });

  res.ops = op_count_report(static_cast<std::int64_t>(res.padded.frames.size()), res.padded.k_max,
                            w.dims.embed_dim, w.dims.state_dim);
  return res;
}

std::string run_report_csv(const PipelineResult& result) {
  std::string out = "frame,object_slot,retained,center_x,center_y,center_z,category,score\n";
  const auto& seq = result.padded;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const bool is_current = static_cast<int>(f) == seq.current_index;
    for (std::size_t s = 0; s < seq.frames[f].size(); ++s) {
      const Query3D& q = seq.frames[f][s];
      if (!q.valid) continue;
      Eigen::Vector3d center = q.center3d;
      double score = q.score;
      if (is_current) {
        for (const auto& d : result.detections)
          if (d.slot == static_cast<int>(s)) {
            center = d.center3d;
            score = d.score;
          }
      }
      out += std::to_string(q.source_frame) + "," + std::to_string(s) + "," +
             std::to_string(static_cast<int>(result.mask.per_frame[f][s])) + "," + fmt17(center.x()) +
             "," + fmt17(center.y()) + "," + fmt17(center.z()) + "," + std::to_string(q.category) +
             "," + fmt17(score) + "\n";
    }
  }
  return out;
}

}  // namespace statefuse
