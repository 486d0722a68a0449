#include "statefuse/motion_elimination.hpp"

#include <algorithm>
#include <cmath>

#include "statefuse/error.hpp"

namespace statefuse {

std::size_t MotionMask::retained(std::size_t frame) const {
  const auto& m = per_frame.at(frame);
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

void MotionElimConfig::validate() const {
  require(std::isfinite(alpha) && alpha >= 0.0, ErrorKind::kInvalidParameter,
          "alpha must be finite and >= 0");
}

PaddedQuerySequence pad_frames(const std::vector<std::vector<Query3D>>& raw,
                               std::optional<int> current_index) {
  require(!raw.empty(), ErrorKind::kEmptySequence, "no frames");
  const int n = static_cast<int>(raw.size());
  PaddedQuerySequence seq;
  seq.current_index = current_index.value_or(n - 1);
  require(seq.current_index >= 0 && seq.current_index < n, ErrorKind::kInvalidParameter,
          "current_index out of range");

  std::size_t k = 0;
  for (int f = 0; f < n; ++f) {
    if (raw[f].size() >= k && !raw[f].empty()) {
      k = raw[f].size();
      seq.reference_frame = f;
    }
    for (const auto& q : raw[f]) {
      if (seq.embed_dim == 0) seq.embed_dim = q.q_3d.size();
      require(q.q_3d.size() == seq.embed_dim, ErrorKind::kInvalidParameter,
              "queries disagree on embedding width");
    }
  }
  require(k > 0, ErrorKind::kEmptySequence, "every frame is empty");
  seq.k_max = static_cast<Eigen::Index>(k);

  seq.frames.reserve(raw.size());
  for (int f = 0; f < n; ++f) {
    std::vector<Query3D> slots = raw[f];
    while (slots.size() < k) slots.push_back(Query3D::padding(seq.embed_dim, f));
    seq.frames.push_back(std::move(slots));
  }
  return seq;
}

MotionCostMatrix motion_cost(const std::vector<Eigen::Vector3d>& current_centers,
                             const std::vector<Eigen::Vector3d>& past_aligned,
                             const std::vector<std::array<bool, 2>>& validity, int frame_offset) {
  const std::size_t k = current_centers.size();
  require(past_aligned.size() == k && validity.size() == k, ErrorKind::kInvalidParameter,
          "cost inputs must all have K entries");
  MotionCostMatrix out;
  out.frame_offset = frame_offset;
  out.cost.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  out.current_valid.resize(k);
  out.past_valid.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.current_valid[i] = validity[i][0];
    out.past_valid[i] = validity[i][1];
  }
  for (std::size_t m = 0; m < k; ++m)
    for (std::size_t n = 0; n < k; ++n)
      out.cost(m, n) = (out.current_valid[m] && out.past_valid[n])
                           ? (current_centers[m] - past_aligned[n]).norm()
                           : kCostSentinel;
  return out;
}

SlotMask motion_mask(const MotionCostMatrix& cost, const std::vector<int>& cats_current,
                     const std::vector<int>& cats_past, const MotionElimConfig& cfg) {
  cfg.validate();
  const Eigen::Index k = cost.cost.cols();
  require(cost.cost.rows() == k && static_cast<Eigen::Index>(cats_current.size()) == k &&
              static_cast<Eigen::Index>(cats_past.size()) == k &&
              static_cast<Eigen::Index>(cost.past_valid.size()) == k &&
              static_cast<Eigen::Index>(cost.current_valid.size()) == k,
          ErrorKind::kInvalidParameter, "mask inputs must all have K entries");
  SlotMask mask(static_cast<std::size_t>(k), 0);
  for (Eigen::Index n = 0; n < k; ++n) {
    if (!cost.past_valid[n]) continue;
    bool is_static = false;
    for (Eigen::Index m = 0; m < k && !is_static; ++m) {
      if (!cost.current_valid[m]) continue;
      const bool close = cost.cost(m, n) <= cfg.alpha;
      const bool same = !cfg.require_same_category || cats_current[m] == cats_past[n];
      is_static = close && same;
    }
    mask[n] = is_static ? 0 : 1;
  }
  return mask;
}

PaddedQuerySequence apply_motion_mask(const PaddedQuerySequence& seq, const MotionMask& mask) {
  require(mask.per_frame.size() == seq.frames.size(), ErrorKind::kInvalidParameter,
          "mask frame count mismatch");
  PaddedQuerySequence out = seq;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    require(static_cast<Eigen::Index>(mask.per_frame[f].size()) == seq.k_max,
            ErrorKind::kInvalidParameter, "mask width must equal K");
    if (static_cast<int>(f) == seq.current_index) continue;
    for (Eigen::Index s = 0; s < seq.k_max; ++s) {
      if (mask.per_frame[f][s] != 0) continue;
      Query3D& q = out.frames[f][s];
      q.q_3d.setZero();
      q.valid = false;
    }
  }
  return out;
}

MotionMask build_motion_mask(const PaddedQuerySequence& seq, const std::vector<EgoPose>& poses,
                             const MotionElimConfig& cfg,
                             const std::vector<std::vector<Eigen::Vector3d>>* velocities) {
  cfg.validate();
  require(poses.size() == seq.frames.size(), ErrorKind::kInvalidParameter,
          "need one ego pose per frame");
  const std::size_t k = static_cast<std::size_t>(seq.k_max);
  const auto& cur = seq.frames[seq.current_index];
  const EgoPose& pose_now = poses[seq.current_index];

  std::vector<Eigen::Vector3d> cur_centers(k);
  std::vector<int> cur_cats(k);
  for (std::size_t s = 0; s < k; ++s) {
    cur_centers[s] = cur[s].center3d;
    cur_cats[s] = cur[s].category;
  }

  MotionMask mask;
  mask.per_frame.resize(seq.frames.size());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    if (static_cast<int>(f) == seq.current_index) {
      mask.per_frame[f].assign(k, 1);
      continue;
    }
    const auto& past = seq.frames[f];
    std::vector<Eigen::Vector3d> centers(k), vel(k, Eigen::Vector3d::Zero());
    std::vector<int> cats(k);
    std::vector<std::array<bool, 2>> validity(k);
    for (std::size_t s = 0; s < k; ++s) {
      centers[s] = past[s].center3d;
      cats[s] = past[s].category;
      validity[s] = {cur[s].valid, past[s].valid};
      if (velocities) vel[s] = velocities->at(f).at(s);
    }
    const double dt = pose_now.timestamp - poses[f].timestamp;
    const auto aligned = align_centers(centers, vel, dt, pose_now, poses[f]);
    const auto cost =
        motion_cost(cur_centers, aligned, validity, seq.current_index - static_cast<int>(f));
    mask.per_frame[f] = motion_mask(cost, cur_cats, cats, cfg);
  }
  return mask;
}

}  // namespace statefuse
