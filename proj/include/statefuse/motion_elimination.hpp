#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "statefuse/camera.hpp"
#include "statefuse/query_generator.hpp"

namespace statefuse {

/// N frames of exactly K slots each; padded slots are invalid zero queries.
struct PaddedQuerySequence {
  std::vector<std::vector<Query3D>> frames;
  Eigen::Index k_max = 0;
  Eigen::Index embed_dim = 0;
  int current_index = 0;
  int reference_frame = 0;  // frame that set K (latest on ties)

  std::size_t frame_count() const { return frames.size(); }
};

struct MotionCostMatrix {
  Eigen::MatrixXd cost;  // rows: current slots, cols: past slots
  int frame_offset = 0;
  std::vector<bool> current_valid;
  std::vector<bool> past_valid;
};

using SlotMask = std::vector<std::uint8_t>;

struct MotionMask {
  std::vector<SlotMask> per_frame;

  std::size_t retained(std::size_t frame) const;
};

struct MotionElimConfig {
  double alpha = 0.5;  // meters
  bool require_same_category = true;

  void validate() const;
};

inline constexpr double kCostSentinel = std::numeric_limits<double>::infinity();

/// Pads every frame to K = max raw count. `current_index` defaults to the
/// last frame.
PaddedQuerySequence pad_frames(const std::vector<std::vector<Query3D>>& raw,
                               std::optional<int> current_index = std::nullopt);

/// cost(m, n) = |current[m] - past[n]|, +inf when either slot is invalid.
/// `validity[i]` is {current slot i valid, past slot i valid}.
MotionCostMatrix motion_cost(const std::vector<Eigen::Vector3d>& current_centers,
                             const std::vector<Eigen::Vector3d>& past_aligned,
                             const std::vector<std::array<bool, 2>>& validity,
                             int frame_offset = 1);

/// Past slot n is eliminated (0) iff some valid current slot m has
/// cost(m, n) <= alpha and, when required, the same category. Padded past
/// slots are always 0.
SlotMask motion_mask(const MotionCostMatrix& cost, const std::vector<int>& cats_current,
                     const std::vector<int>& cats_past, const MotionElimConfig& cfg);

/// Zeroes q_3d and clears `valid` for eliminated past slots. The current
/// frame is never touched.
PaddedQuerySequence apply_motion_mask(const PaddedQuerySequence& seq, const MotionMask& mask);

/// Aligns every past frame to the current one and builds the full mask.
/// `velocities`, when given, holds one ego-frame velocity per slot per frame;
/// otherwise past centers are aligned by ego motion alone.
MotionMask build_motion_mask(const PaddedQuerySequence& seq, const std::vector<EgoPose>& poses,
                             const MotionElimConfig& cfg,
                             const std::vector<std::vector<Eigen::Vector3d>>* velocities = nullptr);

}  // namespace statefuse
