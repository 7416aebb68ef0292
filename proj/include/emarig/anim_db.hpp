#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emarig/ema_io.hpp"
#include "emarig/geometry.hpp"
#include "emarig/ik_solver.hpp"
#include "emarig/rig.hpp"

namespace emarig {

struct BoneKey {
  Quat rotation = Quat::Identity();
  Vec3 head = Vec3::Zero();
  double stretch = 1.0;
};

struct JawKey {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  RigidTransform transform() const;
  static JawKey from(const RigidTransform& t);
};

struct ClipFrame {
  std::vector<BoneKey> bones;
  JawKey jaw;
};

// Densely baked animation on one timeline: every channel has a key at every
// entry of `times`.
struct AnimationClip {
  double rate_hz = 200.0;
  double duration = 0.0;  // seconds; frames / rate_hz for a bake
  Armature armature;      // rest pose the keys are relative to
  std::vector<double> times;
  std::vector<ClipFrame> frames;
  std::vector<double> residuals;  // per-frame max IK residual (bake only)
  std::vector<int> iterations;    // per-frame solver iterations (bake only)

  std::size_t key_count() const { return times.size(); }
  PoseFrame pose(std::size_t key) const;
  std::vector<Vec3> tails(std::size_t key) const;
  // Linear interpolation of the posed tail trajectories, t clamped to the keys.
  std::vector<Vec3> sample_tails(double t) const;
  // Channel interpolation (slerp for rotations) at an arbitrary time.
  ClipFrame sample(double t) const;
  void validate() const;
};

ClipFrame blend_frames(const ClipFrame& a, const ClipFrame& b, double alpha);

// Solves every frame of the sweeps in order and concatenates them on one
// timeline (sweep k starts where sweep k-1 ends).
AnimationClip bake(std::span<const EmaSweep> sweeps, const CompiledRig& rig, const IkParams& params);

// IK targets of one frame in mesh space, indexed by bone.
std::vector<std::optional<Vec3>> frame_targets(const EmaSweep& sweep, std::size_t frame,
                                               const CompiledRig& rig);
RigidTransform jaw_transform(const EmaSweep& sweep, std::size_t frame, const CompiledRig& rig);

struct Segment {
  double start = 0.0;
  double end = 0.0;
  std::string label;
};

struct SegmentTier {
  std::vector<Segment> segments;

  void validate() const;
  void check_within(double duration) const;
};

// `start end label` per line, seconds; `#` starts a comment.
SegmentTier parse_segmentation(std::string_view text);
std::string format_segmentation(const SegmentTier& tier);

// Per-sweep tiers shifted onto the concatenated timeline.
SegmentTier merge_tiers(std::span<const SegmentTier> tiers, std::span<const double> offsets);

struct AnimationUnit {
  std::string label;
  double start = 0.0;
  double end = 0.0;
  std::vector<Vec3> first_positions;
  std::vector<Vec3> last_positions;
  std::vector<Vec3> first_velocities;
  std::vector<Vec3> last_velocities;
  std::size_t source_index = 0;

  double duration() const { return end - start; }
};

// Tail velocities at t by central difference with step 1/rate_hz, one-sided
// at the clip edges.
std::vector<Vec3> tail_velocities(const AnimationClip& clip, double t);

std::vector<AnimationUnit> build_unit_db(const AnimationClip& clip, const SegmentTier& tier);

}  // namespace emarig
