#include "emarig/anim_db.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "emarig/error.hpp"
#include "emarig/kv_config.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "anim_db";
constexpr double kTimeEps = 1e-9;

// Index i and fraction w with t between times[i] and times[i+1].
std::pair<std::size_t, double> locate(const std::vector<double>& times, double t) {
  if (times.size() < 2 || t <= times.front()) return {0, 0.0};
  if (t >= times.back()) return {times.size() - 1, 0.0};
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
  if (std::abs(times[i + 1] - t) <= kTimeEps) return {i + 1, 0.0};
  if (std::abs(t - times[i]) <= kTimeEps) return {i, 0.0};
  return {i, (t - times[i]) / (times[i + 1] - times[i])};
}

}  // namespace

RigidTransform JawKey::transform() const {
  return RigidTransform{rotation.normalized().toRotationMatrix(), translation};
}

JawKey JawKey::from(const RigidTransform& t) {
  return JawKey{Quat(t.rotation).normalized(), t.translation};
}

PoseFrame AnimationClip::pose(std::size_t key) const {
  PoseFrame p;
  const auto& f = frames.at(key);
  for (const auto& k : f.bones) {
    BonePose bp;
    bp.rotation = k.rotation.normalized().toRotationMatrix();
    bp.head = k.head;
    bp.stretch = k.stretch;
    bp.cross_section_scale = cross_section_for(k.stretch);
    p.bones.push_back(bp);
  }
  p.residuals.assign(f.bones.size(), 0.0);
  return p;
}

std::vector<Vec3> AnimationClip::tails(std::size_t key) const {
  const auto& f = frames.at(key);
  std::vector<Vec3> out;
  out.reserve(f.bones.size());
  for (std::size_t b = 0; b < f.bones.size(); ++b) {
    const auto& bone = armature.bones[b];
    out.push_back(f.bones[b].head + f.bones[b].rotation * ((bone.tail - bone.head) * f.bones[b].stretch));
  }
  return out;
}

std::vector<Vec3> AnimationClip::sample_tails(double t) const {
  const auto [i, w] = locate(times, t);
  if (w == 0.0) return tails(i);
  auto a = tails(i);
  const auto b = tails(i + 1);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = (1.0 - w) * a[k] + w * b[k];
  return a;
}

ClipFrame blend_frames(const ClipFrame& a, const ClipFrame& b, double alpha) {
  ClipFrame out;
  out.bones.resize(a.bones.size());
  for (std::size_t k = 0; k < a.bones.size(); ++k) {
    out.bones[k].rotation = a.bones[k].rotation.slerp(alpha, b.bones[k].rotation);
    out.bones[k].head = (1.0 - alpha) * a.bones[k].head + alpha * b.bones[k].head;
    out.bones[k].stretch = (1.0 - alpha) * a.bones[k].stretch + alpha * b.bones[k].stretch;
  }
  out.jaw.rotation = a.jaw.rotation.slerp(alpha, b.jaw.rotation);
  out.jaw.translation = (1.0 - alpha) * a.jaw.translation + alpha * b.jaw.translation;
  return out;
}

ClipFrame AnimationClip::sample(double t) const {
  const auto [i, w] = locate(times, t);
  if (w == 0.0) return frames.at(i);
  return blend_frames(frames[i], frames[i + 1], w);
}

void AnimationClip::validate() const {
  if (frames.size() != times.size()) throw Error(kModule, "BadClip", "frame/time count mismatch");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i == 0 ? times[0] != 0.0 : !(times[i] > times[i - 1])) {
      throw Error(kModule, "BadClip", fmt::format("key {} breaks the strictly increasing timeline", i));
    }
    if (frames[i].bones.size() != armature.bones.size()) {
      throw Error(kModule, "BadClip", fmt::format("key {} has the wrong bone count", i));
    }
  }
  if (!times.empty() && duration < times.back()) {
    throw Error(kModule, "BadClip", "duration ends before the last key");
  }
}

std::vector<std::optional<Vec3>> frame_targets(const EmaSweep& sweep, std::size_t frame,
                                               const CompiledRig& rig) {
  std::vector<std::optional<Vec3>> t(rig.armature.bones.size());
  for (std::size_t b = 0; b < t.size(); ++b) {
    const auto& s = sweep.at(frame, sweep.channel_index(rig.armature.bones[b].name));
    if (s.valid) t[b] = rig.meta.registration.apply(s.position);
  }
  return t;
}

RigidTransform jaw_transform(const EmaSweep& sweep, std::size_t frame, const CompiledRig& rig) {
  if (!rig.jaw_rest || !rig.meta.jaw_channel) return {};
  const auto& s = sweep.at(frame, sweep.channel_index(*rig.meta.jaw_channel));
  if (!s.valid) return {};
  const auto& reg = rig.meta.registration;
  const Vec3 p = reg.apply(s.position);
  const Vec3 o = reg.rotate(orientation_vector(s.phi, s.theta));
  RigidTransform t;
  t.rotation = minimal_rotation(rig.jaw_rest->direction, o);
  t.translation = p - t.rotation * rig.jaw_rest->position;
  return t;
}

AnimationClip bake(std::span<const EmaSweep> sweeps, const CompiledRig& rig, const IkParams& params) {
  params.validate();
  AnimationClip clip;
  clip.armature = rig.armature;
  if (!sweeps.empty()) clip.rate_hz = sweeps.front().rate_hz;
  std::size_t total = 0;
  for (const auto& s : sweeps) {
    if (s.rate_hz != clip.rate_hz) {
      throw Error(kModule, "RateMismatch",
                  fmt::format("sweep '{}' is sampled at {} Hz, expected {}", s.sweep_id, s.rate_hz,
                              clip.rate_hz));
    }
    total += s.frame_count();
  }
  clip.times.reserve(total);
  clip.frames.reserve(total);
  clip.residuals.reserve(total);
  clip.iterations.reserve(total);

  // Sweep k starts at the summed durations of sweeps 0..k-1.
  double offset = 0.0;
  for (const auto& sweep : sweeps) {
    for (std::size_t f = 0; f < sweep.frame_count(); ++f) {
      const auto targets = frame_targets(sweep, f, rig);
      const PoseFrame pose = solve_pose(rig.armature, targets, params);
      ClipFrame frame;
      frame.bones.reserve(pose.bones.size());
      for (const auto& bp : pose.bones) {
        frame.bones.push_back(BoneKey{Quat(bp.rotation).normalized(), bp.head, bp.stretch});
      }
      frame.jaw = JawKey::from(jaw_transform(sweep, f, rig));
      clip.times.push_back(offset + static_cast<double>(f) / clip.rate_hz);
      clip.frames.push_back(std::move(frame));
      clip.residuals.push_back(pose.max_residual());
      clip.iterations.push_back(pose.iterations_used);
    }
    offset += sweep.duration();
  }
  clip.duration = static_cast<double>(total) / clip.rate_hz;
  return clip;
}

void SegmentTier::validate() const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (!(s.start >= 0.0) || !std::isfinite(s.end)) {
      throw Error(kModule, "BadNumber", fmt::format("segment {} has an invalid time", i + 1));
    }
    if (!(s.start < s.end)) {
      throw Error(kModule, "NonMonotonic",
                  fmt::format("segment {} ('{}') ends at {} before it starts at {}", i + 1,
                              s.label, s.end, s.start));
    }
    if (i > 0) {
      const auto& p = segments[i - 1];
      if (s.start < p.start) {
        throw Error(kModule, "NonMonotonic",
                    fmt::format("segment {} starts at {} before segment {} ({})", i + 1, s.start, i, p.start));
      }
      if (s.start < p.end) {
        throw Error(kModule, "OverlapError",
                    fmt::format("segment {} starts at {} inside segment {} ending at {}", i + 1,
                                s.start, i, p.end));
      }
    }
  }
}

void SegmentTier::check_within(double duration) const {
  validate();
  if (!segments.empty() && segments.back().end > duration + kTimeEps) {
    throw Error(kModule, "TierExceedsClip",
                fmt::format("segmentation ends at {} s but the animation lasts {} s",
                            segments.back().end, duration));
  }
}

SegmentTier parse_segmentation(std::string_view text) {
  SegmentTier tier;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    auto take_word = [&line]() {
      const auto sp = line.find_first_of(" \t");
      auto w = line.substr(0, sp);
      line = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp));
      return w;
    };
    Segment s;
    const auto context = fmt::format("segmentation line {}", line_no);
    s.start = parse_double(take_word(), kModule, context);
    if (line.empty()) throw Error(kModule, "BadNumber", context + ": missing end time");
    s.end = parse_double(take_word(), kModule, context);
    if (line.empty()) throw Error(kModule, "BadNumber", context + ": missing label");
    s.label = std::string(line);
    if (!std::isfinite(s.start) || !std::isfinite(s.end) || s.start < 0.0) {
      throw Error(kModule, "BadNumber", context + ": times must be finite and non-negative");
    }
    tier.segments.push_back(std::move(s));
  }
  tier.validate();
  return tier;
}

std::string format_segmentation(const SegmentTier& tier) {
  std::string out;
  for (const auto& s : tier.segments) out += fmt::format("{} {} {}\n", s.start, s.end, s.label);
  return out;
}

SegmentTier merge_tiers(std::span<const SegmentTier> tiers, std::span<const double> offsets) {
  if (tiers.size() != offsets.size()) throw Error(kModule, "BadTier", "one offset per tier required");
  SegmentTier out;
  for (std::size_t i = 0; i < tiers.size(); ++i) {
    for (auto s : tiers[i].segments) {
      s.start += offsets[i];
      s.end += offsets[i];
      out.segments.push_back(std::move(s));
    }
  }
  out.validate();
  return out;
}

std::vector<Vec3> tail_velocities(const AnimationClip& clip, double t) {
  const std::size_t nb = clip.armature.bones.size();
  if (clip.times.size() < 2) return std::vector<Vec3>(nb, Vec3::Zero());
  const double dt = 1.0 / clip.rate_hz;
  const double lo = clip.times.front();
  const double hi = clip.times.back();
  t = std::clamp(t, lo, hi);
  const bool has_prev = t - dt >= lo - kTimeEps;
  const bool has_next = t + dt <= hi + kTimeEps;
  std::vector<Vec3> a;
  std::vector<Vec3> b;
  double span = dt;
  if (has_prev && has_next) {
    a = clip.sample_tails(t - dt);
    b = clip.sample_tails(t + dt);
    span = 2.0 * dt;
  } else if (has_next) {
    a = clip.sample_tails(t);
    b = clip.sample_tails(t + dt);
  } else {
    a = clip.sample_tails(t - dt);
    b = clip.sample_tails(t);
  }
  std::vector<Vec3> v(nb);
  for (std::size_t k = 0; k < nb; ++k) v[k] = (b[k] - a[k]) / span;
  return v;
}

std::vector<AnimationUnit> build_unit_db(const AnimationClip& clip, const SegmentTier& tier) {
  if (tier.segments.empty()) throw Error(kModule, "EmptyTier", "segmentation has no segments");
  if (clip.key_count() == 0) throw Error(kModule, "EmptyClip", "animation has no keys");
  tier.check_within(clip.duration);
  std::vector<AnimationUnit> db;
  db.reserve(tier.segments.size());
  for (std::size_t i = 0; i < tier.segments.size(); ++i) {
    const auto& s = tier.segments[i];
    AnimationUnit u;
    u.label = s.label;
    u.start = s.start;
    u.end = s.end;
    u.first_positions = clip.sample_tails(s.start);
    u.last_positions = clip.sample_tails(s.end);
    u.first_velocities = tail_velocities(clip, s.start);
    u.last_velocities = tail_velocities(clip, s.end);
    u.source_index = i;
    db.push_back(std::move(u));
  }
  return db;
}

}  // namespace emarig
