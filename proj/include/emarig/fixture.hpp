#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emarig/anim_db.hpp"
#include "emarig/ema_io.hpp"
#include "emarig/geometry.hpp"
#include "emarig/mesh.hpp"

namespace emarig {

// Parametric tongue-like EMA recordings with scripted head and jaw motion.
// Same parameters, same bytes.
struct FixtureParams {
  int sweeps = 2;
  double seconds_per_sweep = 2.0;
  double rate_hz = 200.0;
  std::uint32_t seed = 20240601;
  double deformation_cm = 0.25;  // largest label displacement of a tongue coil
  double noise_cm = 0.002;
  double head_rotation_deg = 5.0;
  double head_translation_cm = 0.5;
  double jaw_opening_deg = 8.0;
  bool head_motion = true;
  bool dropouts = true;   // a short NaN run on one tongue coil of the first sweep
  bool extra_coil = true;  // an ignored upper-lip channel (12 channels total)
  DefaultMeshParams mesh;
};

struct Fixture {
  PosLayout layout;
  std::string rig_graph;  // DOT text
  std::vector<std::string> reference;
  std::string jaw;
  std::vector<std::string> tongue;
  std::vector<EmaSweep> sweeps;       // as recorded, with head motion
  std::vector<EmaSweep> head_fixed;   // ground truth without head motion, no dropouts
  std::vector<std::vector<RigidTransform>> head_motion;  // per sweep, per frame
  std::vector<SegmentTier> tiers;     // per sweep, sweep-local times
  RigidTransform ema_from_mesh;       // where the default mesh sits in EMA space
  std::vector<std::pair<std::size_t, std::size_t>> dropout_frames;  // (sweep, frame), tongue coil TMidL
};

inline constexpr const char* kFixtureDropoutCoil = "TMidL";

Fixture make_fixture(const FixtureParams& params = {});

// The seven-coil armature graph with the extra TRoot node.
std::string default_rig_graph();

// Writes sweepN.pos, sweepN.seg, sweepN.wav, layout.cfg, tongue.dot and a
// pipeline.cfg that compiles them. Returns the config path.
std::filesystem::path write_fixture(const Fixture& fixture, const std::filesystem::path& dir,
                                    const FixtureParams& params = {});

}  // namespace emarig
