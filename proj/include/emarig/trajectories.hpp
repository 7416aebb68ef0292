#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "emarig/anim_db.hpp"
#include "emarig/ema_io.hpp"
#include "emarig/rig.hpp"

namespace emarig {

enum class TrajectoryKind { Coils, IkTargets, SeedVertices };
TrajectoryKind parse_trajectory_kind(std::string_view name);  // UnknownKind
std::string_view trajectory_kind_name(TrajectoryKind kind);

// EMA space is the head-normalized coil frame; mesh space is after
// registration.
enum class TrajectorySpace { Ema, Mesh };

// IK targets of every frame (bone coils only), invalid where the coil was.
EmaSweep ik_target_trajectories(const EmaSweep& prepared, const CompiledRig& rig,
                                TrajectorySpace space = TrajectorySpace::Ema);

// Skinned positions of the seed vertices at every key of the clip. Channels
// follow bone order.
EmaSweep seed_vertex_trajectories(const CompiledRig& rig, const AnimationClip& clip,
                                  TrajectorySpace space = TrajectorySpace::Ema);

struct DumpInputs {
  const EmaSweep* coils = nullptr;     // for Coils and IkTargets
  const CompiledRig* rig = nullptr;    // for IkTargets and SeedVertices
  const AnimationClip* clip = nullptr;  // for SeedVertices
  TrajectorySpace space = TrajectorySpace::Ema;
  PosUnits units = PosUnits::MmDeg;
};

struct TrajectoryDump {
  EmaSweep sweep;
  PosLayout layout;
  std::vector<std::uint8_t> bytes;
};

// Re-encodes the requested trajectories through write_pos. Angles, rms and
// the extra field are zero for synthesized channels.
TrajectoryDump dump_trajectories(TrajectoryKind kind, const DumpInputs& in);

}  // namespace emarig
