#include "emarig/trajectories.hpp"

#include <limits>

#include <fmt/format.h>

#include "emarig/error.hpp"
#include "emarig/ik_solver.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "export";

CoilSample point_sample(const Vec3& p) {
  CoilSample s;
  s.position = p;
  return s;
}

CoilSample missing_sample() {
  CoilSample s;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.position = Vec3(nan, nan, nan);
  s.rms = -1.0f;
  s.valid = false;
  return s;
}

std::vector<std::string> seed_channels(const CompiledRig& rig) {
  std::vector<std::string> out;
  for (const auto& b : rig.armature.bones) {
    if (rig.meta.seed_vertices.count(b.name)) out.push_back(b.name);
  }
  for (const auto& [coil, v] : rig.meta.seed_vertices) {
    if (std::find(out.begin(), out.end(), coil) == out.end()) out.push_back(coil);
  }
  return out;
}

}  // namespace

TrajectoryKind parse_trajectory_kind(std::string_view name) {
  if (name == "coils") return TrajectoryKind::Coils;
  if (name == "ik_targets") return TrajectoryKind::IkTargets;
  if (name == "seed_vertices") return TrajectoryKind::SeedVertices;
  throw Error(kModule, "UnknownKind",
              fmt::format("unknown trajectory kind '{}' (coils, ik_targets, seed_vertices)", name));
}

std::string_view trajectory_kind_name(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Coils: return "coils";
    case TrajectoryKind::IkTargets: return "ik_targets";
    case TrajectoryKind::SeedVertices: return "seed_vertices";
  }
  return "coils";
}

EmaSweep ik_target_trajectories(const EmaSweep& prepared, const CompiledRig& rig, TrajectorySpace space) {
  EmaSweep out;
  out.rate_hz = prepared.rate_hz;
  out.sweep_id = prepared.sweep_id;
  for (const auto& b : rig.armature.bones) out.channels.push_back(b.name);
  out.samples.reserve(prepared.frame_count() * out.channels.size());
  for (std::size_t f = 0; f < prepared.frame_count(); ++f) {
    const auto targets = frame_targets(prepared, f, rig);
    for (const auto& t : targets) {
      if (!t) {
        out.samples.push_back(missing_sample());
      } else {
        out.samples.push_back(
            point_sample(space == TrajectorySpace::Mesh ? *t : rig.meta.registration.apply_inverse(*t)));
      }
    }
  }
  return out;
}

EmaSweep seed_vertex_trajectories(const CompiledRig& rig, const AnimationClip& clip, TrajectorySpace space) {
  EmaSweep out;
  out.rate_hz = clip.rate_hz;
  out.channels = seed_channels(rig);
  if (rig.mesh.weights.empty()) throw Error(kModule, "InconsistentRig", "mesh has no skin weights");
  std::vector<int> vertices;
  for (const auto& c : out.channels) vertices.push_back(rig.meta.seed_vertices.at(c));
  std::vector<Mat4> matrices(rig.armature.bones.size());
  out.samples.reserve(clip.key_count() * vertices.size());
  for (std::size_t k = 0; k < clip.key_count(); ++k) {
    const PoseFrame pose = clip.pose(k);
    for (std::size_t b = 0; b < matrices.size(); ++b) matrices[b] = bone_matrix(rig.armature.bones[b], pose.bones[b]);
    const RigidTransform jaw = clip.frames[k].jaw.transform();
    for (int v : vertices) {
      const Vec3 p = skin_vertex(rig.mesh, matrices, v, jaw);
      out.samples.push_back(point_sample(space == TrajectorySpace::Mesh ? p : rig.meta.registration.apply_inverse(p)));
    }
  }
  return out;
}

TrajectoryDump dump_trajectories(TrajectoryKind kind, const DumpInputs& in) {
  TrajectoryDump d;
  auto need = [&](const void* p, const char* what) {
    if (!p) {
      throw Error(kModule, "MissingInput",
                  fmt::format("dump of {} needs {}", trajectory_kind_name(kind), what));
    }
  };
  switch (kind) {
    case TrajectoryKind::Coils:
      need(in.coils, "a sweep");
      d.sweep = *in.coils;
      break;
    case TrajectoryKind::IkTargets:
      need(in.coils, "a sweep");
      need(in.rig, "a compiled rig");
      d.sweep = ik_target_trajectories(*in.coils, *in.rig, in.space);
      break;
    case TrajectoryKind::SeedVertices:
      need(in.rig, "a compiled rig");
      need(in.clip, "an animation clip");
      d.sweep = seed_vertex_trajectories(*in.rig, *in.clip, in.space);
      break;
  }
  d.layout.channels = d.sweep.channels;
  d.layout.rate_hz = d.sweep.rate_hz;
  d.layout.units = in.units;
  d.bytes = write_pos(d.sweep, d.layout);
  return d;
}

}  // namespace emarig
