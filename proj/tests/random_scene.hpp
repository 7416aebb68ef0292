#pragma once

#include <map>
#include <string>

#include "emarig/anim_db.hpp"
#include "emarig/mesh.hpp"
#include "emarig/rig.hpp"
#include "emarig/rig_graph.hpp"
#include "support.hpp"

namespace emarig::test {

// Random tree with named bones, a small tongue mesh weighted to it, and a
// random dense clip.
struct RandomScene {
  CompiledRig rig;
  AnimationClip clip;
};

inline RandomScene random_scene(int max_keys) {
  const int nb = uniform_int(1, 8);
  std::string dot = "digraph{";
  std::map<std::string, Vec3> tails;
  for (int b = 0; b < nb; ++b) {
    const std::string parent = b == 0 ? "Root" : "B" + std::to_string(uniform_int(0, b - 1));
    dot += parent + "->B" + std::to_string(b) + ";";
  }
  dot += "}";
  const auto graph = parse_rig_graph(dot);
  for (std::size_t i = 1; i < graph.size(); ++i) tails[graph.nodes[i]] = random_vec(3.0);

  RandomScene s;
  DefaultMeshParams mp;
  mp.rings = uniform_int(3, 8);
  mp.segments = uniform_int(6, 20);
  mp.arch_segments = uniform_int(2, 6);
  s.rig.mesh = generate_default_mesh(mp);
  // Retry until no bone collapses onto its head.
  while (true) {
    try {
      s.rig.armature = build_armature(graph, tails, random_vec(1.0), Vec3::Zero());
      break;
    } catch (const Error&) {
      for (auto& [n, t] : tails) t = random_vec(3.0);
    }
  }
  RigConfig cfg;
  cfg.influence_cap = uniform_int(1, 4);
  compute_weights(s.rig.mesh, s.rig.armature, cfg);
  s.rig.meta.registration.scale = uniform(0.5, 2.0);
  s.rig.meta.registration.rotation = random_rotation();
  s.rig.meta.registration.translation = random_vec(4.0);
  s.rig.meta.registration_rms = uniform(0, 1e-3);
  for (const auto& b : s.rig.armature.bones) {
    s.rig.meta.seed_vertices[b.name] = uniform_int(0, static_cast<int>(s.rig.mesh.vertices.size()) - 1);
    s.rig.seed_offsets[b.name] = uniform(0, 0.1);
  }
  if (uniform_int(0, 1)) {
    s.rig.meta.jaw_channel = "Jaw";
    s.rig.jaw_rest = JawRest{random_vec(2.0), random_vec(1.0).normalized()};
  }

  s.clip.rate_hz = uniform_int(0, 1) ? 200.0 : 250.0;
  s.clip.armature = s.rig.armature;
  const int nk = uniform_int(0, max_keys);
  for (int k = 0; k < nk; ++k) {
    s.clip.times.push_back(k / s.clip.rate_hz);
    ClipFrame f;
    for (int b = 0; b < nb; ++b) {
      f.bones.push_back(BoneKey{Quat(random_rotation()), random_vec(3.0), uniform(0.5, 2.0)});
    }
    f.jaw = JawKey::from(random_rigid(1.0));
    s.clip.frames.push_back(f);
  }
  s.clip.duration = nk / s.clip.rate_hz;
  return s;
}

}  // namespace emarig::test
