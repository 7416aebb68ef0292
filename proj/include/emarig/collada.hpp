#pragma once

#include <string>
#include <string_view>

#include "emarig/anim_db.hpp"
#include "emarig/rig.hpp"

namespace emarig {

// COLLADA 1.4.1 subset: one triangle geometry, one skin controller, a joint
// hierarchy and a baked float4x4 matrix animation with LINEAR interpolation.
// Rig metadata the format has no element for is kept under
// <extra><technique profile="emarig">. See docs/collada_subset.md.
struct ColladaScene {
  CompiledRig rig;
  AnimationClip clip;
};

inline constexpr std::string_view kColladaProfile = "emarig";

// `clip.armature` must match `rig.armature` (same bone count).
std::string write_collada(const CompiledRig& rig, const AnimationClip& clip);
std::string write_collada(const SkinnedMesh& mesh, const Armature& armature, const AnimationClip& clip);

// Reads documents produced by write_collada. Throws ParseError on malformed
// XML or missing elements and UnsupportedFeature on anything outside the
// subset.
ColladaScene read_collada(std::string_view document);

// World matrix of a bone joint node: bone_matrix * translation(rest head).
Mat4 bone_world_matrix(const Bone& bone, const BonePose& pose);
// Inverse of bone_world_matrix for a rest axis; stretch s = |A a0|.
BonePose decompose_bone_world(const Bone& bone, const Mat4& world);

}  // namespace emarig
