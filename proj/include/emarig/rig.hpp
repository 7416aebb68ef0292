#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emarig/ema_io.hpp"
#include "emarig/geometry.hpp"
#include "emarig/kv_config.hpp"
#include "emarig/mesh.hpp"
#include "emarig/rig_graph.hpp"

namespace emarig {

// A bone spans from its head (the parent's tail, or the armature root point)
// to its tail, which is placed at the rest position of the coil it is named
// after.
struct Bone {
  std::string name;
  int parent = -1;  // index into Armature::bones, -1 when attached to the root point
  Vec3 head = Vec3::Zero();
  Vec3 tail = Vec3::Zero();
  double rest_length = 0.0;

  Vec3 axis() const { return (tail - head) / rest_length; }
};

struct Armature {
  std::string root_name;
  Vec3 root_point = Vec3::Zero();
  std::vector<Bone> bones;  // parents precede children

  std::optional<int> find(std::string_view name) const;
  std::vector<std::vector<int>> children() const;
};

struct RigConfig {
  std::map<std::string, Vec3> seeds;  // mesh-space seed per coil
  std::optional<Vec3> root_point;
  Vec3 root_offset{-1.0, 0.0, -1.0};
  int influence_cap = 4;
  double weight_exponent = 2.0;
  double distance_floor = 1e-3;

  void validate() const;
};

// Keys: `seed.<coil> = x y z`, `root_point`, `root_offset`, `influence_cap`,
// `weight_exponent`, `distance_floor`.
RigConfig parse_rig_config(const KeyValueFile& kv);

struct RigMetadata {
  Similarity registration;  // EMA (head-normalized) space -> mesh space
  double registration_rms = 0.0;
  std::map<std::string, int> seed_vertices;  // coil -> nearest tongue vertex at rest
  std::optional<std::string> jaw_channel;
};

struct JawRest {
  Vec3 position = Vec3::Zero();   // mesh space
  Vec3 direction = Vec3::UnitX();  // unit coil axis, mesh space
};

struct CompiledRig {
  Armature armature;
  SkinnedMesh mesh;  // with weights
  RigMetadata meta;
  std::optional<JawRest> jaw_rest;
  std::map<std::string, double> seed_offsets;  // |seed vertex - registered coil| at rest, cm
};

// Least-squares similarity (Umeyama), no reflection.
Similarity similarity_align(std::span<const Vec3> moving, std::span<const Vec3> fixed);

Armature build_armature(const RigGraph& graph, const std::map<std::string, Vec3>& tails,
                        const std::optional<Vec3>& root_point, const Vec3& root_offset);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

// Inverse-power distance weights to the nearest `influence_cap` bone segments,
// for tongue vertices only.
void compute_weights(SkinnedMesh& mesh, const Armature& armature, const RigConfig& config);

// Builds the rest armature from the first frame of `sweep` (head-normalized,
// dropouts filled), registers EMA space onto the mesh seeds and skins the
// tongue.
CompiledRig compile_rig(const RigGraph& graph, const EmaSweep& sweep, const CoilRoles& roles,
                        SkinnedMesh mesh, const RigConfig& config);

}  // namespace emarig
