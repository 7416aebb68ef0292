#include "emarig/rig.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "emarig/error.hpp"

namespace emarig {

namespace {
constexpr const char* kModule = "rig";
}

std::optional<int> Armature::find(std::string_view name) const {
  for (std::size_t i = 0; i < bones.size(); ++i) {
    if (bones[i].name == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::vector<std::vector<int>> Armature::children() const {
  std::vector<std::vector<int>> out(bones.size());
  for (std::size_t i = 0; i < bones.size(); ++i) {
    if (bones[i].parent >= 0) out[bones[i].parent].push_back(static_cast<int>(i));
  }
  return out;
}

void RigConfig::validate() const {
  if (influence_cap < 1) throw Error(kModule, "BadRigConfig", "influence_cap must be >= 1");
  if (!(weight_exponent > 0.0)) throw Error(kModule, "BadRigConfig", "weight_exponent must be > 0");
  if (!(distance_floor > 0.0)) throw Error(kModule, "BadRigConfig", "distance_floor must be > 0");
}

RigConfig parse_rig_config(const KeyValueFile& kv) {
  RigConfig c;
  for (const auto& key : kv.keys()) {
    if (key.rfind("seed.", 0) == 0) c.seeds[key.substr(5)] = *kv.get_vec3(key);
  }
  c.root_point = kv.get_vec3("root_point");
  if (auto off = kv.get_vec3("root_offset")) c.root_offset = *off;
  c.influence_cap = kv.get_int("influence_cap", c.influence_cap);
  c.weight_exponent = kv.get_double("weight_exponent", c.weight_exponent);
  c.distance_floor = kv.get_double("distance_floor", c.distance_floor);
  c.validate();
  return c;
}

Similarity similarity_align(std::span<const Vec3> moving, std::span<const Vec3> fixed) {
  const auto fit = detail::procrustes(moving, fixed, true, kModule);
  return Similarity{fit.scale, fit.rotation, fit.translation};
}

Armature build_armature(const RigGraph& graph, const std::map<std::string, Vec3>& tails,
                        const std::optional<Vec3>& root_point, const Vec3& root_offset) {
  Armature arm;
  arm.root_name = graph.nodes.front();
  for (std::size_t i = 1; i < graph.size(); ++i) {
    if (!tails.count(graph.nodes[i])) {
      throw Error(kModule, "UnknownCoilNode",
                  fmt::format("graph node '{}' has no matching tongue coil", graph.nodes[i]));
    }
  }
  if (graph.size() < 2) throw Error(kModule, "DegenerateBone", "rig graph has no edges");
  if (root_point) {
    arm.root_point = *root_point;
  } else {
    arm.root_point = tails.at(graph.nodes[graph.children[0].front()]) + root_offset;
  }
  for (std::size_t i = 1; i < graph.size(); ++i) {
    Bone b;
    b.name = graph.nodes[i];
    const int pnode = graph.parent[i];
    b.parent = pnode == 0 ? -1 : pnode - 1;
    b.head = pnode == 0 ? arm.root_point : tails.at(graph.nodes[pnode]);
    b.tail = tails.at(b.name);
    b.rest_length = (b.tail - b.head).norm();
    if (!(b.rest_length > 1e-9)) {
      throw Error(kModule, "DegenerateBone",
                  fmt::format("bone '{}' has zero rest length", b.name));
    }
    arm.bones.push_back(std::move(b));
  }
  return arm;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

void compute_weights(SkinnedMesh& mesh, const Armature& armature, const RigConfig& config) {
  config.validate();
  mesh.weights.assign(mesh.vertices.size(), {});
  const std::size_t nb = armature.bones.size();
  const std::size_t cap = std::min<std::size_t>(config.influence_cap, nb);
  std::vector<std::pair<double, int>> dist(nb);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (mesh.vertex_groups[v] != MeshGroup::Tongue) continue;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& bone = armature.bones[b];
      dist[b] = {point_segment_distance(mesh.vertices[v], bone.head, bone.tail), static_cast<int>(b)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(cap), dist.end());
    auto& out = mesh.weights[v];
    double total = 0.0;
    for (std::size_t k = 0; k < cap; ++k) {
      const double d = std::max(dist[k].first, config.distance_floor);
      const double w = std::pow(d, -config.weight_exponent);
      out.push_back({dist[k].second, w});
      total += w;
    }
    for (auto& inf : out) inf.weight /= total;
  }
}

CompiledRig compile_rig(const RigGraph& graph, const EmaSweep& sweep, const CoilRoles& roles,
                        SkinnedMesh mesh, const RigConfig& config) {
  config.validate();
  if (sweep.frame_count() == 0) throw Error(kModule, "EmptySweep", "rig needs at least one frame");
  for (std::size_t i = 1; i < graph.size(); ++i) {
    if (std::find(roles.tongue.begin(), roles.tongue.end(), graph.nodes[i]) == roles.tongue.end()) {
      throw Error(kModule, "UnknownCoilNode",
                  fmt::format("graph node '{}' is not a tongue coil", graph.nodes[i]));
    }
  }

  std::map<std::string, Vec3> rest_ema;
  for (std::size_t i = 1; i < graph.size(); ++i) {
    const auto& s = sweep.at(0, sweep.channel_index(graph.nodes[i]));
    if (!s.valid) {
      throw Error(kModule, "InvalidRestFrame",
                  fmt::format("coil '{}' is invalid in the first frame", graph.nodes[i]));
    }
    rest_ema[graph.nodes[i]] = s.position;
  }

  CompiledRig rig;
  std::vector<Vec3> moving;
  std::vector<Vec3> fixed;
  for (const auto& [coil, pos] : rest_ema) {
    if (const auto it = config.seeds.find(coil); it != config.seeds.end()) {
      moving.push_back(pos);
      fixed.push_back(it->second);
    }
  }
  if (!moving.empty()) {
    if (moving.size() < 3) {
      throw Error(kModule, "InsufficientSeeds",
                  fmt::format("{} seed point(s) given, registration needs at least 3", moving.size()));
    }
    rig.meta.registration = similarity_align(moving, fixed);
    double sq = 0.0;
    for (std::size_t i = 0; i < moving.size(); ++i) {
      sq += (rig.meta.registration.apply(moving[i]) - fixed[i]).squaredNorm();
    }
    rig.meta.registration_rms = std::sqrt(sq / static_cast<double>(moving.size()));
  }
  const Similarity& reg = rig.meta.registration;

  std::map<std::string, Vec3> rest_mesh;
  for (const auto& [coil, pos] : rest_ema) rest_mesh[coil] = reg.apply(pos);

  rig.armature = build_armature(graph, rest_mesh, config.root_point, config.root_offset);
  compute_weights(mesh, rig.armature, config);

  for (const auto& [coil, pos] : rest_mesh) {
    const int v = nearest_vertex(mesh, pos, MeshGroup::Tongue);
    rig.meta.seed_vertices[coil] = v;
    rig.seed_offsets[coil] = (mesh.vertices[v] - pos).norm();
  }

  if (roles.jaw) {
    rig.meta.jaw_channel = roles.jaw;
    const auto& s = sweep.at(0, sweep.channel_index(*roles.jaw));
    if (!s.valid) throw Error(kModule, "InvalidRestFrame", "jaw coil is invalid in the first frame");
    rig.jaw_rest = JawRest{reg.apply(s.position), reg.rotate(orientation_vector(s.phi, s.theta))};
  }
  rig.mesh = std::move(mesh);
  return rig;
}

}  // namespace emarig
