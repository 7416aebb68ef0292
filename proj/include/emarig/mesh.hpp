#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "emarig/geometry.hpp"

namespace emarig {

enum class MeshGroup : std::uint8_t { None, Tongue, Mandible, Maxilla };

std::string_view group_name(MeshGroup g);

struct Influence {
  int bone = 0;
  double weight = 0.0;
};

struct SkinnedMesh {
  std::vector<Vec3> vertices;                 // cm
  std::vector<std::array<int, 3>> triangles;
  std::vector<MeshGroup> triangle_groups;     // one per triangle
  std::vector<MeshGroup> vertex_groups;       // one per vertex
  std::vector<std::vector<Influence>> weights;  // empty, or one list per vertex

  std::vector<int> group_vertices(MeshGroup g) const;
  bool has_group(MeshGroup g) const;
  // Derives vertex groups from triangle groups; a vertex shared by several
  // groups goes to the first of tongue, mandible, maxilla.
  void assign_vertex_groups();
};

// Maps OBJ object/group names (case-insensitive) onto mesh groups.
struct GroupMapping {
  std::map<std::string, MeshGroup> names;

  static GroupMapping defaults();
  MeshGroup lookup(std::string_view name) const;
};

// Wavefront OBJ subset: `v`, `f` (fan-triangulated, `i/j/k` and negative
// indices accepted), `o`/`g`. Other statements are ignored.
SkinnedMesh load_mesh(std::string_view obj_text, const GroupMapping& mapping = GroupMapping::defaults());
std::string write_obj(const SkinnedMesh& mesh);

struct DefaultMeshParams {
  double length = 5.0;  // tongue extent along x (anterior), cm
  double width = 4.4;   // along y (left)
  double height = 1.6;  // dome height along z
  int rings = 16;       // latitude rings of the dome, excluding the apex
  int segments = 64;    // longitude segments
  int arch_segments = 24;

  void validate() const;
};

// Half-ellipsoid tongue (closed by a flat floor) plus two dental-arch prisms
// for mandible and maxilla. Deterministic.
SkinnedMesh generate_default_mesh(const DefaultMeshParams& params = {});

// rings * segments + 2 tongue vertices, 4 * (arch_segments + 1) per arch.
std::size_t default_mesh_vertex_count(const DefaultMeshParams& params);
std::size_t default_mesh_triangle_count(const DefaultMeshParams& params);

// Nominal tongue coil sites for the seven-coil layout, snapped to the nearest
// tongue vertex of the generated mesh.
std::map<std::string, Vec3> default_seed_points(const SkinnedMesh& mesh,
                                                const DefaultMeshParams& params = {});

// Divergence-theorem volume of the triangles in a group.
double enclosed_volume(const SkinnedMesh& mesh, MeshGroup g);

int nearest_vertex(const SkinnedMesh& mesh, const Vec3& p, MeshGroup g);

}  // namespace emarig
