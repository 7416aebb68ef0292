#include "emarig/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "emarig/error.hpp"
#include "emarig/kv_config.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "rig";

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> words(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos > start) out.push_back(line.substr(start, pos - start));
  }
  return out;
}

void add_quad(SkinnedMesh& m, MeshGroup g, int a, int b, int c, int d) {
  m.triangles.push_back({a, b, c});
  m.triangles.push_back({a, c, d});
  m.triangle_groups.push_back(g);
  m.triangle_groups.push_back(g);
}

void add_arch(SkinnedMesh& m, MeshGroup g, double ax, double ay, double thickness, double z0,
              double z1, int segments) {
  const int base = static_cast<int>(m.vertices.size());
  const double span = 0.75 * std::numbers::pi;
  for (int k = 0; k <= segments; ++k) {
    const double psi = -span + 2.0 * span * k / segments;
    const double c = std::cos(psi);
    const double s = std::sin(psi);
    const Vec3 inner((ax - thickness / 2) * c, (ay - thickness / 2) * s, 0.0);
    const Vec3 outer((ax + thickness / 2) * c, (ay + thickness / 2) * s, 0.0);
    m.vertices.push_back(inner + Vec3(0, 0, z0));
    m.vertices.push_back(outer + Vec3(0, 0, z0));
    m.vertices.push_back(outer + Vec3(0, 0, z1));
    m.vertices.push_back(inner + Vec3(0, 0, z1));
    for (int i = 0; i < 4; ++i) m.vertex_groups.push_back(g);
  }
  auto ib = [&](int k) { return base + 4 * k; };
  auto ob = [&](int k) { return base + 4 * k + 1; };
  auto ot = [&](int k) { return base + 4 * k + 2; };
  auto it = [&](int k) { return base + 4 * k + 3; };
  for (int k = 0; k < segments; ++k) {
    add_quad(m, g, ob(k), ob(k + 1), ot(k + 1), ot(k));
    add_quad(m, g, ib(k + 1), ib(k), it(k), it(k + 1));
    add_quad(m, g, it(k), ot(k), ot(k + 1), it(k + 1));
    add_quad(m, g, ib(k), ib(k + 1), ob(k + 1), ob(k));
  }
  add_quad(m, g, ib(0), ob(0), ot(0), it(0));
  add_quad(m, g, it(segments), ot(segments), ob(segments), ib(segments));
}

}  // namespace

std::string_view group_name(MeshGroup g) {
  switch (g) {
    case MeshGroup::Tongue: return "tongue";
    case MeshGroup::Mandible: return "mandible";
    case MeshGroup::Maxilla: return "maxilla";
    case MeshGroup::None: break;
  }
  return "ungrouped";
}

std::vector<int> SkinnedMesh::group_vertices(MeshGroup g) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < vertex_groups.size(); ++i) {
    if (vertex_groups[i] == g) out.push_back(static_cast<int>(i));
  }
  return out;
}

bool SkinnedMesh::has_group(MeshGroup g) const {
  return std::find(triangle_groups.begin(), triangle_groups.end(), g) != triangle_groups.end();
}

void SkinnedMesh::assign_vertex_groups() {
  vertex_groups.assign(vertices.size(), MeshGroup::None);
  auto rank = [](MeshGroup g) {
    switch (g) {
      case MeshGroup::Tongue: return 3;
      case MeshGroup::Mandible: return 2;
      case MeshGroup::Maxilla: return 1;
      case MeshGroup::None: break;
    }
    return 0;
  };
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int v : triangles[t]) {
      if (rank(triangle_groups[t]) > rank(vertex_groups[v])) vertex_groups[v] = triangle_groups[t];
    }
  }
}

GroupMapping GroupMapping::defaults() {
  GroupMapping m;
  m.names = {{"tongue", MeshGroup::Tongue},     {"mandible", MeshGroup::Mandible},
             {"lower_teeth", MeshGroup::Mandible}, {"jaw", MeshGroup::Mandible},
             {"maxilla", MeshGroup::Maxilla},   {"upper_teeth", MeshGroup::Maxilla}};
  return m;
}

MeshGroup GroupMapping::lookup(std::string_view name) const {
  const auto it = names.find(lower(name));
  return it == names.end() ? MeshGroup::None : it->second;
}

SkinnedMesh load_mesh(std::string_view text, const GroupMapping& mapping) {
  SkinnedMesh mesh;
  MeshGroup current = MeshGroup::None;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto w = words(line);
    if (w.empty()) continue;

    if (w[0] == "v") {
      if (w.size() < 4) {
        throw Error(kModule, "ParseError", fmt::format("obj line {}: vertex needs 3 coordinates", line_no));
      }
      Vec3 p;
      for (int i = 0; i < 3; ++i) {
        try {
          p(i) = parse_double(w[i + 1], kModule, fmt::format("obj line {}", line_no));
        } catch (const Error& e) {
          throw Error(kModule, "ParseError", e.message());
        }
      }
      mesh.vertices.push_back(p);
    } else if (w[0] == "f") {
      if (w.size() < 4) {
        throw Error(kModule, "ParseError", fmt::format("obj line {}: face needs 3 vertices", line_no));
      }
      std::vector<int> poly;
      for (std::size_t i = 1; i < w.size(); ++i) {
        const auto token = w[i].substr(0, w[i].find('/'));
        long idx = 0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), idx);
        const auto n = static_cast<long>(mesh.vertices.size());
        if (ec != std::errc() || ptr != token.data() + token.size() || idx == 0) {
          throw Error(kModule, "ParseError", fmt::format("obj line {}: bad face index '{}'", line_no, w[i]));
        }
        const long resolved = idx > 0 ? idx - 1 : n + idx;
        if (resolved < 0 || resolved >= n) {
          throw Error(kModule, "ParseError",
                      fmt::format("obj line {}: face index {} out of range", line_no, idx));
        }
        poly.push_back(static_cast<int>(resolved));
      }
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
        mesh.triangle_groups.push_back(current);
      }
    } else if (w[0] == "o" || w[0] == "g") {
      current = w.size() > 1 ? mapping.lookup(w[1]) : MeshGroup::None;
    }
  }
  mesh.assign_vertex_groups();
  if (!mesh.has_group(MeshGroup::Tongue)) {
    throw Error(kModule, "MissingGroup", "mesh has no faces in a group mapped to the tongue");
  }
  return mesh;
}

std::string write_obj(const SkinnedMesh& mesh) {
  std::string out;
  for (const auto& v : mesh.vertices) out += fmt::format("v {} {} {}\n", v.x(), v.y(), v.z());
  bool first = true;
  MeshGroup current = MeshGroup::None;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const MeshGroup g = mesh.triangle_groups[t];
    if (first || g != current) {
      out += fmt::format("o {}\n", group_name(g));
      current = g;
      first = false;
    }
    const auto& tri = mesh.triangles[t];
    out += fmt::format("f {} {} {}\n", tri[0] + 1, tri[1] + 1, tri[2] + 1);
  }
  return out;
}

void DefaultMeshParams::validate() const {
  if (!(length > 0 && width > 0 && height > 0)) {
    throw Error(kModule, "BadMeshParams", "mesh extents must be positive");
  }
  if (rings < 1 || segments < 3 || arch_segments < 1) {
    throw Error(kModule, "BadMeshParams", "mesh resolution too small");
  }
}

std::size_t default_mesh_vertex_count(const DefaultMeshParams& p) {
  return static_cast<std::size_t>(p.rings) * p.segments + 2 + 8 * (p.arch_segments + 1);
}

std::size_t default_mesh_triangle_count(const DefaultMeshParams& p) {
  return 2 * static_cast<std::size_t>(p.rings) * p.segments + 2 * (8 * p.arch_segments + 4);
}

SkinnedMesh generate_default_mesh(const DefaultMeshParams& p) {
  p.validate();
  SkinnedMesh m;
  const double a = p.length / 2;
  const double b = p.width / 2;
  const double c = p.height;
  const int rings = p.rings;
  const int segs = p.segments;

  for (int i = 0; i < rings; ++i) {
    const double lat = 0.5 * std::numbers::pi * i / rings;
    for (int j = 0; j < segs; ++j) {
      const double lon = 2.0 * std::numbers::pi * j / segs;
      m.vertices.emplace_back(a * std::cos(lat) * std::cos(lon), b * std::cos(lat) * std::sin(lon),
                              c * std::sin(lat));
    }
  }
  const int apex = rings * segs;
  const int floor_centre = apex + 1;
  m.vertices.emplace_back(0.0, 0.0, c);
  m.vertices.emplace_back(0.0, 0.0, 0.0);
  m.vertex_groups.assign(m.vertices.size(), MeshGroup::Tongue);

  auto at = [segs](int i, int j) { return i * segs + (j % segs); };
  const auto tongue = MeshGroup::Tongue;
  for (int i = 0; i + 1 < rings; ++i) {
    for (int j = 0; j < segs; ++j) add_quad(m, tongue, at(i, j), at(i, j + 1), at(i + 1, j + 1), at(i + 1, j));
  }
  for (int j = 0; j < segs; ++j) {
    m.triangles.push_back({at(rings - 1, j), at(rings - 1, j + 1), apex});
    m.triangle_groups.push_back(tongue);
  }
  for (int j = 0; j < segs; ++j) {
    m.triangles.push_back({floor_centre, at(0, j + 1), at(0, j)});
    m.triangle_groups.push_back(tongue);
  }

  add_arch(m, MeshGroup::Mandible, a + 0.6, b + 0.5, 0.6, -0.6, 0.5, p.arch_segments);
  add_arch(m, MeshGroup::Maxilla, a + 0.7, b + 0.6, 0.6, 1.0, 2.0, p.arch_segments);
  return m;
}

std::map<std::string, Vec3> default_seed_points(const SkinnedMesh& mesh, const DefaultMeshParams& p) {
  // (fraction of the half-length along x, fraction of the half-width along y)
  static const std::array<std::pair<const char*, std::array<double, 2>>, 7> kSites{{
      {"TTipC", {0.85, 0.0}},
      {"TBladeL", {0.45, 0.5}},
      {"TBladeR", {0.45, -0.5}},
      {"TMidC", {0.05, 0.0}},
      {"TMidL", {0.0, 0.55}},
      {"TMidR", {0.0, -0.55}},
      {"TBackC", {-0.5, 0.0}},
  }};
  const double a = p.length / 2;
  const double b = p.width / 2;
  std::map<std::string, Vec3> out;
  for (const auto& [name, uv] : kSites) {
    const double z = p.height * std::sqrt(std::max(0.0, 1.0 - uv[0] * uv[0] - uv[1] * uv[1]));
    const Vec3 nominal(uv[0] * a, uv[1] * b, z);
    out[name] = mesh.vertices[nearest_vertex(mesh, nominal, MeshGroup::Tongue)];
  }
  return out;
}

double enclosed_volume(const SkinnedMesh& mesh, MeshGroup g) {
  double v = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (mesh.triangle_groups[t] != g) continue;
    const auto& tri = mesh.triangles[t];
    v += mesh.vertices[tri[0]].dot(mesh.vertices[tri[1]].cross(mesh.vertices[tri[2]]));
  }
  return v / 6.0;
}

int nearest_vertex(const SkinnedMesh& mesh, const Vec3& p, MeshGroup g) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (mesh.vertex_groups[i] != g) continue;
    const double d = (mesh.vertices[i] - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) {
    throw Error(kModule, "MissingGroup", fmt::format("mesh has no {} vertices", group_name(g)));
  }
  return best;
}

}  // namespace emarig
