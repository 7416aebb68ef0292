#include "emarig/collada.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

#include "emarig/error.hpp"
#include "emarig/ik_solver.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "export";
constexpr const char* kNamespace = "http://www.collada.org/2005/11/COLLADASchema";
constexpr const char* kJawJoint = "jaw";

using boost::property_tree::ptree;

std::string num(double v) {
  if (v == 0.0) return "0";
  return fmt::format("{:.9g}", v);
}

std::string join_nums(auto begin, auto end) {
  std::string out;
  for (auto it = begin; it != end; ++it) {
    if (it != begin) out += ' ';
    out += num(*it);
  }
  return out;
}

std::string vec_text(const Vec3& v) { return fmt::format("{} {} {}", num(v.x()), num(v.y()), num(v.z())); }

// Row-major, as COLLADA stores matrices.
void append_matrix(std::string& out, const Mat4& m) {
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!out.empty()) out += ' ';
      out += num(m(r, c));
    }
  }
}

std::string matrix_text(const Mat4& m) {
  std::string s;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!s.empty()) s += ' ';
      s += num(m(r, c));
    }
  }
  return s;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

Mat4 translation(const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 3) = t;
  return m;
}

[[noreturn]] void inconsistent(const std::string& what) { throw Error(kModule, "InconsistentRig", what); }
[[noreturn]] void parse_error(const std::string& what) { throw Error(kModule, "ParseError", what); }
[[noreturn]] void unsupported(const std::string& what) { throw Error(kModule, "UnsupportedFeature", what); }

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
    inconsistent(fmt::format("joint name '{}' cannot be stored in a Name_array", name));
  }
}

void check_consistency(const CompiledRig& rig, const AnimationClip& clip) {
  const auto& mesh = rig.mesh;
  const auto& arm = rig.armature;
  const int nv = static_cast<int>(mesh.vertices.size());
  const int nb = static_cast<int>(arm.bones.size());
  if (mesh.triangle_groups.size() != mesh.triangles.size()) inconsistent("one group per triangle required");
  if (mesh.vertex_groups.size() != mesh.vertices.size()) inconsistent("one group per vertex required");
  for (const auto& t : mesh.triangles) {
    for (int v : t) {
      if (v < 0 || v >= nv) inconsistent(fmt::format("triangle references vertex {} of {}", v, nv));
    }
  }
  if (!mesh.weights.empty() && mesh.weights.size() != mesh.vertices.size()) {
    inconsistent("weight lists do not match the vertex count");
  }
  for (std::size_t v = 0; v < mesh.weights.size(); ++v) {
    for (const auto& inf : mesh.weights[v]) {
      if (inf.bone < 0 || inf.bone >= nb) {
        inconsistent(fmt::format("vertex {} is weighted to bone {} but the armature has {}", v, inf.bone, nb));
      }
    }
  }
  check_name(arm.root_name);
  std::set<std::string> names{arm.root_name, kJawJoint};
  for (int b = 0; b < nb; ++b) {
    const auto& bone = arm.bones[b];
    check_name(bone.name);
    if (!names.insert(bone.name).second) inconsistent(fmt::format("duplicate joint name '{}'", bone.name));
    if (bone.parent >= b) inconsistent(fmt::format("bone '{}' precedes its parent", bone.name));
    if (!(bone.rest_length > 0.0)) inconsistent(fmt::format("bone '{}' has zero length", bone.name));
  }
  if (clip.armature.bones.size() != arm.bones.size()) inconsistent("clip armature differs from the rig");
  for (const auto& f : clip.frames) {
    if (f.bones.size() != arm.bones.size()) inconsistent("clip key has the wrong bone count");
  }
  if (clip.frames.size() != clip.times.size()) inconsistent("clip key/time count mismatch");
}

struct Writer {
  std::string out;
  int depth = 0;

  void line(std::string_view s) {
    out.append(static_cast<std::size_t>(depth) * 2, ' ');
    out += s;
    out += '\n';
  }
  void open(std::string_view s) {
    line(s);
    ++depth;
  }
  void close(std::string_view tag) {
    --depth;
    line(fmt::format("</{}>", tag));
  }
};

void write_float_source(Writer& w, const std::string& id, const std::string& values, std::size_t count,
                        std::size_t stride, const std::vector<std::pair<std::string, std::string>>& params) {
  w.open(fmt::format("<source id=\"{}\">", id));
  w.line(fmt::format("<float_array id=\"{}-array\" count=\"{}\">{}</float_array>", id, count * stride, values));
  w.open("<technique_common>");
  w.open(fmt::format("<accessor source=\"#{}-array\" count=\"{}\" stride=\"{}\">", id, count, stride));
  for (const auto& [name, type] : params) {
    w.line(name.empty() ? fmt::format("<param type=\"{}\"/>", type)
                        : fmt::format("<param name=\"{}\" type=\"{}\"/>", name, type));
  }
  w.close("accessor");
  w.close("technique_common");
  w.close("source");
}

void write_name_source(Writer& w, const std::string& id, const std::vector<std::string>& names,
                       const std::string& param) {
  std::string joined;
  for (const auto& n : names) {
    if (!joined.empty()) joined += ' ';
    joined += escape(n);
  }
  w.open(fmt::format("<source id=\"{}\">", id));
  w.line(fmt::format("<Name_array id=\"{}-array\" count=\"{}\">{}</Name_array>", id, names.size(), joined));
  w.open("<technique_common>");
  w.open(fmt::format("<accessor source=\"#{}-array\" count=\"{}\" stride=\"1\">", id, names.size()));
  w.line(fmt::format("<param name=\"{}\" type=\"name\"/>", param));
  w.close("accessor");
  w.close("technique_common");
  w.close("source");
}

std::string bone_node_id(const std::string& name) { return "bone-" + name; }

Vec3 jaw_rest_position(const CompiledRig& rig) {
  return rig.jaw_rest ? rig.jaw_rest->position : Vec3::Zero();
}

}  // namespace

Mat4 bone_world_matrix(const Bone& bone, const BonePose& pose) {
  return bone_matrix(bone, pose) * translation(bone.head);
}

BonePose decompose_bone_world(const Bone& bone, const Mat4& world) {
  const Mat3 a = world.block<3, 3>(0, 0);
  const Vec3 a0 = bone.axis();
  BonePose p;
  p.stretch = (a * a0).norm();
  p.cross_section_scale = cross_section_for(p.stretch);
  const double c = p.cross_section_scale;
  const Mat3 s_inv = Mat3::Identity() / c + (1.0 / p.stretch - 1.0 / c) * (a0 * a0.transpose());
  p.rotation = Quat(a * s_inv).normalized().toRotationMatrix();
  p.head = world.block<3, 1>(0, 3);
  return p;
}

std::string write_collada(const SkinnedMesh& mesh, const Armature& armature, const AnimationClip& clip) {
  CompiledRig rig;
  rig.mesh = mesh;
  rig.armature = armature;
  return write_collada(rig, clip);
}

std::string write_collada(const CompiledRig& rig, const AnimationClip& clip) {
  check_consistency(rig, clip);
  const auto& mesh = rig.mesh;
  const auto& arm = rig.armature;
  const std::size_t nb = arm.bones.size();
  const auto children = arm.children();

  Writer w;
  w.out.reserve(1 << 20);
  w.line(R"(<?xml version="1.0" encoding="utf-8"?>)");
  w.open(fmt::format(R"(<COLLADA xmlns="{}" version="1.4.1">)", kNamespace));

  w.open("<asset>");
  w.open("<contributor>");
  w.line("<authoring_tool>emarig</authoring_tool>");
  w.close("contributor");
  w.line(R"(<unit name="centimeter" meter="0.01"/>)");
  w.line("<up_axis>Z_UP</up_axis>");
  w.close("asset");

  // Geometry.
  w.open("<library_geometries>");
  w.open(R"(<geometry id="mesh" name="mesh">)");
  w.open("<mesh>");
  {
    std::string pos;
    pos.reserve(mesh.vertices.size() * 36);
    for (const auto& v : mesh.vertices) {
      if (!pos.empty()) pos += ' ';
      pos += vec_text(v);
    }
    write_float_source(w, "mesh-positions", pos, mesh.vertices.size(), 3,
                       {{"X", "float"}, {"Y", "float"}, {"Z", "float"}});
  }
  w.open(R"(<vertices id="mesh-vertices">)");
  w.line(R"(<input semantic="POSITION" source="#mesh-positions"/>)");
  w.close("vertices");
  for (std::size_t t = 0; t < mesh.triangles.size();) {
    const MeshGroup g = mesh.triangle_groups[t];
    std::size_t e = t;
    std::string idx;
    while (e < mesh.triangles.size() && mesh.triangle_groups[e] == g) {
      for (int v : mesh.triangles[e]) {
        if (!idx.empty()) idx += ' ';
        idx += std::to_string(v);
      }
      ++e;
    }
    w.open(fmt::format(R"(<triangles material="{}" count="{}">)", group_name(g), e - t));
    w.line(R"(<input semantic="VERTEX" source="#mesh-vertices" offset="0"/>)");
    w.line(fmt::format("<p>{}</p>", idx));
    w.close("triangles");
    t = e;
  }
  w.close("mesh");
  w.close("geometry");
  w.close("library_geometries");

  // Skin. Joint order: root, bones, jaw.
  std::vector<std::string> joints{arm.root_name};
  for (const auto& b : arm.bones) joints.push_back(b.name);
  joints.emplace_back(kJawJoint);
  const int root_joint = 0;
  const int jaw_joint = static_cast<int>(nb) + 1;

  w.open("<library_controllers>");
  w.open(R"(<controller id="skin" name="skin">)");
  w.open(R"(<skin source="#mesh">)");
  w.line(fmt::format("<bind_shape_matrix>{}</bind_shape_matrix>", matrix_text(Mat4::Identity())));
  write_name_source(w, "skin-joints", joints, "JOINT");
  {
    std::string ibm;
    append_matrix(ibm, translation(-arm.root_point));
    for (const auto& b : arm.bones) append_matrix(ibm, translation(-b.head));
    append_matrix(ibm, translation(-jaw_rest_position(rig)));
    write_float_source(w, "skin-bind_poses", ibm, joints.size(), 16, {{"TRANSFORM", "float4x4"}});
  }
  std::vector<double> weight_values;
  std::string vcount;
  std::string vw;
  auto add_influence = [&](int joint, double weight) {
    if (!vw.empty()) vw += ' ';
    vw += fmt::format("{} {}", joint, weight_values.size());
    weight_values.push_back(weight);
  };
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    int count = 0;
    const MeshGroup g = mesh.vertex_groups[v];
    if (g == MeshGroup::Tongue && !mesh.weights.empty() && !mesh.weights[v].empty()) {
      for (const auto& inf : mesh.weights[v]) add_influence(inf.bone + 1, inf.weight);
      count = static_cast<int>(mesh.weights[v].size());
    } else if (g == MeshGroup::Mandible) {
      add_influence(jaw_joint, 1.0);
      count = 1;
    } else {
      add_influence(root_joint, 1.0);
      count = 1;
    }
    if (!vcount.empty()) vcount += ' ';
    vcount += std::to_string(count);
  }
  write_float_source(w, "skin-weights", join_nums(weight_values.begin(), weight_values.end()),
                     weight_values.size(), 1, {{"WEIGHT", "float"}});
  w.open("<joints>");
  w.line(R"(<input semantic="JOINT" source="#skin-joints"/>)");
  w.line(R"(<input semantic="INV_BIND_MATRIX" source="#skin-bind_poses"/>)");
  w.close("joints");
  w.open(fmt::format(R"(<vertex_weights count="{}">)", mesh.vertices.size()));
  w.line(R"(<input semantic="JOINT" source="#skin-joints" offset="0"/>)");
  w.line(R"(<input semantic="WEIGHT" source="#skin-weights" offset="1"/>)");
  w.line(fmt::format("<vcount>{}</vcount>", vcount));
  w.line(fmt::format("<v>{}</v>", vw));
  w.close("vertex_weights");
  w.close("skin");
  w.close("controller");
  w.close("library_controllers");

  // Rest world matrices, used for node local transforms.
  std::vector<Mat4> rest_world(nb);
  for (std::size_t b = 0; b < nb; ++b) rest_world[b] = translation(arm.bones[b].head);
  const Mat4 root_world = translation(arm.root_point);
  auto parent_world = [&](const std::vector<Mat4>& world, std::size_t b) -> const Mat4& {
    return arm.bones[b].parent < 0 ? root_world : world[static_cast<std::size_t>(arm.bones[b].parent)];
  };

  w.open("<library_visual_scenes>");
  w.open(R"(<visual_scene id="scene" name="scene">)");
  w.open(fmt::format(R"(<node id="root-{0}" sid="{0}" name="{0}" type="JOINT">)", escape(arm.root_name)));
  w.line(fmt::format(R"(<matrix sid="transform">{}</matrix>)", matrix_text(root_world)));
  // Depth-first emission keeps the XML nesting equal to the bone tree.
  std::vector<int> roots;
  for (std::size_t b = 0; b < nb; ++b) {
    if (arm.bones[b].parent < 0) roots.push_back(static_cast<int>(b));
  }
  auto emit = [&](auto&& self, int b) -> void {
    const auto& bone = arm.bones[static_cast<std::size_t>(b)];
    w.open(fmt::format(R"(<node id="{}" sid="{}" name="{}" type="JOINT">)", escape(bone_node_id(bone.name)),
                       escape(bone.name), escape(bone.name)));
    const Mat4 local = parent_world(rest_world, static_cast<std::size_t>(b)).inverse() *
                       rest_world[static_cast<std::size_t>(b)];
    w.line(fmt::format(R"(<matrix sid="transform">{}</matrix>)", matrix_text(local)));
    for (int c : children[static_cast<std::size_t>(b)]) self(self, c);
    w.close("node");
  };
  for (int r : roots) emit(emit, r);
  w.close("node");
  w.open(fmt::format(R"(<node id="{0}" sid="{0}" name="{0}" type="JOINT">)", kJawJoint));
  w.line(fmt::format(R"(<matrix sid="transform">{}</matrix>)", matrix_text(translation(jaw_rest_position(rig)))));
  w.close("node");
  w.open(R"(<node id="model" name="model" type="NODE">)");
  w.open(R"(<instance_controller url="#skin">)");
  w.line(fmt::format("<skeleton>#root-{}</skeleton>", escape(arm.root_name)));
  w.close("instance_controller");
  w.close("node");
  w.close("visual_scene");
  w.close("library_visual_scenes");

  if (clip.key_count() > 0) {
    const std::size_t nk = clip.key_count();
    std::vector<std::string> outputs(nb + 1);
    for (auto& s : outputs) s.reserve(nk * 16 * 12);
    std::vector<Mat4> world(nb);
    for (std::size_t k = 0; k < nk; ++k) {
      const auto& f = clip.frames[k];
      for (std::size_t b = 0; b < nb; ++b) {
        BonePose p;
        p.rotation = f.bones[b].rotation.normalized().toRotationMatrix();
        p.head = f.bones[b].head;
        p.stretch = f.bones[b].stretch;
        p.cross_section_scale = cross_section_for(p.stretch);
        world[b] = bone_world_matrix(arm.bones[b], p);
      }
      for (std::size_t b = 0; b < nb; ++b) {
        append_matrix(outputs[b], parent_world(world, b).inverse() * world[b]);
      }
      append_matrix(outputs[nb], f.jaw.transform().matrix() * translation(jaw_rest_position(rig)));
    }

    w.open("<library_animations>");
    w.open(R"(<animation id="action" name="action">)");
    write_float_source(w, "action-time", join_nums(clip.times.begin(), clip.times.end()), nk, 1,
                       {{"TIME", "float"}});
    write_name_source(w, "action-interpolation", std::vector<std::string>(nk, "LINEAR"), "INTERPOLATION");
    std::vector<std::string> targets;
    for (const auto& b : arm.bones) targets.push_back(bone_node_id(b.name));
    targets.emplace_back(kJawJoint);
    for (std::size_t j = 0; j <= nb; ++j) {
      write_float_source(w, targets[j] + "-output", outputs[j], nk, 16, {{"TRANSFORM", "float4x4"}});
    }
    for (std::size_t j = 0; j <= nb; ++j) {
      w.open(fmt::format(R"(<sampler id="{}-sampler">)", escape(targets[j])));
      w.line(R"(<input semantic="INPUT" source="#action-time"/>)");
      w.line(fmt::format(R"(<input semantic="OUTPUT" source="#{}-output"/>)", escape(targets[j])));
      w.line(R"(<input semantic="INTERPOLATION" source="#action-interpolation"/>)");
      w.close("sampler");
    }
    for (std::size_t j = 0; j <= nb; ++j) {
      w.line(fmt::format(R"(<channel source="#{0}-sampler" target="{0}/transform"/>)", escape(targets[j])));
    }
    w.close("animation");
    w.close("library_animations");

    w.open("<library_animation_clips>");
    w.open(fmt::format(R"(<animation_clip id="clip" start="0" end="{}">)", num(clip.duration)));
    w.line(R"(<instance_animation url="#action"/>)");
    w.close("animation_clip");
    w.close("library_animation_clips");
  }

  w.open("<scene>");
  w.line(R"(<instance_visual_scene url="#scene"/>)");
  w.close("scene");

  // Everything the standard elements cannot carry.
  w.open("<extra>");
  w.open(fmt::format(R"(<technique profile="{}">)", kColladaProfile));
  w.line(fmt::format(R"(<clip rate_hz="{}" duration="{}"/>)", num(clip.rate_hz), num(clip.duration)));
  w.open(fmt::format(R"(<armature root="{}" root_point="{}">)", escape(arm.root_name), vec_text(arm.root_point)));
  for (const auto& b : arm.bones) {
    w.line(fmt::format(R"(<bone name="{}" tail="{}"/>)", escape(b.name), vec_text(b.tail)));
  }
  w.close("armature");
  {
    std::string groups;
    for (MeshGroup g : mesh.vertex_groups) {
      if (!groups.empty()) groups += ' ';
      groups += std::to_string(static_cast<int>(g));
    }
    w.line(fmt::format("<vertex_groups>{}</vertex_groups>", groups));
  }
  const auto& reg = rig.meta.registration;
  std::string rot;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!rot.empty()) rot += ' ';
      rot += num(reg.rotation(r, c));
    }
  }
  w.line(fmt::format(R"(<registration scale="{}" rotation="{}" translation="{}" rms="{}"/>)", num(reg.scale),
                     rot, vec_text(reg.translation), num(rig.meta.registration_rms)));
  for (const auto& [coil, vertex] : rig.meta.seed_vertices) {
    const auto off = rig.seed_offsets.find(coil);
    w.line(fmt::format(R"(<seed coil="{}" vertex="{}" offset="{}"/>)", escape(coil), vertex,
                       num(off == rig.seed_offsets.end() ? 0.0 : off->second)));
  }
  if (rig.jaw_rest) {
    w.line(fmt::format(R"(<jaw channel="{}" position="{}" direction="{}"/>)",
                       escape(rig.meta.jaw_channel.value_or("")), vec_text(rig.jaw_rest->position),
                       vec_text(rig.jaw_rest->direction)));
  }
  w.close("technique");
  w.close("extra");
  w.close("COLLADA");
  return std::move(w.out);
}

// ---------------------------------------------------------------------------
// Reader

namespace {

const std::set<std::string> kTopLevel{"<xmlattr>",          "asset",
                                      "library_geometries", "library_controllers",
                                      "library_visual_scenes", "library_animations",
                                      "library_animation_clips", "scene",
                                      "extra"};
const std::set<std::string> kUnsupportedPrimitives{"polylist", "polygons", "lines",
                                                   "linestrips", "tristrips", "trifans"};
const std::set<std::string> kUnsupportedTransforms{"translate", "rotate", "scale", "lookat", "skew"};

void scan_unsupported(const ptree& pt, const std::string& path) {
  for (const auto& [name, child] : pt) {
    if (name == "<xmlattr>" || name == "<xmlcomment>") continue;
    const std::string here = path + "/" + name;
    if (name.rfind("profile_", 0) == 0) unsupported(fmt::format("element <{}> at {}", name, here));
    if (kUnsupportedPrimitives.count(name)) unsupported(fmt::format("primitive <{}> at {}", name, here));
    if (kUnsupportedTransforms.count(name)) unsupported(fmt::format("transform <{}> at {}", name, here));
    if (name == "technique") {
      const auto profile = child.get_optional<std::string>("<xmlattr>.profile");
      if (profile && *profile != kColladaProfile) {
        unsupported(fmt::format("technique profile '{}' at {}", *profile, here));
      }
    }
    scan_unsupported(child, here);
  }
}

const ptree& need(const ptree& pt, const std::string& path) {
  const auto c = pt.get_child_optional(path);
  if (!c) parse_error(fmt::format("missing <{}>", path));
  return *c;
}

std::string attr(const ptree& pt, const std::string& name) {
  const auto v = pt.get_optional<std::string>("<xmlattr>." + name);
  if (!v) parse_error(fmt::format("missing attribute '{}'", name));
  return *v;
}

std::vector<double> parse_numbers(std::string_view text, const std::string& what) {
  std::vector<double> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (true) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    double v = 0.0;
    const auto r = std::from_chars(p, end, v);
    if (r.ec != std::errc{}) parse_error(fmt::format("bad number in {}", what));
    out.push_back(v);
    p = r.ptr;
    if (p < end && !std::isspace(static_cast<unsigned char>(*p))) parse_error(fmt::format("bad number in {}", what));
  }
  return out;
}

std::vector<int> parse_ints(std::string_view text, const std::string& what) {
  std::vector<int> out;
  for (double v : parse_numbers(text, what)) {
    if (v != std::floor(v) || std::abs(v) > 2e9) parse_error(fmt::format("non-integer in {}", what));
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string s; in >> s;) out.push_back(s);
  return out;
}

double num_attr(const ptree& pt, const std::string& name) {
  const auto v = parse_numbers(attr(pt, name), name);
  if (v.size() != 1) parse_error(fmt::format("attribute '{}' needs one number", name));
  return v[0];
}

Vec3 vec_attr(const ptree& pt, const std::string& name) {
  const auto v = parse_numbers(attr(pt, name), name);
  if (v.size() != 3) parse_error(fmt::format("attribute '{}' needs 3 numbers", name));
  return {v[0], v[1], v[2]};
}

Mat4 to_matrix(std::span<const double> v) {
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
  }
  return m;
}

// Sources of one parent element addressed by id, with their arrays checked
// against the accessor.
struct SourceData {
  std::vector<double> floats;
  std::vector<std::string> names;
  std::size_t count = 0;
  std::size_t stride = 1;
};

std::map<std::string, SourceData> read_sources(const ptree& parent) {
  std::map<std::string, SourceData> out;
  for (const auto& [name, src] : parent) {
    if (name != "source") continue;
    SourceData d;
    const auto id = attr(src, "id");
    const auto& acc = need(src, "technique_common.accessor");
    d.count = static_cast<std::size_t>(std::stoul(attr(acc, "count")));
    d.stride = static_cast<std::size_t>(std::stoul(acc.get<std::string>("<xmlattr>.stride", "1")));
    if (const auto fa = src.get_child_optional("float_array")) {
      d.floats = parse_numbers(fa->data(), id);
      if (d.floats.size() != d.count * d.stride) parse_error(fmt::format("source '{}' has the wrong size", id));
    } else if (const auto na = src.get_child_optional("Name_array")) {
      d.names = parse_names(na->data());
      if (d.names.size() != d.count * d.stride) parse_error(fmt::format("source '{}' has the wrong size", id));
    } else {
      parse_error(fmt::format("source '{}' has no supported array", id));
    }
    out.emplace(id, std::move(d));
  }
  return out;
}

const SourceData& source_ref(const std::map<std::string, SourceData>& sources, const std::string& ref) {
  const std::string id = !ref.empty() && ref[0] == '#' ? ref.substr(1) : ref;
  const auto it = sources.find(id);
  if (it == sources.end()) parse_error(fmt::format("unresolved source '{}'", ref));
  return it->second;
}

MeshGroup group_from_name(const std::string& s) {
  for (MeshGroup g : {MeshGroup::Tongue, MeshGroup::Mandible, MeshGroup::Maxilla, MeshGroup::None}) {
    if (group_name(g) == s) return g;
  }
  parse_error(fmt::format("unknown triangle material '{}'", s));
}

struct JointNode {
  std::string name;
  std::string parent;  // empty for the root
  Mat4 local;
};

Mat4 node_matrix(const ptree& node) {
  const auto v = parse_numbers(need(node, "matrix").data(), "node matrix");
  if (v.size() != 16) parse_error("node matrix needs 16 numbers");
  return to_matrix(v);
}

void collect_joints(const ptree& node, const std::string& parent, std::vector<JointNode>& out) {
  for (const auto& [name, child] : node) {
    if (name != "node") continue;
    JointNode j{attr(child, "sid"), parent, node_matrix(child)};
    out.push_back(j);
    collect_joints(child, j.name, out);
  }
}

}  // namespace

ColladaScene read_collada(std::string_view document) {
  ptree doc;
  try {
    std::istringstream in{std::string(document)};
    boost::property_tree::read_xml(in, doc, boost::property_tree::xml_parser::trim_whitespace);
  } catch (const boost::property_tree::xml_parser_error& e) {
    parse_error(fmt::format("malformed XML: {}", e.what()));
  }
  const auto root_opt = doc.get_child_optional("COLLADA");
  if (!root_opt) parse_error("document has no <COLLADA> root");
  const ptree& root = *root_opt;
  if (root.get<std::string>("<xmlattr>.version", "") != "1.4.1") {
    unsupported("only COLLADA version 1.4.1 is read");
  }
  for (const auto& [name, child] : root) {
    if (name == "<xmlcomment>") continue;
    if (!kTopLevel.count(name)) unsupported(fmt::format("top-level element <{}>", name));
  }
  scan_unsupported(root, "COLLADA");

  ColladaScene scene;
  CompiledRig& rig = scene.rig;
  SkinnedMesh& mesh = rig.mesh;
  Armature& arm = rig.armature;
  AnimationClip& clip = scene.clip;

  try {
    // Extra metadata first: bone order and tails live there.
    const ptree* tech = nullptr;
    for (const auto& [name, child] : need(root, "extra")) {
      if (name == "technique" && child.get<std::string>("<xmlattr>.profile", "") == kColladaProfile) tech = &child;
    }
    if (!tech) parse_error(fmt::format("missing <technique profile=\"{}\">", kColladaProfile));
    const auto& clip_meta = need(*tech, "clip");
    clip.rate_hz = num_attr(clip_meta, "rate_hz");
    clip.duration = num_attr(clip_meta, "duration");
    const auto& arm_meta = need(*tech, "armature");
    arm.root_name = attr(arm_meta, "root");
    arm.root_point = vec_attr(arm_meta, "root_point");
    std::map<std::string, int> bone_index;
    for (const auto& [name, b] : arm_meta) {
      if (name != "bone") continue;
      Bone bone;
      bone.name = attr(b, "name");
      bone.tail = vec_attr(b, "tail");
      bone_index[bone.name] = static_cast<int>(arm.bones.size());
      arm.bones.push_back(bone);
    }
    const auto groups = parse_ints(need(*tech, "vertex_groups").data(), "vertex_groups");
    const auto& reg = need(*tech, "registration");
    rig.meta.registration.scale = num_attr(reg, "scale");
    const auto rot = parse_numbers(attr(reg, "rotation"), "registration rotation");
    if (rot.size() != 9) parse_error("registration rotation needs 9 numbers");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rig.meta.registration.rotation(r, c) = rot[static_cast<std::size_t>(r * 3 + c)];
    }
    rig.meta.registration.translation = vec_attr(reg, "translation");
    rig.meta.registration_rms = num_attr(reg, "rms");
    for (const auto& [name, s] : *tech) {
      if (name != "seed") continue;
      rig.meta.seed_vertices[attr(s, "coil")] = static_cast<int>(num_attr(s, "vertex"));
      rig.seed_offsets[attr(s, "coil")] = num_attr(s, "offset");
    }
    if (const auto jaw = tech->get_child_optional("jaw")) {
      rig.jaw_rest = JawRest{vec_attr(*jaw, "position"), vec_attr(*jaw, "direction")};
      const auto channel = attr(*jaw, "channel");
      if (!channel.empty()) rig.meta.jaw_channel = channel;
    }

    // Geometry.
    const auto& geoms = need(root, "library_geometries");
    if (geoms.count("geometry") != 1) unsupported("exactly one <geometry> is supported");
    const auto& gmesh = need(geoms, "geometry.mesh");
    const auto gsources = read_sources(gmesh);
    const auto& vertices = need(gmesh, "vertices");
    const auto& positions = source_ref(gsources, attr(need(vertices, "input"), "source"));
    if (positions.stride != 3) parse_error("positions must have stride 3");
    for (std::size_t i = 0; i < positions.count; ++i) {
      mesh.vertices.emplace_back(positions.floats[i * 3], positions.floats[i * 3 + 1], positions.floats[i * 3 + 2]);
    }
    const int nv = static_cast<int>(mesh.vertices.size());
    for (const auto& [name, tri] : gmesh) {
      if (name != "triangles") continue;
      if (tri.count("input") != 1) unsupported("triangles with more than one input");
      const MeshGroup g = group_from_name(tri.get<std::string>("<xmlattr>.material", "ungrouped"));
      const auto idx = parse_ints(need(tri, "p").data(), "triangles");
      const auto count = static_cast<std::size_t>(std::stoul(attr(tri, "count")));
      if (idx.size() != count * 3) parse_error("triangle index count mismatch");
      for (std::size_t t = 0; t < count; ++t) {
        std::array<int, 3> f{idx[t * 3], idx[t * 3 + 1], idx[t * 3 + 2]};
        for (int v : f) {
          if (v < 0 || v >= nv) parse_error("triangle index out of range");
        }
        mesh.triangles.push_back(f);
        mesh.triangle_groups.push_back(g);
      }
    }
    if (groups.size() != mesh.vertices.size()) parse_error("vertex_groups size mismatch");
    for (int g : groups) {
      if (g < 0 || g > 3) parse_error("bad vertex group");
      mesh.vertex_groups.push_back(static_cast<MeshGroup>(g));
    }

    // Joint hierarchy.
    std::vector<JointNode> joints;
    bool found_root = false;
    Mat4 jaw_rest_world = Mat4::Identity();
    for (const auto& [name, node] : need(root, "library_visual_scenes.visual_scene")) {
      if (name != "node") continue;
      const auto sid = node.get_optional<std::string>("<xmlattr>.sid");
      if (sid && *sid == arm.root_name) {
        found_root = true;
        collect_joints(node, "", joints);
      } else if (sid && *sid == kJawJoint) {
        jaw_rest_world = node_matrix(node);
      }
    }
    if (!found_root) parse_error(fmt::format("root joint '{}' not found", arm.root_name));
    if (joints.size() != arm.bones.size()) parse_error("joint nodes do not match the armature metadata");
    const Mat4 root_world = translation(arm.root_point);
    std::map<std::string, Mat4> rest_world;
    for (const auto& j : joints) {
      const auto it = bone_index.find(j.name);
      if (it == bone_index.end()) parse_error(fmt::format("joint '{}' has no bone metadata", j.name));
      Bone& bone = arm.bones[static_cast<std::size_t>(it->second)];
      if (j.parent.empty()) {
        bone.parent = -1;
        rest_world[j.name] = root_world * j.local;
      } else {
        bone.parent = bone_index.at(j.parent);
        rest_world[j.name] = rest_world.at(j.parent) * j.local;
      }
      bone.head = rest_world[j.name].block<3, 1>(0, 3);
    }
    for (std::size_t b = 0; b < arm.bones.size(); ++b) {
      auto& bone = arm.bones[b];
      if (bone.parent >= static_cast<int>(b)) parse_error("bone metadata is not in parent-first order");
      bone.rest_length = (bone.tail - bone.head).norm();
    }
    if (rig.jaw_rest) rig.jaw_rest->position = jaw_rest_world.block<3, 1>(0, 3);

    // Skin weights.
    const auto& skin = need(root, "library_controllers.controller.skin");
    const auto ssources = read_sources(skin);
    const auto& vwn = need(skin, "vertex_weights");
    std::string joint_ref;
    std::string weight_ref;
    for (const auto& [name, in] : vwn) {
      if (name != "input") continue;
      const auto sem = attr(in, "semantic");
      if (sem == "JOINT") joint_ref = attr(in, "source");
      if (sem == "WEIGHT") weight_ref = attr(in, "source");
    }
    const auto& jnames = source_ref(ssources, joint_ref).names;
    const auto& wvals = source_ref(ssources, weight_ref).floats;
    std::vector<int> joint_to_bone;
    for (const auto& n : jnames) {
      const auto it = bone_index.find(n);
      joint_to_bone.push_back(it == bone_index.end() ? -1 : it->second);
    }
    const auto vcount = parse_ints(need(vwn, "vcount").data(), "vcount");
    const auto v = parse_ints(need(vwn, "v").data(), "v");
    if (vcount.size() != mesh.vertices.size()) parse_error("vcount size mismatch");
    std::vector<std::vector<Influence>> weights(mesh.vertices.size());
    bool any = false;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < vcount.size(); ++i) {
      for (int k = 0; k < vcount[i]; ++k) {
        if (cursor + 2 > v.size()) parse_error("vertex weight list is truncated");
        const int joint = v[cursor];
        const int widx = v[cursor + 1];
        cursor += 2;
        if (joint < 0 || joint >= static_cast<int>(joint_to_bone.size()) || widx < 0 ||
            widx >= static_cast<int>(wvals.size())) {
          parse_error("vertex weight index out of range");
        }
        if (joint_to_bone[static_cast<std::size_t>(joint)] >= 0) {
          weights[i].push_back(Influence{joint_to_bone[static_cast<std::size_t>(joint)], wvals[static_cast<std::size_t>(widx)]});
          any = true;
        }
      }
    }
    if (any) mesh.weights = std::move(weights);

    // Animation.
    clip.armature = arm;
    if (const auto anims = root.get_child_optional("library_animations")) {
      const auto& anim = need(*anims, "animation");
      const auto asources = read_sources(anim);
      std::map<std::string, std::string> sampler_output;
      std::string time_ref;
      for (const auto& [name, s] : anim) {
        if (name != "sampler") continue;
        std::string out_ref;
        for (const auto& [iname, in] : s) {
          if (iname != "input") continue;
          const auto sem = attr(in, "semantic");
          if (sem == "INPUT") {
            if (!time_ref.empty() && time_ref != attr(in, "source")) unsupported("samplers with distinct time sources");
            time_ref = attr(in, "source");
          } else if (sem == "OUTPUT") {
            out_ref = attr(in, "source");
          } else if (sem == "INTERPOLATION") {
            for (const auto& n : source_ref(asources, attr(in, "source")).names) {
              if (n != "LINEAR") unsupported(fmt::format("interpolation '{}'", n));
            }
          }
        }
        sampler_output["#" + attr(s, "id")] = out_ref;
      }
      clip.times = source_ref(asources, time_ref).floats;
      const std::size_t nk = clip.times.size();
      const std::size_t nb = arm.bones.size();
      std::vector<const SourceData*> bone_out(nb, nullptr);
      const SourceData* jaw_out = nullptr;
      for (const auto& [name, ch] : anim) {
        if (name != "channel") continue;
        const auto target = attr(ch, "target");
        const auto slash = target.find('/');
        if (slash == std::string::npos || target.substr(slash + 1) != "transform") {
          unsupported(fmt::format("channel target '{}'", target));
        }
        const auto node_id = target.substr(0, slash);
        const auto it = sampler_output.find(attr(ch, "source"));
        if (it == sampler_output.end()) parse_error("channel references an unknown sampler");
        const SourceData& out = source_ref(asources, it->second);
        if (out.count != nk || out.stride != 16) parse_error("animation output does not match the time source");
        if (node_id == kJawJoint) {
          jaw_out = &out;
        } else if (node_id.rfind("bone-", 0) == 0 && bone_index.count(node_id.substr(5))) {
          bone_out[static_cast<std::size_t>(bone_index.at(node_id.substr(5)))] = &out;
        } else {
          parse_error(fmt::format("channel targets unknown node '{}'", node_id));
        }
      }
      for (std::size_t b = 0; b < nb; ++b) {
        if (!bone_out[b]) parse_error(fmt::format("bone '{}' has no animation channel", arm.bones[b].name));
      }
      const Vec3 jaw_p0 = rig.jaw_rest ? rig.jaw_rest->position : jaw_rest_world.block<3, 1>(0, 3);
      std::vector<Mat4> world(nb);
      clip.frames.resize(nk);
      for (std::size_t k = 0; k < nk; ++k) {
        auto& f = clip.frames[k];
        f.bones.resize(nb);
        for (std::size_t b = 0; b < nb; ++b) {
          const Mat4 local = to_matrix(std::span(bone_out[b]->floats).subspan(k * 16, 16));
          const int parent = arm.bones[b].parent;
          world[b] = (parent < 0 ? root_world : world[static_cast<std::size_t>(parent)]) * local;
          const BonePose p = decompose_bone_world(arm.bones[b], world[b]);
          f.bones[b] = BoneKey{Quat(p.rotation).normalized(), p.head, p.stretch};
        }
        if (jaw_out) {
          const Mat4 jw = to_matrix(std::span(jaw_out->floats).subspan(k * 16, 16)) * translation(-jaw_p0);
          RigidTransform t;
          t.rotation = Quat(Mat3(jw.block<3, 3>(0, 0))).normalized().toRotationMatrix();
          t.translation = jw.block<3, 1>(0, 3);
          f.jaw = JawKey::from(t);
        }
      }
    }
  } catch (const boost::property_tree::ptree_error& e) {
    parse_error(e.what());
  } catch (const std::invalid_argument& e) {
    parse_error(fmt::format("bad number: {}", e.what()));
  } catch (const std::out_of_range& e) {
    parse_error(fmt::format("value out of range: {}", e.what()));
  }
  return scene;
}

}  // namespace emarig
