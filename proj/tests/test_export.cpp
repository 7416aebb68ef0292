#include <doctest.h>

#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "emarig/bundle.hpp"
#include "emarig/collada.hpp"
#include "emarig/rig_graph.hpp"
#include "emarig/trajectories.hpp"
#include "fixture_rig.hpp"
#include "random_scene.hpp"
#include "support.hpp"

using namespace emarig;
using namespace emarig::test;
namespace pt = boost::property_tree;

namespace {

void check_round_trip(const RandomScene& s, const ColladaScene& back) {
  const auto& m = s.rig.mesh;
  const auto& r = back.rig.mesh;
  REQUIRE(r.vertices.size() == m.vertices.size());
  CHECK(r.triangles == m.triangles);
  CHECK(r.triangle_groups == m.triangle_groups);
  CHECK(r.vertex_groups == m.vertex_groups);
  for (std::size_t v = 0; v < m.vertices.size(); ++v) REQUIRE((r.vertices[v] - m.vertices[v]).norm() < 1e-6);
  REQUIRE(r.weights.size() == m.weights.size());
  for (std::size_t v = 0; v < m.weights.size(); ++v) {
    REQUIRE(r.weights[v].size() == m.weights[v].size());
    for (std::size_t i = 0; i < m.weights[v].size(); ++i) {
      CHECK(r.weights[v][i].bone == m.weights[v][i].bone);
      CHECK(std::abs(r.weights[v][i].weight - m.weights[v][i].weight) < 1e-6);
    }
  }

  const auto& a = s.rig.armature;
  const auto& b = back.rig.armature;
  CHECK(b.root_name == a.root_name);
  CHECK((b.root_point - a.root_point).norm() < 1e-6);
  REQUIRE(b.bones.size() == a.bones.size());
  for (std::size_t k = 0; k < a.bones.size(); ++k) {
    CHECK(b.bones[k].name == a.bones[k].name);
    CHECK(b.bones[k].parent == a.bones[k].parent);
    CHECK((b.bones[k].head - a.bones[k].head).norm() < 1e-6);
    CHECK((b.bones[k].tail - a.bones[k].tail).norm() < 1e-6);
    CHECK(std::abs(b.bones[k].rest_length - a.bones[k].rest_length) < 1e-6);
  }

  const auto& ma = s.rig.meta;
  const auto& mb = back.rig.meta;
  CHECK(std::abs(mb.registration.scale - ma.registration.scale) < 1e-6);
  CHECK((mb.registration.rotation - ma.registration.rotation).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((mb.registration.translation - ma.registration.translation).norm() < 1e-6);
  CHECK(mb.seed_vertices == ma.seed_vertices);
  CHECK(mb.jaw_channel == ma.jaw_channel);
  CHECK(back.rig.jaw_rest.has_value() == s.rig.jaw_rest.has_value());
  if (s.rig.jaw_rest) CHECK((back.rig.jaw_rest->position - s.rig.jaw_rest->position).norm() < 1e-6);

  const auto& ca = s.clip;
  const auto& cb = back.clip;
  CHECK(cb.rate_hz == ca.rate_hz);
  CHECK(std::abs(cb.duration - ca.duration) < 1e-6);
  REQUIRE(cb.key_count() == ca.key_count());
  for (std::size_t k = 0; k < ca.key_count(); ++k) {
    REQUIRE(std::abs(cb.times[k] - ca.times[k]) < 1e-6);
    for (std::size_t j = 0; j < ca.frames[k].bones.size(); ++j) {
      const auto& x = ca.frames[k].bones[j];
      const auto& y = cb.frames[k].bones[j];
      REQUIRE((x.rotation.toRotationMatrix() - y.rotation.toRotationMatrix()).cwiseAbs().maxCoeff() < 1e-6);
      REQUIRE((x.head - y.head).norm() < 1e-6);
      REQUIRE(std::abs(x.stretch - y.stretch) < 1e-6);
    }
    const auto ja = ca.frames[k].jaw.transform();
    const auto jb = cb.frames[k].jaw.transform();
    REQUIRE((ja.rotation - jb.rotation).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE((ja.translation - jb.translation).norm() < 1e-6);
  }
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

int count_joints(const pt::ptree& node) {
  int n = 0;
  for (const auto& [name, child] : node) {
    if (name != "node") continue;
    if (child.get<std::string>("<xmlattr>.type", "") == "JOINT") ++n;
    n += count_joints(child);
  }
  return n;
}

void flip_byte(const std::filesystem::path& p, std::size_t at) {
  auto bytes = read_file_bytes(p);
  REQUIRE(at < bytes.size());
  bytes[at] ^= 0x01;
  write_file_bytes(p, bytes);
}

}  // namespace

TEST_SUITE("export") {
  TEST_CASE("COLLADA round trip on random rigs and clips") {
    for (int trial = 0; trial < 40; ++trial) {
      const auto s = random_scene(30);
      const auto doc = write_collada(s.rig, s.clip);
      check_round_trip(s, read_collada(doc));
      CHECK(write_collada(s.rig, s.clip) == doc);
    }
  }

  TEST_CASE("the fixture rig exports seven joints under the root") {
    const auto r = fixture_rig();
    const auto clip = bake(std::span(r.prepared).first(1), r.rig, IkParams{});
    const auto doc = write_collada(r.rig, clip);
    std::istringstream in(doc);
    pt::ptree tree;
    pt::read_xml(in, tree);
    const auto& scene = tree.get_child("COLLADA.library_visual_scenes.visual_scene");
    bool found = false;
    for (const auto& [name, node] : scene) {
      if (name == "node" && node.get<std::string>("<xmlattr>.name", "") == "TRoot") {
        found = true;
        CHECK(count_joints(node) == 7);
      }
    }
    CHECK(found);
    CHECK(tree.get<std::string>("COLLADA.<xmlattr>.version") == "1.4.1");
    CHECK(tree.get<std::string>("COLLADA.asset.up_axis") == "Z_UP");
    CHECK(tree.get<double>("COLLADA.asset.unit.<xmlattr>.meter") == 0.01);

    const auto back = read_collada(doc);
    CHECK(back.clip.key_count() == clip.key_count());
    CHECK(back.rig.armature.bones.size() == 7);
  }

  TEST_CASE("empty clip has no animation library") {
    auto s = random_scene(0);
    s.clip.times.clear();
    s.clip.frames.clear();
    s.clip.duration = 0;
    const auto doc = write_collada(s.rig, s.clip);
    CHECK(doc.find("<library_geometries>") != std::string::npos);
    CHECK(doc.find("<library_controllers>") != std::string::npos);
    CHECK(doc.find("<library_animations>") == std::string::npos);
    const auto back = read_collada(doc);
    CHECK(back.clip.key_count() == 0);
    CHECK(back.rig.mesh.vertices.size() == s.rig.mesh.vertices.size());
  }

  TEST_CASE("inconsistent rigs are refused") {
    auto s = random_scene(3);
    auto bad = s.rig;
    bad.mesh.weights[bad.mesh.group_vertices(MeshGroup::Tongue)[0]][0].bone = 99;
    CHECK(error_code([&] { write_collada(bad, s.clip); }) == "InconsistentRig");
    auto clip = s.clip;
    clip.armature.bones.push_back(clip.armature.bones.back());
    CHECK(error_code([&] { write_collada(s.rig, clip); }) == "InconsistentRig");
  }

  TEST_CASE("reader rejects malformed and foreign documents") {
    const auto s = random_scene(4);
    const auto doc = write_collada(s.rig, s.clip);
    CHECK(error_code([] { read_collada("<COLLADA"); }) == "ParseError");
    CHECK(error_code([] { read_collada("not xml at all"); }) == "ParseError");
    CHECK(error_code([&] { read_collada(doc.substr(0, doc.size() / 2)); }) == "ParseError");
    CHECK(error_code([&] { read_collada(replace_once(doc, "version=\"1.4.1\"", "version=\"1.5.0\"")); }) ==
          "UnsupportedFeature");
    CHECK(error_code([&] {
            read_collada(replace_once(doc, "<extra>", "<extra><technique profile=\"FCOLLADA\"/>"));
          }) == "UnsupportedFeature");
    CHECK(error_code([&] {
            read_collada(replace_once(doc, "<asset>", "<asset><profile_COMMON/>"));
          }) == "UnsupportedFeature");
    CHECK(error_code([&] {
            read_collada(replace_once(doc, "</library_geometries>", "</library_geometries><library_lights/>"));
          }) == "UnsupportedFeature");
    CHECK(error_code([&] {
            read_collada(replace_once(doc, "<matrix sid=\"transform\">", "<rotate sid=\"r\">0 0 1 0</rotate><matrix sid=\"transform\">"));
          }) == "UnsupportedFeature");
    if (s.clip.key_count() > 0) {
      CHECK(error_code([&] { read_collada(replace_once(doc, "LINEAR", "BEZIER")); }) == "UnsupportedFeature");
    }
    CHECK(error_code([&] {
            read_collada(replace_once(doc, "<triangles ", "<polylist count=\"0\"/><triangles "));
          }) == "UnsupportedFeature");
  }

  TEST_CASE("bone world matrices decompose back into poses") {
    const auto a = build_armature(parse_rig_graph("digraph{R->A;}"), {{"A", Vec3(0.3, -1, 2)}}, Vec3(1, 1, 1), Vec3::Zero());
    for (int trial = 0; trial < 200; ++trial) {
      BonePose p;
      p.rotation = random_rotation();
      p.head = random_vec(3.0);
      p.stretch = uniform(0.5, 2.0);
      p.cross_section_scale = cross_section_for(p.stretch);
      const auto q = decompose_bone_world(a.bones[0], bone_world_matrix(a.bones[0], p));
      CHECK((q.rotation - p.rotation).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((q.head - p.head).norm() < 1e-12);
      CHECK(std::abs(q.stretch - p.stretch) < 1e-12);
    }
  }

  TEST_CASE("coil dump of an unmodified sweep is write_pos") {
    const auto fx = make_fixture();
    DumpInputs in;
    in.coils = &fx.sweeps[1];
    const auto d = dump_trajectories(TrajectoryKind::Coils, in);
    CHECK(d.bytes == write_pos(fx.sweeps[1], fx.layout));
    CHECK(d.layout.channels == fx.layout.channels);
    CHECK(error_code([] { parse_trajectory_kind("bones"); }) == "UnknownKind");
    for (auto k : {TrajectoryKind::Coils, TrajectoryKind::IkTargets, TrajectoryKind::SeedVertices}) {
      CHECK(parse_trajectory_kind(trajectory_kind_name(k)) == k);
    }
  }

  TEST_CASE("IK target dump is the registered coil dump") {
    const auto r = fixture_rig();
    const auto& sweep = r.prepared[0];
    const auto ema = ik_target_trajectories(sweep, r.rig, TrajectorySpace::Ema);
    const auto mesh = ik_target_trajectories(sweep, r.rig, TrajectorySpace::Mesh);
    REQUIRE(ema.channels.size() == 7);
    for (std::size_t c = 0; c < ema.channels.size(); ++c) {
      const auto src = sweep.channel_index(ema.channels[c]);
      for (std::size_t f = 0; f < sweep.frame_count(); ++f) {
        REQUIRE((ema.at(f, c).position - sweep.at(f, src).position).norm() < 1e-12);
        const Vec3 reg = r.rig.meta.registration.apply(sweep.at(f, src).position);
        REQUIRE((mesh.at(f, c).position - reg).norm() < 1e-12);
      }
    }
  }

  TEST_CASE("seed vertices follow the source coils") {
    const auto r = fixture_rig();
    const IkParams ik;
    const auto clip = bake(r.prepared, r.rig, ik);
    const auto seeds = seed_vertex_trajectories(r.rig, clip, TrajectorySpace::Ema);
    double bound = ik.tolerance + r.rig.meta.registration_rms;
    double worst_offset = 0.0;
    for (const auto& [c, off] : r.rig.seed_offsets) worst_offset = std::max(worst_offset, off);
    bound += worst_offset;
    std::size_t f0 = 0;
    for (const auto& sweep : r.prepared) {
      for (std::size_t c = 0; c < seeds.channels.size(); ++c) {
        const auto src = sweep.channel_index(seeds.channels[c]);
        for (std::size_t f = 0; f < sweep.frame_count(); ++f) {
          REQUIRE((seeds.at(f0 + f, c).position - sweep.at(f, src).position).norm() <= bound);
        }
      }
      f0 += sweep.frame_count();
    }
  }

  TEST_CASE("bundle layout and verification") {
    TempDir tmp("bundle");
    const std::string wav = "RIFF....WAVEfmt fake audio";
    write_text_file(tmp / "a.wav", wav);
    BundleParts parts;
    parts.model = "<COLLADA/>";
    parts.layout.channels = {"A", "B"};
    const auto only = write_bundle(tmp / "model_only", parts);
    std::vector<std::string> listed;
    for (const auto& e : only.manifest.files) listed.push_back(e.path);
    CHECK(std::find(listed.begin(), listed.end(), "model.dae") != listed.end());
    CHECK(std::find(listed.begin(), listed.end(), "segmentation.txt") == listed.end());
    for (const auto& p : listed) CHECK(p.rfind("audio/", 0) != 0);
    CHECK_FALSE(only.segmentation_path().has_value());
    CHECK(verify_bundle(only.root).ok);

    parts.segmentation = "0 0.1 sil\n";
    parts.audio = {tmp / "a.wav"};
    parts.sources = {{"x.pos", sha256_hex(std::string_view("x"))}};
    const auto full = write_bundle(tmp / "full", parts);
    CHECK(read_text_file(full.root / "audio" / "a.wav") == wav);
    CHECK(read_text_file(full.model_path()) == parts.model);
    CHECK(verify_bundle(full.root).ok);
    const auto reopened = open_bundle(full.root);
    CHECK(reopened.manifest.channels == parts.layout.channels);
    CHECK(parse_manifest(format_manifest(reopened.manifest)).files.size() == reopened.manifest.files.size());

    // Rewriting replaces the bundle; unrelated directories are refused.
    CHECK(write_bundle(tmp / "full", parts).manifest.files.size() == full.manifest.files.size());
    std::filesystem::create_directories(tmp / "other");
    write_text_file(tmp / "other" / "keep.txt", "x");
    CHECK_THROWS_AS(write_bundle(tmp / "other", parts), Error);
    CHECK(std::filesystem::exists(tmp / "other" / "keep.txt"));
  }

  TEST_CASE("any single-byte corruption is detected") {
    TempDir tmp("corrupt");
    write_text_file(tmp / "a.wav", std::string(64, 'w'));
    BundleParts parts;
    parts.model = std::string(200, 'm');
    parts.segmentation = "0 0.5 a\n";
    parts.layout.channels = {"A"};
    parts.audio = {tmp / "a.wav"};
    const auto b = write_bundle(tmp / "b", parts);
    for (const auto& e : b.manifest.files) {
      const auto p = b.root / e.path;
      const auto size = std::filesystem::file_size(p);
      for (std::size_t at : {std::size_t{0}, static_cast<std::size_t>(size / 2), static_cast<std::size_t>(size - 1)}) {
        flip_byte(p, at);
        CHECK_FALSE(verify_bundle(b.root).ok);
        flip_byte(p, at);
        CHECK(verify_bundle(b.root).ok);
      }
    }
    write_text_file(b.root / "extra.txt", "x");
    CHECK_FALSE(verify_bundle(b.root).ok);
    std::filesystem::remove(b.root / "extra.txt");
    std::filesystem::remove(b.root / "segmentation.txt");
    CHECK_FALSE(verify_bundle(b.root).ok);
  }

  TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }
}
