#include "emarig/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "emarig/error.hpp"
#include "emarig/motion_prep.hpp"

namespace fs = std::filesystem;

namespace emarig {

namespace {

// std::uniform_real_distribution is not specified bit-for-bit across
// standard libraries, so the mapping to [0, 1) is done by hand.
class Rng {
 public:
  explicit Rng(std::uint32_t seed) : gen_(seed) {}
  double uniform() {
    const std::uint64_t a = gen_() >> 5;
    const std::uint64_t b = gen_() >> 6;
    return static_cast<double>(a * 67108864ULL + b) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  Vec3 in_ball(double r) {
    while (true) {
      const Vec3 v(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
      if (v.squaredNorm() <= 1.0) return r * v;
    }
  }

 private:
  std::mt19937 gen_;
};

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

Mat3 axis_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

// 0 -> 1 with zero slope at both ends.
double ease(double u) { return 0.5 - 0.5 * std::cos(std::numbers::pi * std::clamp(u, 0.0, 1.0)); }

const std::vector<std::string> kLabels{"a", "e", "i", "o", "u", "t", "d", "k", "s", "l", "n", "m"};

struct LabelShape {
  std::map<std::string, Vec3> tongue;  // displacement per coil, cm
  double jaw = 0.0;                    // fraction of the full opening
};

CoilSample make_sample(const Vec3& p, const Vec3& dir, float rms) {
  CoilSample s;
  s.position = p;
  const auto [phi, theta] = orientation_angles(dir);
  s.phi = phi;
  s.theta = theta;
  s.rms = rms;
  return s;
}

std::string wav_bytes(double seconds) {
  const std::uint32_t rate = 16000;
  const auto samples = static_cast<std::uint32_t>(seconds * rate);
  const std::uint32_t data = samples * 2;
  std::string out;
  auto u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
  };
  auto u16 = [&out](std::uint16_t v) {
    out += static_cast<char>(v & 0xff);
    out += static_cast<char>(v >> 8);
  };
  out += "RIFF";
  u32(36 + data);
  out += "WAVEfmt ";
  u32(16);
  u16(1);
  u16(1);
  u32(rate);
  u32(rate * 2);
  u16(2);
  u16(16);
  out += "data";
  u32(data);
  out.append(data, '\0');
  return out;
}

}  // namespace

std::string default_rig_graph() {
  return "digraph tongue {\n"
         "  TRoot -> TBackC;\n"
         "  TBackC -> TMidC;\n"
         "  TMidC -> TTipC;\n"
         "  TBackC -> TMidL;\n"
         "  TMidL -> TBladeL;\n"
         "  TBackC -> TMidR;\n"
         "  TMidR -> TBladeR;\n"
         "}\n";
}

Fixture make_fixture(const FixtureParams& p) {
  if (p.sweeps < 1 || !(p.seconds_per_sweep > 0.0) || !(p.rate_hz > 0.0)) {
    throw Error("fixture", "BadParams", "need at least one sweep of positive length");
  }
  Rng rng(p.seed);
  Fixture fx;
  fx.reference = {"RefNose", "RefLeftEar", "RefRightEar"};
  fx.jaw = "Jaw";
  fx.tongue = {"TTipC", "TBladeL", "TBladeR", "TMidC", "TMidL", "TMidR", "TBackC"};
  fx.rig_graph = default_rig_graph();

  // Channel order mixes roles the way a session layout would.
  std::vector<std::string> channels{"RefNose", "TTipC", "TBladeL", "TBladeR", "TMidC", "TMidL",
                                    "TMidR",   "TBackC", "Jaw",     "RefLeftEar", "RefRightEar"};
  if (p.extra_coil) channels.insert(channels.begin() + 9, "ULip");
  fx.layout.channels = channels;
  fx.layout.rate_hz = p.rate_hz;
  fx.layout.units = PosUnits::MmDeg;

  fx.ema_from_mesh.rotation = axis_rotation(Vec3::UnitZ(), radians(20.0)) * axis_rotation(Vec3::UnitX(), radians(-6.0));
  fx.ema_from_mesh.translation = Vec3(1.2, -0.4, 3.0);
  const RigidTransform& place = fx.ema_from_mesh;

  const SkinnedMesh mesh = generate_default_mesh(p.mesh);
  const auto seeds = default_seed_points(mesh, p.mesh);

  // Mesh-space positions and coil axes at rest.
  std::map<std::string, Vec3> rest;
  std::map<std::string, Vec3> axis;
  for (const auto& name : fx.tongue) {
    rest[name] = seeds.at(name);
    axis[name] = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0).normalized();
  }
  rest["RefNose"] = Vec3(6.5, 0.0, 3.5);
  rest["RefLeftEar"] = Vec3(-3.0, 7.0, 2.5);
  rest["RefRightEar"] = Vec3(-3.0, -7.0, 2.5);
  rest["Jaw"] = Vec3(3.2, 0.0, 0.0);
  rest["ULip"] = Vec3(4.6, 0.0, 2.2);
  for (const char* n : {"RefNose", "RefLeftEar", "RefRightEar", "ULip"}) axis[n] = Vec3(1.0, 0.0, 0.1).normalized();
  axis["Jaw"] = Vec3(1.0, 0.0, 0.3).normalized();
  const Vec3 hinge(-2.0, 0.0, 0.8);

  std::map<std::string, LabelShape> shapes;
  shapes["sil"] = LabelShape{};
  for (const auto& l : kLabels) {
    LabelShape s;
    for (const auto& name : fx.tongue) s.tongue[name] = rng.in_ball(p.deformation_cm);
    s.jaw = rng.uniform(0.0, 1.0);
    shapes[l] = s;
  }

  const auto frames = static_cast<std::size_t>(std::llround(p.seconds_per_sweep * p.rate_hz));
  for (int sw = 0; sw < p.sweeps; ++sw) {
    // Frame-aligned segments: silence, random phones, silence.
    SegmentTier tier;
    std::vector<std::size_t> bounds{0};
    std::vector<std::string> labels;
    const auto sil = static_cast<std::size_t>(std::llround(0.1 * p.rate_hz));
    bounds.push_back(std::min(frames, sil));
    labels.emplace_back("sil");
    while (bounds.back() + sil < frames) {
      const auto len = static_cast<std::size_t>(std::llround(rng.uniform(0.06, 0.22) * p.rate_hz));
      const std::size_t end = std::min(bounds.back() + std::max<std::size_t>(len, 1), frames - sil);
      if (end <= bounds.back()) break;
      bounds.push_back(end);
      labels.push_back(kLabels[static_cast<std::size_t>(rng.uniform() * kLabels.size()) % kLabels.size()]);
    }
    if (bounds.back() < frames) {
      bounds.push_back(frames);
      labels.emplace_back("sil");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      tier.segments.push_back(Segment{static_cast<double>(bounds[i]) / p.rate_hz,
                                      static_cast<double>(bounds[i + 1]) / p.rate_hz, labels[i]});
    }

    // Per-frame shape: ease from the previous label's shape over the first
    // half of each segment, then hold.
    auto shape_at = [&](std::size_t f, const std::string& coil) -> std::pair<Vec3, double> {
      std::size_t seg = 0;
      while (seg + 1 < labels.size() && f >= bounds[seg + 1]) ++seg;
      const auto& cur = shapes.at(labels[seg]);
      const auto& prev = shapes.at(seg == 0 ? std::string("sil") : labels[seg - 1]);
      const double len = static_cast<double>(bounds[seg + 1] - bounds[seg]);
      const double w = ease(static_cast<double>(f - bounds[seg]) / std::max(1.0, 0.5 * len));
      Vec3 d = Vec3::Zero();
      if (!coil.empty()) {
        const Vec3 a = prev.tongue.count(coil) ? prev.tongue.at(coil) : Vec3::Zero();
        const Vec3 b = cur.tongue.count(coil) ? cur.tongue.at(coil) : Vec3::Zero();
        d = (1.0 - w) * a + w * b;
      }
      return {d, (1.0 - w) * prev.jaw + w * cur.jaw};
    };

    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    EmaSweep truth;
    truth.rate_hz = p.rate_hz;
    truth.channels = channels;
    truth.sweep_id = fmt::format("sweep{}", sw + 1);
    truth.samples.reserve(frames * channels.size());
    std::vector<RigidTransform> head(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      const double t = static_cast<double>(f) / p.rate_hz;
      const double ramp = std::min(1.0, t / 0.1);
      const double jaw_angle = radians(p.jaw_opening_deg) * shape_at(f, "").second;
      const Mat3 jaw_rot = axis_rotation(Vec3::UnitY(), jaw_angle);
      for (const auto& name : channels) {
        Vec3 pos = rest.at(name);
        Vec3 dir = axis.at(name);
        float rms = 0.0f;
        if (std::find(fx.tongue.begin(), fx.tongue.end(), name) != fx.tongue.end()) {
          pos += shape_at(f, name).first + ramp * rng.in_ball(p.noise_cm);
          rms = static_cast<float>(0.4 + 0.2 * rng.uniform());
        } else if (name == fx.jaw) {
          pos = hinge + jaw_rot * (pos - hinge);
          dir = jaw_rot * dir;
          rms = static_cast<float>(0.4 + 0.2 * rng.uniform());
        } else if (name == "ULip") {
          pos += Vec3(0.0, 0.0, 0.1 * std::sin(2.0 * std::numbers::pi * 1.3 * t + phase));
          rms = 0.5f;
        } else {
          rms = 0.3f;
        }
        truth.samples.push_back(make_sample(place.apply(pos), place.rotate(dir), rms));
      }
      if (p.head_motion) {
        // Starts at the identity so the first frame is the reference pose.
        const double s = std::sin(std::numbers::pi * t / p.seconds_per_sweep);
        const double wob = std::sin(2.0 * std::numbers::pi * 0.7 * t + phase);
        const double a = radians(p.head_rotation_deg) * s * s;
        const Mat3 r = axis_rotation(Vec3(0.3, 1.0, 0.2 * wob), a);
        const Vec3 c = place.apply(Vec3(-1.5, 0.0, 2.0));  // rotate about a point inside the head
        head[f].rotation = r;
        head[f].translation = c - r * c + p.head_translation_cm * s * Vec3(0.6, -0.3 * wob, 0.5);
      }
    }

    EmaSweep recorded = truth;
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t c = 0; c < channels.size(); ++c) {
        recorded.at(f, c) = transform_sample(truth.at(f, c), head[f]);
      }
    }
    if (p.dropouts && sw == 0 && frames > 60) {
      const auto ch = recorded.channel_index(kFixtureDropoutCoil);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t f = frames / 3; f < frames / 3 + 4; ++f) {
        auto& s = recorded.at(f, ch);
        s.position = Vec3(nan, nan, nan);
        s.phi = nan;
        s.theta = nan;
        s.valid = false;
        fx.dropout_frames.emplace_back(0, f);
      }
    }
    fx.sweeps.push_back(std::move(recorded));
    fx.head_fixed.push_back(std::move(truth));
    fx.head_motion.push_back(std::move(head));
    fx.tiers.push_back(std::move(tier));
  }
  return fx;
}

fs::path write_fixture(const Fixture& fx, const fs::path& dir, const FixtureParams& p) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("io", "IoError", fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  std::vector<std::string> pos;
  std::vector<std::string> seg;
  std::vector<std::string> wav;
  for (std::size_t i = 0; i < fx.sweeps.size(); ++i) {
    const auto stem = fmt::format("sweep{}", i + 1);
    write_pos_file(dir / (stem + ".pos"), fx.sweeps[i], fx.layout);
    write_text_file(dir / (stem + ".seg"), format_segmentation(fx.tiers[i]));
    write_text_file(dir / (stem + ".wav"), wav_bytes(0.05));
    pos.push_back(stem + ".pos");
    seg.push_back(stem + ".seg");
    wav.push_back(stem + ".wav");
  }
  write_text_file(dir / "layout.cfg", format_layout(fx.layout));
  write_text_file(dir / "tongue.dot", fx.rig_graph);

  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  std::string cfg;
  cfg += "# Synthetic EMA fixture. Relative paths resolve against this file.\n";
  cfg += "[input]\n";
  cfg += fmt::format("ema = {}\n", list(pos));
  cfg += "layout = layout.cfg\n";
  cfg += "rig_graph = tongue.dot\n";
  cfg += fmt::format("segmentation = {}\n", list(seg));
  cfg += fmt::format("audio = {}\n", list(wav));
  cfg += "\n[roles]\n";
  cfg += fmt::format("reference = {}\n", list(fx.reference));
  cfg += fmt::format("jaw = {}\n", fx.jaw);
  cfg += fmt::format("tongue = {}\n", list(fx.tongue));
  cfg += "\n[smoothing]\nkind = moving_average\nwindow = 9\n";
  cfg += "\n[ik]\ntolerance = 0.001\nmax_iterations = 50\ns_min = 0.5\ns_max = 2\n";
  cfg += "\n[mesh]\n";
  cfg += fmt::format("length = {}\nwidth = {}\nheight = {}\nrings = {}\nsegments = {}\narch_segments = {}\n",
                     p.mesh.length, p.mesh.width, p.mesh.height, p.mesh.rings, p.mesh.segments,
                     p.mesh.arch_segments);
  cfg += "\n[synth]\nw_target = 1\nw_join = 1\nlambda = 0.01\nblend = 0.04\n";
  const auto path = dir / "pipeline.cfg";
  write_text_file(path, cfg);
  return path;
}

}  // namespace emarig
