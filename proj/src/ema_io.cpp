#include "emarig/ema_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "emarig/error.hpp"
#include "emarig/kv_config.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "ema_io";

float load_f32(const std::uint8_t* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void store_f32(std::uint8_t* p, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  p[0] = static_cast<std::uint8_t>(bits);
  p[1] = static_cast<std::uint8_t>(bits >> 8);
  p[2] = static_cast<std::uint8_t>(bits >> 16);
  p[3] = static_cast<std::uint8_t>(bits >> 24);
}

// Conversions divide/multiply by the exact on-disk factor so that
// float -> double -> float is the identity.
double disk_to_cm(float v, PosUnits u) { return u == PosUnits::MmDeg ? double(v) / 10.0 : v; }
float cm_to_disk(double v, PosUnits u) {
  return static_cast<float>(u == PosUnits::MmDeg ? v * 10.0 : v);
}
double disk_to_rad(float v, PosUnits u) {
  return u == PosUnits::MmDeg ? double(v) * std::numbers::pi / 180.0 : v;
}
float rad_to_disk(double v, PosUnits u) {
  return static_cast<float>(u == PosUnits::MmDeg ? v * 180.0 / std::numbers::pi : v);
}

}  // namespace

bool is_finite(const CoilSample& s) {
  return s.position.allFinite() && std::isfinite(s.phi) && std::isfinite(s.theta) &&
         std::isfinite(s.rms) && std::isfinite(s.extra);
}

void PosLayout::validate() const {
  if (channels.empty()) throw Error(kModule, "BadLayout", "layout declares no channels");
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
    throw Error(kModule, "BadLayout", fmt::format("sample rate must be positive, got {}", rate_hz));
  }
  std::set<std::string> seen;
  for (const auto& c : channels) {
    if (!seen.insert(c).second) {
      throw Error(kModule, "BadLayout", fmt::format("duplicate channel name '{}'", c));
    }
  }
}

PosLayout parse_layout(std::string_view text) {
  const auto kv = KeyValueFile::parse(text, kModule);
  PosLayout layout;
  layout.channels = kv.get_list("channels");
  layout.rate_hz = kv.get_double("rate_hz", 200.0);
  const auto units = kv.get("units").value_or("mm_deg");
  if (units == "mm_deg") {
    layout.units = PosUnits::MmDeg;
  } else if (units == "cm_rad") {
    layout.units = PosUnits::CmRad;
  } else {
    throw Error(kModule, "BadLayout", fmt::format("unknown units '{}'", units));
  }
  layout.validate();
  return layout;
}

std::string format_layout(const PosLayout& layout) {
  std::string out = "channels = ";
  for (std::size_t i = 0; i < layout.channels.size(); ++i) {
    if (i) out += ',';
    out += layout.channels[i];
  }
  out += fmt::format("\nrate_hz = {}\nunits = {}\n", layout.rate_hz,
                     layout.units == PosUnits::MmDeg ? "mm_deg" : "cm_rad");
  return out;
}

std::optional<std::size_t> EmaSweep::find_channel(std::string_view name) const {
  const auto it = std::find(channels.begin(), channels.end(), name);
  if (it == channels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - channels.begin());
}

std::size_t EmaSweep::channel_index(std::string_view name) const {
  if (auto i = find_channel(name)) return *i;
  throw Error(kModule, "UnknownChannel", fmt::format("sweep has no channel '{}'", name));
}

EmaSweep read_pos(std::span<const std::uint8_t> bytes, const PosLayout& layout) {
  layout.validate();
  const std::size_t frame_bytes = layout.channels.size() * kBytesPerChannel;
  if (bytes.size() % frame_bytes != 0) {
    throw Error(kModule, "TruncatedFrame",
                fmt::format("{} bytes is not a multiple of the {}-byte frame", bytes.size(),
                            frame_bytes));
  }
  EmaSweep sweep;
  sweep.rate_hz = layout.rate_hz;
  sweep.channels = layout.channels;
  const std::size_t count = bytes.size() / kBytesPerChannel;
  sweep.samples.resize(count);
  const auto u = layout.units;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + i * kBytesPerChannel;
    CoilSample& s = sweep.samples[i];
    s.position = Vec3(disk_to_cm(load_f32(p), u), disk_to_cm(load_f32(p + 4), u),
                      disk_to_cm(load_f32(p + 8), u));
    s.phi = disk_to_rad(load_f32(p + 12), u);
    s.theta = disk_to_rad(load_f32(p + 16), u);
    s.rms = load_f32(p + 20);
    s.extra = load_f32(p + 24);
    s.valid = is_finite(s) && s.rms >= 0.0f;
  }
  return sweep;
}

std::vector<std::uint8_t> write_pos(const EmaSweep& sweep, const PosLayout& layout) {
  if (sweep.channels != layout.channels) {
    throw Error(kModule, "ChannelMismatch", "sweep channels do not match the layout");
  }
  if (sweep.samples.size() % std::max<std::size_t>(1, sweep.channels.size()) != 0) {
    throw Error(kModule, "ChannelMismatch", "sample count is not a whole number of frames");
  }
  std::vector<std::uint8_t> out(sweep.samples.size() * kBytesPerChannel);
  const auto u = layout.units;
  for (std::size_t i = 0; i < sweep.samples.size(); ++i) {
    std::uint8_t* p = out.data() + i * kBytesPerChannel;
    const CoilSample& s = sweep.samples[i];
    store_f32(p, cm_to_disk(s.position.x(), u));
    store_f32(p + 4, cm_to_disk(s.position.y(), u));
    store_f32(p + 8, cm_to_disk(s.position.z(), u));
    store_f32(p + 12, rad_to_disk(s.phi, u));
    store_f32(p + 16, rad_to_disk(s.theta, u));
    store_f32(p + 20, s.rms);
    store_f32(p + 24, s.extra);
  }
  return out;
}

EmaSweep read_pos_file(const std::filesystem::path& path, const PosLayout& layout) {
  auto sweep = read_pos(read_file_bytes(path), layout);
  sweep.sweep_id = path.stem().string();
  return sweep;
}

void write_pos_file(const std::filesystem::path& path, const EmaSweep& sweep,
                    const PosLayout& layout) {
  write_file_bytes(path, write_pos(sweep, layout));
}

Vec3 orientation_vector(double phi, double theta) {
  const double ct = std::cos(theta);
  return Vec3(ct * std::cos(phi), ct * std::sin(phi), std::sin(theta));
}

std::pair<double, double> orientation_angles(const Vec3& d) {
  const double phi = std::atan2(d.y(), d.x());
  const double theta = std::atan2(d.z(), std::hypot(d.x(), d.y()));
  return {phi, theta};
}

void CoilRoles::resolve(std::span<const std::string> channels) {
  auto known = [&](const std::string& name) {
    return std::find(channels.begin(), channels.end(), name) != channels.end();
  };
  if (reference.size() != 3) {
    throw Error(kModule, "BadRoles",
                fmt::format("exactly 3 reference coils required, got {}", reference.size()));
  }
  if (tongue.size() > 8) {
    throw Error(kModule, "BadRoles",
                fmt::format("at most 8 tongue coils allowed, got {}", tongue.size()));
  }
  std::set<std::string> used;
  auto claim = [&](const std::string& name, const char* role) {
    if (!known(name)) {
      throw Error(kModule, "BadRoles",
                  fmt::format("{} coil '{}' is not a channel of the layout", role, name));
    }
    if (!used.insert(name).second) {
      throw Error(kModule, "BadRoles", fmt::format("coil '{}' is assigned two roles", name));
    }
  };
  for (const auto& r : reference) claim(r, "reference");
  if (jaw) claim(*jaw, "jaw");
  for (const auto& t : tongue) claim(t, "tongue");
  ignored.clear();
  for (const auto& c : channels) {
    if (!used.count(c)) ignored.push_back(c);
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "IoError", fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "IoError", fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "IoError", fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "IoError", fmt::format("write to '{}' failed", path.string()));
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace emarig
