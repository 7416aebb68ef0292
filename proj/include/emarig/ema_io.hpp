#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emarig/geometry.hpp"

namespace emarig {

// One coil reading. Internal units: centimeters and radians.
struct CoilSample {
  Vec3 position = Vec3::Zero();
  double phi = 0.0;    // azimuth from +x in the xy-plane
  double theta = 0.0;  // elevation toward +z
  float rms = 0.0f;    // kept as float so the on-disk bits survive a round trip
  float extra = 0.0f;  // opaque
  bool valid = true;
};

bool is_finite(const CoilSample& s);

enum class PosUnits { MmDeg, CmRad };

struct PosLayout {
  std::vector<std::string> channels;
  double rate_hz = 200.0;
  PosUnits units = PosUnits::MmDeg;

  void validate() const;  // BadLayout
};

PosLayout parse_layout(std::string_view text);
std::string format_layout(const PosLayout& layout);

struct EmaSweep {
  double rate_hz = 200.0;
  std::vector<std::string> channels;
  std::vector<CoilSample> samples;  // frame-major, channels.size() per frame
  std::string sweep_id;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t frame_count() const {
    return channels.empty() ? 0 : samples.size() / channels.size();
  }
  double duration() const { return static_cast<double>(frame_count()) / rate_hz; }

  CoilSample& at(std::size_t frame, std::size_t channel) {
    return samples[frame * channels.size() + channel];
  }
  const CoilSample& at(std::size_t frame, std::size_t channel) const {
    return samples[frame * channels.size() + channel];
  }
  std::span<const CoilSample> frame(std::size_t i) const {
    return {samples.data() + i * channels.size(), channels.size()};
  }

  std::optional<std::size_t> find_channel(std::string_view name) const;
  std::size_t channel_index(std::string_view name) const;  // throws UnknownChannel
};

// Headerless frame-major stream: per channel x,y,z,phi,theta,rms,extra as
// little-endian float32.
inline constexpr std::size_t kValuesPerChannel = 7;
inline constexpr std::size_t kBytesPerChannel = kValuesPerChannel * 4;

EmaSweep read_pos(std::span<const std::uint8_t> bytes, const PosLayout& layout);
std::vector<std::uint8_t> write_pos(const EmaSweep& sweep, const PosLayout& layout);

EmaSweep read_pos_file(const std::filesystem::path& path, const PosLayout& layout);
void write_pos_file(const std::filesystem::path& path, const EmaSweep& sweep,
                    const PosLayout& layout);

Vec3 orientation_vector(double phi, double theta);
// Inverse of orientation_vector for a non-zero direction.
std::pair<double, double> orientation_angles(const Vec3& direction);

struct CoilRoles {
  std::vector<std::string> reference;  // exactly three
  std::optional<std::string> jaw;
  std::vector<std::string> tongue;     // up to eight
  std::vector<std::string> ignored;    // filled by resolve()

  // Validates the role sets against a channel list and fills `ignored`.
  void resolve(std::span<const std::string> channels);
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace emarig
