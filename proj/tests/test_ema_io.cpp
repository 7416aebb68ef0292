#include <doctest.h>

#include <cmath>
#include <numbers>

#include "emarig/ema_io.hpp"
#include "emarig/error.hpp"
#include "support.hpp"

using namespace emarig;
using emarig::test::error_code;
using emarig::test::uniform;
using emarig::test::uniform_int;

namespace {

PosLayout layout_of(std::size_t channels, PosUnits units = PosUnits::MmDeg) {
  PosLayout l;
  for (std::size_t c = 0; c < channels; ++c) l.channels.push_back("C" + std::to_string(c));
  l.units = units;
  return l;
}

float f32_at(const std::vector<std::uint8_t>& b, std::size_t i) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(b[i * 4 + k]) << (8 * k);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

TEST_SUITE("ema_io") {
  TEST_CASE("twelve channels, one frame") {
    const auto layout = layout_of(12);
    const auto bytes = test::random_pos_bytes(12, 1);
    REQUIRE(bytes.size() == 12 * 28);
    const auto sweep = read_pos(bytes, layout);
    CHECK(sweep.frame_count() == 1);
    CHECK(sweep.channel_count() == 12);
    CHECK(sweep.samples.size() == 12);
  }

  TEST_CASE("empty stream gives an empty sweep") {
    const auto sweep = read_pos({}, layout_of(3));
    CHECK(sweep.frame_count() == 0);
    CHECK(write_pos(sweep, layout_of(3)).empty());
  }

  TEST_CASE("truncated frame") {
    std::vector<std::uint8_t> bytes(28 * 2 + 4);
    CHECK(error_code([&] { read_pos(bytes, layout_of(2)); }) == "TruncatedFrame");
  }

  TEST_CASE("bad layout") {
    PosLayout empty;
    CHECK(error_code([&] { read_pos({}, empty); }) == "BadLayout");
    auto l = layout_of(2);
    l.rate_hz = 0.0;
    CHECK(error_code([&] { read_pos({}, l); }) == "BadLayout");
    CHECK(error_code([&] { parse_layout("channels = A,A\n"); }) == "BadLayout");
    CHECK(error_code([&] { parse_layout("channels = A\nunits = furlongs\n"); }) == "BadLayout");
  }

  TEST_CASE("layout sidecar round trip") {
    const auto l = parse_layout("channels = TTipC, TBladeL ,TBackC\nrate_hz = 250\nunits = cm_rad\n");
    CHECK(l.channels == std::vector<std::string>{"TTipC", "TBladeL", "TBackC"});
    CHECK(l.rate_hz == 250.0);
    CHECK(l.units == PosUnits::CmRad);
    const auto again = parse_layout(format_layout(l));
    CHECK(again.channels == l.channels);
    CHECK(again.rate_hz == l.rate_hz);
    CHECK(again.units == l.units);
  }

  TEST_CASE("unit conversion on write") {
    EmaSweep s;
    s.channels = {"C0"};
    CoilSample c;
    c.position = Vec3(1, 2, 3);
    c.phi = std::numbers::pi / 2;
    c.theta = -std::numbers::pi / 4;
    c.rms = 0.25f;
    c.extra = 7.0f;
    s.samples.push_back(c);
    const auto b = write_pos(s, layout_of(1));
    REQUIRE(b.size() == 28);
    CHECK(f32_at(b, 0) == 10.0f);
    CHECK(f32_at(b, 1) == 20.0f);
    CHECK(f32_at(b, 2) == 30.0f);
    CHECK(f32_at(b, 3) == doctest::Approx(90.0f));
    CHECK(f32_at(b, 4) == doctest::Approx(-45.0f));
    CHECK(f32_at(b, 5) == 0.25f);
    CHECK(f32_at(b, 6) == 7.0f);
  }

  TEST_CASE("channel mismatch") {
    EmaSweep s;
    s.channels = {"X"};
    s.samples.resize(1);
    CHECK(error_code([&] { write_pos(s, layout_of(1)); }) == "ChannelMismatch");
  }

  TEST_CASE("write(read(bytes)) is the identity on random streams") {
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t ch = static_cast<std::size_t>(uniform_int(1, 12));
      const std::size_t fr = static_cast<std::size_t>(uniform_int(0, 40));
      const auto units = uniform_int(0, 1) ? PosUnits::MmDeg : PosUnits::CmRad;
      const auto layout = layout_of(ch, units);
      const auto bytes = test::random_pos_bytes(ch, fr);
      const auto sweep = read_pos(bytes, layout);
      CHECK(sweep.samples.size() * 28 == bytes.size());
      REQUIRE(write_pos(sweep, layout) == bytes);
    }
  }

  TEST_CASE("read(write(sweep)) reproduces values within the exact inverse conversion") {
    const auto layout = layout_of(4);
    const auto sweep = read_pos(test::random_pos_bytes(4, 30), layout);
    const auto again = read_pos(write_pos(sweep, layout), layout);
    REQUIRE(again.samples.size() == sweep.samples.size());
    for (std::size_t i = 0; i < sweep.samples.size(); ++i) {
      const auto& a = sweep.samples[i];
      const auto& b = again.samples[i];
      CHECK(a.valid == b.valid);
      if (!a.valid) continue;
      CHECK(a.position == b.position);
      CHECK(a.phi == b.phi);
      CHECK(a.theta == b.theta);
      CHECK(std::memcmp(&a.rms, &b.rms, 4) == 0);
      CHECK(std::memcmp(&a.extra, &b.extra, 4) == 0);
    }
  }

  TEST_CASE("non-finite or negative-rms samples are flagged, not rejected") {
    auto bytes = test::random_pos_bytes(1, 2);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    const float neg = -1.0f;
    std::memcpy(bytes.data(), &nan, 4);           // frame 0 x
    std::memcpy(bytes.data() + 28 + 20, &neg, 4);  // frame 1 rms
    const auto sweep = read_pos(bytes, layout_of(1));
    CHECK_FALSE(sweep.samples[0].valid);
    CHECK_FALSE(sweep.samples[1].valid);
  }

  TEST_CASE("orientation vector convention") {
    auto close = [](const Vec3& a, const Vec3& b) { return (a - b).norm() < 1e-15; };
    CHECK(close(orientation_vector(0, 0), Vec3(1, 0, 0)));
    CHECK(close(orientation_vector(std::numbers::pi / 2, 0), Vec3(0, 1, 0)));
    CHECK(close(orientation_vector(0, std::numbers::pi / 2), Vec3(0, 0, 1)));
    for (int i = 0; i < 1000; ++i) {
      const double phi = uniform(-10, 10);
      const double theta = uniform(-10, 10);
      const Vec3 v = orientation_vector(phi, theta);
      CHECK(std::abs(v.norm() - 1.0) < 1e-12);
      const auto [p2, t2] = orientation_angles(v);
      CHECK((orientation_vector(p2, t2) - v).norm() < 1e-12);
    }
  }

  TEST_CASE("coil roles") {
    const std::vector<std::string> ch{"R1", "R2", "R3", "J", "T1", "T2", "X"};
    CoilRoles r;
    r.reference = {"R1", "R2", "R3"};
    r.jaw = "J";
    r.tongue = {"T1", "T2"};
    r.resolve(ch);
    CHECK(r.ignored == std::vector<std::string>{"X"});

    CoilRoles two = r;
    two.reference = {"R1", "R2"};
    CHECK(error_code([&] { two.resolve(ch); }) == "BadRoles");
    CoilRoles missing = r;
    missing.tongue = {"T9"};
    CHECK(error_code([&] { missing.resolve(ch); }) == "BadRoles");
    CoilRoles overlap = r;
    overlap.tongue = {"R1"};
    CHECK(error_code([&] { overlap.resolve(ch); }) == "BadRoles");
  }
}
