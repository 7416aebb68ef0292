#pragma once

// Helpers and independent reference implementations shared by the unit and
// acceptance suites. Nothing here calls into the code it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "emarig/anim_db.hpp"
#include "emarig/ema_io.hpp"
#include "emarig/error.hpp"
#include "emarig/geometry.hpp"
#include "emarig/unit_synth.hpp"

namespace emarig::test {

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(0x5eed1234u);
  return gen;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }
inline int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng()); }

inline Vec3 random_vec(double r) { return Vec3(uniform(-r, r), uniform(-r, r), uniform(-r, r)); }

inline Mat3 random_rotation() {
  Eigen::Quaterniond q(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
  return q.normalized().toRotationMatrix();
}

inline RigidTransform random_rigid(double max_translation = 5.0) {
  return RigidTransform{random_rotation(), random_vec(max_translation)};
}

inline Mat3 rotation_about(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

// Code of the emarig::Error thrown by fn, or "" when nothing is thrown.
template <class Fn>
std::string error_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("emarig-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Random on-disk .pos stream: finite float32 values, occasional quiet NaN
// dropouts and negative rms.
inline std::vector<std::uint8_t> random_pos_bytes(std::size_t channels, std::size_t frames) {
  std::vector<std::uint8_t> out;
  out.reserve(channels * frames * 28);
  for (std::size_t i = 0; i < channels * frames * 7; ++i) {
    float v = static_cast<float>(uniform(-400.0, 400.0));
    const int pick = uniform_int(0, 99);
    if (pick == 0) v = std::numeric_limits<float>::quiet_NaN();
    if (pick == 1) v = static_cast<float>(uniform(-1e-30, 1e-30));
    if (pick == 2) v = 0.0f;
    if (pick == 3) v = -0.0f;
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return out;
}

// Horn's closed-form quaternion solution of the absolute orientation problem.
// Independent of the SVD route used by the library.
inline RigidTransform horn_align(const std::vector<Vec3>& moving, const std::vector<Vec3>& fixed) {
  Vec3 cm = Vec3::Zero();
  Vec3 cf = Vec3::Zero();
  for (std::size_t i = 0; i < moving.size(); ++i) {
    cm += moving[i];
    cf += fixed[i];
  }
  cm /= static_cast<double>(moving.size());
  cf /= static_cast<double>(fixed.size());
  Mat3 s = Mat3::Zero();
  for (std::size_t i = 0; i < moving.size(); ++i) s += (moving[i] - cm) * (fixed[i] - cf).transpose();
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
  const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
  const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  const Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
  RigidTransform t;
  t.rotation = quat.normalized().toRotationMatrix();
  t.translation = cf - t.rotation * cm;
  return t;
}

inline double align_cost(const RigidTransform& t, const std::vector<Vec3>& moving, const std::vector<Vec3>& fixed) {
  double c = 0.0;
  for (std::size_t i = 0; i < moving.size(); ++i) c += (t.apply(moving[i]) - fixed[i]).squaredNorm();
  return c;
}

// Direct zero-phase convolution with a symmetric kernel and reflection
// padding that does not repeat the edge sample.
inline std::vector<double> direct_convolve(const std::vector<double>& x, const std::vector<double>& kernel) {
  const int n = static_cast<int>(x.size());
  const int h = static_cast<int>(kernel.size()) / 2;
  auto at = [&](int i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
    }
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> y(x.size());
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -h; k <= h; ++k) acc += kernel[static_cast<std::size_t>(k + h)] * at(i + k);
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

// Savitzky-Golay smoothing weights from the classic closed form on a
// symmetric window: least-squares fit evaluated at the centre, solved with a
// QR decomposition of the Vandermonde matrix.
inline std::vector<double> sg_reference_kernel(int window, int order) {
  const int h = window / 2;
  Eigen::MatrixXd a(window, order + 1);
  for (int i = -h; i <= h; ++i) {
    for (int p = 0; p <= order; ++p) a(i + h, p) = std::pow(static_cast<double>(i), p);
  }
  std::vector<double> w(static_cast<std::size_t>(window));
  const auto qr = a.householderQr();
  for (int j = 0; j < window; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(window);
    e(j) = 1.0;
    const Eigen::VectorXd coeffs = qr.solve(e);
    w[static_cast<std::size_t>(j)] = coeffs(0);
  }
  return w;
}

// Closed-form planar two-link IK: (shoulder, elbow) angles for both elbow
// branches, link lengths l1 and l2, target (x, y).
inline std::array<std::pair<double, double>, 2> two_link_angles(double l1, double l2, double x, double y) {
  const double d2 = x * x + y * y;
  const double c = std::clamp((d2 - l1 * l1 - l2 * l2) / (2 * l1 * l2), -1.0, 1.0);
  std::array<std::pair<double, double>, 2> out;
  for (int s = 0; s < 2; ++s) {
    const double elbow = (s == 0 ? 1.0 : -1.0) * std::acos(c);
    const double shoulder = std::atan2(y, x) - std::atan2(l2 * std::sin(elbow), l1 + l2 * std::cos(elbow));
    out[static_cast<std::size_t>(s)] = {shoulder, elbow};
  }
  return out;
}

inline double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2 * std::numbers::pi;
  return a;
}

// Cost definitions restated for the oracle.
inline double oracle_target(const AnimationUnit& u, double requested) {
  return std::abs(std::log((u.end - u.start) / requested));
}

inline double oracle_join(const AnimationUnit& l, const AnimationUnit& r, double lambda) {
  if (r.source_index == l.source_index + 1) return 0.0;
  double dp = 0.0;
  double dv = 0.0;
  for (std::size_t i = 0; i < l.last_positions.size(); ++i) {
    dp += (l.last_positions[i] - r.first_positions[i]).squaredNorm();
    dv += (l.last_velocities[i] - r.first_velocities[i]).squaredNorm();
  }
  return std::sqrt(dp) + lambda * std::sqrt(dv);
}

struct BruteForceResult {
  double total = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> sources;
};

// Enumerates every assignment; the sum is accumulated slot by slot in the
// order join-then-target so floating-point totals are comparable bit for bit.
inline BruteForceResult brute_force_select(const std::vector<AnimationUnit>& db, const SynthesisRequest& req,
                                           double lambda = 0.01) {
  std::vector<std::vector<std::size_t>> cands(req.items.size());
  for (std::size_t k = 0; k < req.items.size(); ++k) {
    for (std::size_t i = 0; i < db.size(); ++i) {
      if (db[i].label == req.items[k].label) cands[k].push_back(i);
    }
  }
  BruteForceResult best;
  std::vector<std::size_t> pick(req.items.size());
  auto rec = [&](auto&& self, std::size_t k, double acc) -> void {
    if (k == req.items.size()) {
      std::vector<std::size_t> src;
      for (std::size_t p : pick) src.push_back(db[p].source_index);
      if (acc < best.total || (acc == best.total && src < best.sources)) {
        best.total = acc;
        best.sources = src;
      }
      return;
    }
    for (std::size_t c : cands[k]) {
      pick[k] = c;
      double a = acc;
      if (k > 0) a += req.w_join * oracle_join(db[pick[k - 1]], db[c], lambda);
      a += req.w_target * oracle_target(db[c], req.items[k].duration);
      self(self, k + 1, a);
    }
  };
  rec(rec, 0, 0.0);
  return best;
}

// Random unit database with `labels` distinct labels and boundary features
// over `points` targets.
inline std::vector<AnimationUnit> random_units(int count, int labels, int points = 7) {
  std::vector<AnimationUnit> db;
  double t = 0.0;
  for (int i = 0; i < count; ++i) {
    AnimationUnit u;
    u.label = std::string(1, static_cast<char>('a' + uniform_int(0, labels - 1)));
    u.start = t;
    u.end = t + uniform(0.03, 0.3);
    t = u.end;
    for (int p = 0; p < points; ++p) {
      u.first_positions.push_back(random_vec(1.0));
      u.last_positions.push_back(random_vec(1.0));
      u.first_velocities.push_back(random_vec(10.0));
      u.last_velocities.push_back(random_vec(10.0));
    }
    u.source_index = static_cast<std::size_t>(i);
    db.push_back(u);
  }
  return db;
}

}  // namespace emarig::test
