#include "emarig/motion_prep.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "emarig/error.hpp"

namespace emarig {

namespace {
constexpr const char* kModule = "motion_prep";
}

RigidTransform rigid_align(std::span<const Vec3> moving, std::span<const Vec3> fixed) {
  const auto fit = detail::procrustes(moving, fixed, false, kModule);
  return RigidTransform{fit.rotation, fit.translation};
}

CoilSample transform_sample(const CoilSample& s, const RigidTransform& t) {
  CoilSample out = s;
  out.position = t.apply(s.position);
  const auto [phi, theta] = orientation_angles(t.rotate(orientation_vector(s.phi, s.theta)));
  out.phi = phi;
  out.theta = theta;
  return out;
}

std::optional<std::size_t> first_valid_reference_frame(const EmaSweep& sweep,
                                                       const CoilRoles& roles) {
  std::array<std::size_t, 3> idx{};
  for (int k = 0; k < 3; ++k) idx[k] = sweep.channel_index(roles.reference.at(k));
  for (std::size_t f = 0; f < sweep.frame_count(); ++f) {
    if (sweep.at(f, idx[0]).valid && sweep.at(f, idx[1]).valid && sweep.at(f, idx[2]).valid) {
      return f;
    }
  }
  return std::nullopt;
}

std::array<Vec3, 3> reference_points(const EmaSweep& sweep, const CoilRoles& roles,
                                     std::size_t frame) {
  std::array<Vec3, 3> out;
  for (int k = 0; k < 3; ++k) {
    out[k] = sweep.at(frame, sweep.channel_index(roles.reference.at(k))).position;
  }
  return out;
}

EmaSweep normalize_head(const EmaSweep& sweep, const CoilRoles& roles,
                        const std::optional<std::array<Vec3, 3>>& reference) {
  if (roles.reference.size() != 3) {
    throw Error(kModule, "BadRoles", "exactly 3 reference coils required");
  }
  std::array<std::size_t, 3> idx{};
  for (int k = 0; k < 3; ++k) idx[k] = sweep.channel_index(roles.reference[k]);

  std::array<Vec3, 3> target;
  if (reference) {
    target = *reference;
  } else {
    const auto first = first_valid_reference_frame(sweep, roles);
    if (!first) {
      if (sweep.frame_count() == 0) return sweep;
      throw Error(kModule, "NoValidReferenceFrame",
                  fmt::format("sweep '{}' has no frame with all reference coils valid",
                              sweep.sweep_id));
    }
    target = reference_points(sweep, roles, *first);
  }

  EmaSweep out = sweep;
  const std::size_t channels = sweep.channel_count();
  for (std::size_t f = 0; f < sweep.frame_count(); ++f) {
    const bool refs_valid =
        sweep.at(f, idx[0]).valid && sweep.at(f, idx[1]).valid && sweep.at(f, idx[2]).valid;
    if (!refs_valid) {
      for (std::size_t c = 0; c < channels; ++c) out.at(f, c).valid = false;
      continue;
    }
    const std::array<Vec3, 3> moving{sweep.at(f, idx[0]).position, sweep.at(f, idx[1]).position,
                                     sweep.at(f, idx[2]).position};
    RigidTransform t;
    try {
      t = rigid_align(moving, target);
    } catch (const Error& e) {
      throw Error(kModule, e.code(), fmt::format("sweep '{}' frame {}: {}", sweep.sweep_id, f,
                                                 e.message()));
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const CoilSample& s = sweep.at(f, c);
      if (s.valid) out.at(f, c) = transform_sample(s, t);
    }
  }
  return out;
}

EmaSweep flag_dropouts(const EmaSweep& sweep, double rms_ceiling) {
  EmaSweep out = sweep;
  for (auto& s : out.samples) {
    if (!is_finite(s) || static_cast<double>(s.rms) > rms_ceiling) s.valid = false;
  }
  return out;
}

EmaSweep fill_dropouts(const EmaSweep& sweep) {
  EmaSweep out = sweep;
  const std::size_t frames = sweep.frame_count();
  for (std::size_t c = 0; c < sweep.channel_count(); ++c) {
    std::vector<std::size_t> valid;
    for (std::size_t f = 0; f < frames; ++f) {
      if (sweep.at(f, c).valid) valid.push_back(f);
    }
    if (valid.size() == frames) continue;
    if (valid.empty()) {
      throw Error(kModule, "AllInvalidChannel",
                  fmt::format("sweep '{}' channel '{}' has no valid sample", sweep.sweep_id,
                              sweep.channels[c]));
    }
    std::size_t next = 0;  // index into `valid` of the first valid frame >= f
    for (std::size_t f = 0; f < frames; ++f) {
      while (next < valid.size() && valid[next] < f) ++next;
      if (next < valid.size() && valid[next] == f) continue;

      CoilSample filled;
      if (next == 0) {
        filled = sweep.at(valid.front(), c);
      } else if (next == valid.size()) {
        filled = sweep.at(valid.back(), c);
      } else {
        const CoilSample& a = sweep.at(valid[next - 1], c);
        const CoilSample& b = sweep.at(valid[next], c);
        const double w = static_cast<double>(f - valid[next - 1]) /
                         static_cast<double>(valid[next] - valid[next - 1]);
        filled = a;
        filled.position = (1.0 - w) * a.position + w * b.position;
        const Vec3 oa = orientation_vector(a.phi, a.theta);
        const Vec3 ob = orientation_vector(b.phi, b.theta);
        const Vec3 o = (1.0 - w) * oa + w * ob;
        if (o.norm() > 1e-12) {
          const auto [phi, theta] = orientation_angles(o);
          filled.phi = phi;
          filled.theta = theta;
        }
        filled.rms = static_cast<float>((1.0 - w) * a.rms + w * b.rms);
      }
      filled.valid = true;
      out.at(f, c) = filled;
    }
  }
  return out;
}

void SmoothingSpec::validate() const {
  if (kind == SmoothingKind::None) return;
  if (window_frames < 1 || window_frames % 2 == 0) {
    throw Error(kModule, "BadSmoothing",
                fmt::format("window_frames must be odd and positive, got {}", window_frames));
  }
  if (kind == SmoothingKind::SavitzkyGolay &&
      (polynomial_order < 0 || polynomial_order >= window_frames)) {
    throw Error(kModule, "BadSmoothing",
                fmt::format("polynomial_order must be in [0, {}), got {}", window_frames,
                            polynomial_order));
  }
}

SmoothingKind parse_smoothing_kind(std::string_view name) {
  if (name == "none") return SmoothingKind::None;
  if (name == "moving_average") return SmoothingKind::MovingAverage;
  if (name == "savitzky_golay") return SmoothingKind::SavitzkyGolay;
  throw Error(kModule, "BadSmoothing", fmt::format("unknown smoothing kind '{}'", name));
}

std::vector<double> smoothing_kernel(const SmoothingSpec& spec) {
  spec.validate();
  if (spec.kind == SmoothingKind::None) return {1.0};
  const int w = spec.window_frames;
  if (spec.kind == SmoothingKind::MovingAverage) return std::vector<double>(w, 1.0 / w);

  // Savitzky-Golay: value at the centre of the least-squares polynomial fit,
  // i.e. the first row of (A^T A)^-1 A^T with A_jk = j^k.
  const int half = w / 2;
  const int cols = spec.polynomial_order + 1;
  Eigen::MatrixXd a(w, cols);
  for (int j = -half; j <= half; ++j) {
    double p = 1.0;
    for (int k = 0; k < cols; ++k) {
      a(j + half, k) = p;
      p *= j;
    }
  }
  const Eigen::MatrixXd pinv = (a.transpose() * a).ldlt().solve(a.transpose());
  std::vector<double> kernel(w);
  for (int j = 0; j < w; ++j) kernel[j] = pinv(0, j);
  return kernel;
}

std::vector<double> smooth_signal(std::span<const double> signal, const SmoothingSpec& spec) {
  if (spec.kind == SmoothingKind::None) return {signal.begin(), signal.end()};
  spec.validate();
  const auto n = static_cast<long>(signal.size());
  if (spec.window_frames > n) {
    throw Error(kModule, "WindowTooLarge",
                fmt::format("window of {} frames exceeds the {} available", spec.window_frames,
                            n));
  }
  const auto kernel = smoothing_kernel(spec);
  const long half = spec.window_frames / 2;
  auto reflect = [n](long i) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  std::vector<double> out(signal.size());
  for (long i = 0; i < n; ++i) {
    // Deviations from the centre sample keep constant signals bit-exact.
    const double centre = signal[i];
    double acc = 0.0;
    for (long j = -half; j <= half; ++j) {
      acc += kernel[j + half] * (signal[reflect(i + j)] - centre);
    }
    out[i] = centre + acc;
  }
  return out;
}

EmaSweep smooth(const EmaSweep& sweep, const SmoothingSpec& spec) {
  if (spec.kind == SmoothingKind::None) return sweep;
  spec.validate();
  const std::size_t frames = sweep.frame_count();
  if (static_cast<std::size_t>(spec.window_frames) > frames) {
    throw Error(kModule, "WindowTooLarge",
                fmt::format("window of {} frames exceeds the {} frames of sweep '{}'",
                            spec.window_frames, frames, sweep.sweep_id));
  }
  EmaSweep out = sweep;
  std::vector<double> signal(frames);
  for (std::size_t c = 0; c < sweep.channel_count(); ++c) {
    for (int axis = 0; axis < 3; ++axis) {
      for (std::size_t f = 0; f < frames; ++f) signal[f] = sweep.at(f, c).position(axis);
      const auto filtered = smooth_signal(signal, spec);
      for (std::size_t f = 0; f < frames; ++f) out.at(f, c).position(axis) = filtered[f];
    }
  }
  return out;
}

}  // namespace emarig
