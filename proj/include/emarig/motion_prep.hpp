#pragma once

#include <array>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "emarig/ema_io.hpp"
#include "emarig/geometry.hpp"

namespace emarig {

// Least-squares rigid transform T (no reflection) minimizing
// sum |T(moving_i) - fixed_i|^2. Closed-form SVD (Kabsch).
RigidTransform rigid_align(std::span<const Vec3> moving, std::span<const Vec3> fixed);

// Rigidly moves every coil of a sample: position and orientation vector.
CoilSample transform_sample(const CoilSample& s, const RigidTransform& t);

// First frame in which all three reference coils are valid.
std::optional<std::size_t> first_valid_reference_frame(const EmaSweep& sweep,
                                                       const CoilRoles& roles);

std::array<Vec3, 3> reference_points(const EmaSweep& sweep, const CoilRoles& roles,
                                     std::size_t frame);

// Removes head motion: every frame is mapped by the rigid transform that
// aligns its reference coils onto `reference` (default: the reference coils of
// the first valid frame). Frames whose reference coils are not all valid are
// flagged invalid as a whole.
EmaSweep normalize_head(const EmaSweep& sweep, const CoilRoles& roles,
                        const std::optional<std::array<Vec3, 3>>& reference = std::nullopt);

// Flags samples whose rms exceeds the ceiling.
EmaSweep flag_dropouts(const EmaSweep& sweep,
                       double rms_ceiling = std::numeric_limits<double>::infinity());

// Replaces invalid samples by linear interpolation between the nearest valid
// neighbours of the same channel; constant extrapolation at the edges.
EmaSweep fill_dropouts(const EmaSweep& sweep);

enum class SmoothingKind { None, MovingAverage, SavitzkyGolay };

struct SmoothingSpec {
  SmoothingKind kind = SmoothingKind::MovingAverage;
  int window_frames = 9;
  int polynomial_order = 2;

  void validate() const;
};

SmoothingKind parse_smoothing_kind(std::string_view name);

// Centred, normalized FIR coefficients of length window_frames.
std::vector<double> smoothing_kernel(const SmoothingSpec& spec);

// Zero-phase filtering of one signal with reflection padding (edge sample not
// repeated).
std::vector<double> smooth_signal(std::span<const double> signal, const SmoothingSpec& spec);

// Smooths coil positions channel by channel; angles, rms and flags untouched.
EmaSweep smooth(const EmaSweep& sweep, const SmoothingSpec& spec);

}  // namespace emarig
