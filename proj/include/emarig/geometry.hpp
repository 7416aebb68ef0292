#pragma once

#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace emarig {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

// x -> rotation * x + translation. Positions in centimeters.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
  RigidTransform inverse() const;
  // (a * b).apply(x) == a.apply(b.apply(x))
  RigidTransform operator*(const RigidTransform& rhs) const;
  Mat4 matrix() const;
};

// x -> scale * rotation * x + translation.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  Vec3 apply_inverse(const Vec3& p) const {
    return rotation.transpose() * (p - translation) / scale;
  }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
  Vec3 rotate_inverse(const Vec3& v) const { return rotation.transpose() * v; }
  bool is_identity() const;
};

namespace detail {

struct ProcrustesFit {
  Mat3 rotation;
  double scale;
  Vec3 translation;
};

// Least-squares fit of fixed ~ scale * R * moving + t with det(R) = +1.
// Throws Error(<module>, "DegenerateConfiguration") when the cross-covariance
// has a vanishing second singular value (collinear or coincident points).
ProcrustesFit procrustes(std::span<const Vec3> moving, std::span<const Vec3> fixed,
                         bool with_scale, const char* module);

}  // namespace detail

// Rotation taking unit direction `from` to `to` about their common normal.
Mat3 minimal_rotation(const Vec3& from, const Vec3& to);

bool is_rotation(const Mat3& r, double tolerance = 1e-9);

}  // namespace emarig
