#include "emarig/geometry.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "emarig/error.hpp"

namespace emarig {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool Similarity::is_identity() const {
  return scale == 1.0 && rotation == Mat3::Identity() && translation == Vec3::Zero();
}

namespace detail {

ProcrustesFit procrustes(std::span<const Vec3> moving, std::span<const Vec3> fixed,
                         bool with_scale, const char* module) {
  if (moving.size() != fixed.size()) {
    throw Error(module, "SizeMismatch", "point lists differ in length");
  }
  if (moving.size() < 3) {
    throw Error(module, "DegenerateConfiguration", "at least 3 point pairs required");
  }
  const double n = static_cast<double>(moving.size());
  Vec3 mc = Vec3::Zero();
  Vec3 fc = Vec3::Zero();
  for (std::size_t i = 0; i < moving.size(); ++i) {
    mc += moving[i];
    fc += fixed[i];
  }
  mc /= n;
  fc /= n;

  Mat3 h = Mat3::Zero();
  double moving_spread = 0.0;
  for (std::size_t i = 0; i < moving.size(); ++i) {
    const Vec3 a = moving[i] - mc;
    h += a * (fixed[i] - fc).transpose();
    moving_spread += a.squaredNorm();
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0.0) || !std::isfinite(sv(0)) || sv(1) <= 1e-10 * sv(0)) {
    throw Error(module, "DegenerateConfiguration",
                "point configuration is collinear or coincident");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  ProcrustesFit fit;
  fit.rotation = v * d * u.transpose();
  fit.scale = with_scale ? (sv.asDiagonal() * d).trace() / moving_spread : 1.0;
  fit.translation = fc - fit.scale * (fit.rotation * mc);
  return fit;
}

}  // namespace detail

Mat3 minimal_rotation(const Vec3& from, const Vec3& to) {
  return Quat::FromTwoVectors(from, to).normalized().toRotationMatrix();
}

bool is_rotation(const Mat3& r, double tolerance) {
  return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tolerance &&
         std::abs(r.determinant() - 1.0) <= tolerance;
}

}  // namespace emarig
