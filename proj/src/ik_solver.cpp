#include "emarig/ik_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "emarig/error.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "ik_solver";

Vec3 direction_or(const Vec3& d, const Vec3& fallback) {
  const double n = d.norm();
  return n > 0.0 ? Vec3(d / n) : fallback;
}

}  // namespace

void IkParams::validate() const {
  if (!(tolerance > 0.0)) throw Error(kModule, "BadParams", "tolerance must be > 0");
  if (max_iterations < 1) throw Error(kModule, "BadParams", "max_iterations must be >= 1");
  if (!(s_min > 0.0 && s_min <= 1.0 && 1.0 <= s_max)) {
    throw Error(kModule, "BadParams",
                fmt::format("stretch bounds must satisfy 0 < s_min <= 1 <= s_max, got [{}, {}]",
                            s_min, s_max));
  }
  for (const auto& [coil, w] : target_weights) {
    if (!(w >= 0.0)) throw Error(kModule, "BadParams", fmt::format("negative weight for '{}'", coil));
  }
}

double IkParams::weight(const std::string& coil) const {
  const auto it = target_weights.find(coil);
  return it == target_weights.end() ? 1.0 : it->second;
}

double PoseFrame::max_residual() const {
  double m = 0.0;
  for (double r : residuals) m = std::max(m, r);
  return m;
}

PoseFrame rest_pose(const Armature& armature) {
  PoseFrame p;
  for (const auto& b : armature.bones) {
    BonePose bp;
    bp.head = b.head;
    p.bones.push_back(bp);
  }
  p.residuals.assign(armature.bones.size(), 0.0);
  return p;
}

PoseFrame solve_pose(const Armature& armature, std::span<const std::optional<Vec3>> targets,
                     const IkParams& params, std::vector<double>* residual_history) {
  const std::size_t n = armature.bones.size();
  if (targets.size() != n) {
    throw Error(kModule, "TargetMismatch",
                fmt::format("{} targets given for {} bones", targets.size(), n));
  }
  const auto& bones = armature.bones;
  const auto kids = armature.children();

  // A bone is active when it or one of its descendants has a target. Bones are
  // ordered parents first, so one reverse sweep suffices.
  std::vector<char> active(n, 0);
  std::vector<double> subtree_weight(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    if (targets[k]) {
      active[k] = 1;
      subtree_weight[k] += params.weight(bones[k].name);
    }
    for (int c : kids[k]) {
      if (active[c]) active[k] = 1;
      subtree_weight[k] += subtree_weight[c];
    }
  }

  std::vector<Vec3> tail(n);
  for (std::size_t k = 0; k < n; ++k) tail[k] = bones[k].tail;
  std::vector<Vec3> desired(n, Vec3::Zero());
  std::vector<Mat3> rot(n, Mat3::Identity());

  auto head_of = [&](std::size_t k) -> const Vec3& {
    return bones[k].parent < 0 ? armature.root_point : tail[bones[k].parent];
  };
  auto clamp_length = [&](std::size_t k, double dist) {
    if (!targets[k]) return bones[k].rest_length;
    return std::clamp(dist, params.s_min * bones[k].rest_length, params.s_max * bones[k].rest_length);
  };
  auto residual = [&]() {
    double m = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (targets[k]) m = std::max(m, (tail[k] - *targets[k]).norm());
    }
    return m;
  };

  auto iterate = [&]() {
    // Backward: leaves to root, proposing where each tail should go.
    for (std::size_t k = n; k-- > 0;) {
      if (!active[k]) continue;
      if (targets[k]) {
        desired[k] = *targets[k];
        continue;
      }
      Vec3 sum = Vec3::Zero();
      double wsum = 0.0;
      const bool uniform = std::none_of(kids[k].begin(), kids[k].end(),
                                        [&](int c) { return active[c] && subtree_weight[c] > 0.0; });
      for (int c : kids[k]) {
        if (!active[c]) continue;
        const Vec3 away = tail[k] - desired[c];
        const double len = clamp_length(c, away.norm());
        const Vec3 proposal = desired[c] + direction_or(away, -bones[c].axis()) * len;
        const double w = uniform ? 1.0 : subtree_weight[c];
        sum += w * proposal;
        wsum += w;
      }
      desired[k] = sum / wsum;
    }
    // Forward: root to leaves, re-attaching each bone to its (moved) head.
    for (std::size_t k = 0; k < n; ++k) {
      const Vec3 head = head_of(k);
      const Mat3 parent_rot = bones[k].parent < 0 ? Mat3::Identity() : rot[bones[k].parent];
      if (!active[k]) {
        rot[k] = parent_rot;
        tail[k] = head + parent_rot * (bones[k].tail - bones[k].head);
        continue;
      }
      const Vec3 d = desired[k] - head;
      const double dist = d.norm();
      const double len = clamp_length(k, dist);
      if (targets[k] && len == dist) {
        tail[k] = desired[k];  // exact hit when within stretch bounds
      } else {
        tail[k] = head + direction_or(d, parent_rot * bones[k].axis()) * len;
      }
      rot[k] = minimal_rotation(bones[k].axis(), tail[k] - head);
    }
  };

  double best = std::numeric_limits<double>::infinity();
  int used = 0;
  std::vector<Vec3> prev_tail = tail;
  std::vector<Mat3> prev_rot = rot;
  if (residual_history) residual_history->clear();
  for (int it = 1; it <= params.max_iterations; ++it) {
    iterate();
    const double r = residual();
    if (r > best) {
      tail = prev_tail;  // never accept a worse iterate
      rot = prev_rot;
      break;
    }
    best = r;
    used = it;
    if (residual_history) residual_history->push_back(r);
    if (r <= params.tolerance) break;
    prev_tail = tail;
    prev_rot = rot;
  }

  PoseFrame pose;
  pose.iterations_used = used;
  pose.bones.resize(n);
  pose.residuals.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    BonePose& bp = pose.bones[k];
    bp.head = head_of(k);
    bp.rotation = rot[k];
    bp.stretch = (tail[k] - bp.head).norm() / bones[k].rest_length;
    if (!active[k]) bp.stretch = 1.0;
    bp.stretch = std::clamp(bp.stretch, params.s_min, params.s_max);
    bp.cross_section_scale = cross_section_for(bp.stretch);
    if (targets[k]) pose.residuals[k] = (tail[k] - *targets[k]).norm();
  }
  return pose;
}

PoseFrame solve_pose(const Armature& armature, const std::map<std::string, Vec3>& targets,
                     const IkParams& params) {
  std::vector<std::optional<Vec3>> t(armature.bones.size());
  for (std::size_t k = 0; k < armature.bones.size(); ++k) {
    if (auto it = targets.find(armature.bones[k].name); it != targets.end()) t[k] = it->second;
  }
  return solve_pose(armature, t, params);
}

Mat4 bone_matrix(const Bone& bone, const BonePose& pose) {
  const Vec3 a = bone.axis();
  const double c = pose.cross_section_scale;
  const Mat3 scale = c * Mat3::Identity() + (pose.stretch - c) * (a * a.transpose());
  const Mat3 linear = pose.rotation * scale;
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = linear;
  m.topRightCorner<3, 1>() = pose.head - linear * bone.head;
  return m;
}

Vec3 posed_tail(const Bone& bone, const BonePose& pose) {
  return pose.head + pose.rotation * ((bone.tail - bone.head) * pose.stretch);
}

std::vector<Vec3> posed_tails(const Armature& armature, const PoseFrame& pose) {
  std::vector<Vec3> out;
  out.reserve(armature.bones.size());
  for (std::size_t k = 0; k < armature.bones.size(); ++k) {
    out.push_back(posed_tail(armature.bones[k], pose.bones[k]));
  }
  return out;
}

Vec3 skin_vertex(const SkinnedMesh& mesh, std::span<const Mat4> bone_matrices, int vertex,
                 const RigidTransform& jaw) {
  const Vec3& v = mesh.vertices[vertex];
  switch (mesh.vertex_groups[vertex]) {
    case MeshGroup::Mandible:
      return jaw.apply(v);
    case MeshGroup::Tongue: {
      if (mesh.weights.empty() || mesh.weights[vertex].empty()) return v;
      const Eigen::Vector4d h(v.x(), v.y(), v.z(), 1.0);
      Eigen::Vector4d acc = Eigen::Vector4d::Zero();
      for (const auto& inf : mesh.weights[vertex]) acc += inf.weight * (bone_matrices[inf.bone] * h);
      return acc.head<3>();
    }
    default:
      return v;
  }
}

std::vector<Vec3> apply_pose(const SkinnedMesh& mesh, const Armature& armature,
                             const PoseFrame& pose, const RigidTransform& jaw) {
  std::vector<Mat4> mats;
  mats.reserve(armature.bones.size());
  for (std::size_t k = 0; k < armature.bones.size(); ++k) {
    mats.push_back(bone_matrix(armature.bones[k], pose.bones[k]));
  }
  std::vector<Vec3> out(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    out[v] = skin_vertex(mesh, mats, static_cast<int>(v), jaw);
  }
  return out;
}

}  // namespace emarig
