#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emarig/geometry.hpp"
#include "emarig/mesh.hpp"
#include "emarig/rig.hpp"

namespace emarig {

struct IkParams {
  double tolerance = 1e-3;  // cm
  int max_iterations = 50;
  double s_min = 0.5;
  double s_max = 2.0;
  std::map<std::string, double> target_weights;  // per coil, default 1

  void validate() const;
  double weight(const std::string& coil) const;
};

struct BonePose {
  Mat3 rotation = Mat3::Identity();  // rest -> posed, about the head
  Vec3 head = Vec3::Zero();
  double stretch = 1.0;               // length / rest_length
  double cross_section_scale = 1.0;   // 1 / sqrt(stretch)
};

struct PoseFrame {
  std::vector<BonePose> bones;
  std::vector<double> residuals;  // per bone; 0 for bones without a target
  int iterations_used = 0;

  double max_residual() const;
};

// Bones are stretched along their axis by s and scaled by 1/sqrt(s) across it,
// so length * cross_section^2 stays equal to the rest length.
inline double cross_section_for(double stretch) { return 1.0 / std::sqrt(stretch); }

PoseFrame rest_pose(const Armature& armature);

// Tree FABRIK with per-bone stretch clamping. `targets` is indexed by bone
// (the bone's tail coil); std::nullopt marks a missing target. Frames are
// independent: every solve starts from the rest pose.
PoseFrame solve_pose(const Armature& armature, std::span<const std::optional<Vec3>> targets,
                     const IkParams& params, std::vector<double>* residual_history = nullptr);

PoseFrame solve_pose(const Armature& armature, const std::map<std::string, Vec3>& targets,
                     const IkParams& params);

// Rest -> posed affine map of one bone: head' + R * S * (x - head), where S
// scales by `stretch` along the rest axis and by `cross_section_scale` across.
Mat4 bone_matrix(const Bone& bone, const BonePose& pose);

Vec3 posed_tail(const Bone& bone, const BonePose& pose);
std::vector<Vec3> posed_tails(const Armature& armature, const PoseFrame& pose);

// Linear blend skinning. Tongue vertices blend their bone matrices, mandible
// vertices follow `jaw`, everything else is left in place.
std::vector<Vec3> apply_pose(const SkinnedMesh& mesh, const Armature& armature,
                             const PoseFrame& pose, const RigidTransform& jaw = {});

Vec3 skin_vertex(const SkinnedMesh& mesh, std::span<const Mat4> bone_matrices, int vertex,
                 const RigidTransform& jaw = {});

}  // namespace emarig
