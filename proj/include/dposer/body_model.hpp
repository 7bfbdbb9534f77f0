#pragma once

#include <map>
#include <string>
#include <vector>

#include "dposer/types.hpp"

namespace dposer {

// One entry of the bending penalty sum_i exp(sign * theta[joint, axis]).
struct FlexionEntry {
  int joint = 0;  // skeleton joint index (>= 1)
  int axis = 0;   // 0 = x, 1 = y, 2 = z
  int sign = 1;   // +1 or -1
};

// Articulated skeleton: joint 0 is the root, every other joint carries one
// axis-angle rotation that moves its descendants. Joints are topologically
// sorted (parent < child). Offsets are in millimetres, measured in the
// parent's frame at rest.
struct KinematicTree {
  std::vector<std::string> names;
  std::vector<int> parent;  // -1 for the root
  Joints3 rest_offsets;     // 3 x J
  // (3J) x 10: additive offset deltas per unit of each shape coefficient.
  Eigen::MatrixXd shape_basis;
  // Named groups of posed joints used as occlusion masks.
  std::map<std::string, std::vector<int>> mask_presets;
  // Elbow/knee bending penalty terms for 2D fitting.
  std::vector<FlexionEntry> flexion;

  int num_joints() const { return static_cast<int>(parent.size()); }
  int pose_dim() const { return 3 * (num_joints() - 1); }
  int pose_index(int joint) const { return 3 * (joint - 1); }
  std::vector<int> children(int joint) const;
  // All strict descendants of any joint in `joints`, sorted.
  std::vector<int> descendants(const std::vector<int>& joints) const;

  void validate() const;

  // 22-joint SMPL body topology with average adult bone lengths.
  static KinematicTree smpl_default();
  static KinematicTree load(const std::string& path);
  static KinematicTree from_json_text(const std::string& text);
  std::string to_json_text() const;
  void save(const std::string& path) const;
};

struct BodyShape {
  ShapeVector beta = ShapeVector::Zero();
};

// Weak-perspective camera with the fitting-only extrinsics.
struct CameraWP {
  double scale = 1.0;
  Vec2 trans = Vec2::Zero();      // pixels
  Vec3 global_orient = Vec3::Zero();  // axis-angle
  Vec3 root_trans = Vec3::Zero();     // mm
};

// Joint positions with the root at the origin. `root_orient` rotates the whole
// body about the root.
Joints3 fk(const KinematicTree& tree, const Eigen::Ref<const Eigen::VectorXd>& pose, const ShapeVector& beta,
           const Vec3& root_orient = Vec3::Zero());

struct FkJacobian {
  Joints3 joints;
  Eigen::MatrixXd d_pose;   // (3J) x pose_dim, mm / rad
  Eigen::MatrixXd d_shape;  // (3J) x 10, mm
  Eigen::MatrixXd d_root;   // (3J) x 3, mm / rad
};

// Analytic Jacobian of fk; row 3j + k is coordinate k of joint j.
FkJacobian fk_jacobian(const KinematicTree& tree, const Eigen::Ref<const Eigen::VectorXd>& pose,
                       const ShapeVector& beta, const Vec3& root_orient = Vec3::Zero());

// Applies global orientation and root translation, then (x, y) * scale + trans.
Joints2 project(const CameraWP& camera, const Joints3& joints);

// rho(r) = s^2 |r|^2 / (s^2 + |r|^2)
double geman_mcclure(const Vec2& residual, double gm_scale);
// d rho / d r
Vec2 geman_mcclure_grad(const Vec2& residual, double gm_scale);

}  // namespace dposer
