#include "dposer/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "dposer/rotation.hpp"

namespace dposer {

using nlohmann::json;

std::vector<int> KinematicTree::children(int joint) const {
  std::vector<int> out;
  for (int j = 0; j < num_joints(); ++j)
    if (parent[j] == joint) out.push_back(j);
  return out;
}

std::vector<int> KinematicTree::descendants(const std::vector<int>& joints) const {
  std::set<int> roots(joints.begin(), joints.end());
  std::vector<int> out;
  for (int j = 0; j < num_joints(); ++j) {
    for (int a = parent[j]; a >= 0; a = parent[a]) {
      if (roots.count(a)) {
        out.push_back(j);
        break;
      }
    }
  }
  return out;
}

void KinematicTree::validate() const {
  const int J = num_joints();
  if (J < 2) throw DomainError("skeleton needs a root and at least one posed joint");
  if (static_cast<int>(names.size()) != J) throw ShapeError("skeleton: names/parents length mismatch");
  if (rest_offsets.cols() != J) throw ShapeError("skeleton: rest_offsets must have one column per joint");
  if (shape_basis.rows() != 3 * J || shape_basis.cols() != kShapeDim)
    throw ShapeError("skeleton: shape_basis must be (3J) x 10");
  int roots = 0;
  for (int j = 0; j < J; ++j) {
    if (parent[j] < 0) {
      ++roots;
      if (j != 0) throw DomainError("skeleton: the root must be joint 0");
    } else if (parent[j] >= j) {
      throw DomainError("skeleton: joints must be topologically sorted (parent < child)");
    }
  }
  if (roots != 1) throw DomainError("skeleton: exactly one root required");
  for (const auto& [name, group] : mask_presets)
    for (int j : group)
      if (j < 1 || j >= J) throw DomainError("skeleton: mask preset '" + name + "' references invalid joint");
  for (const auto& f : flexion)
    if (f.joint < 1 || f.joint >= J || f.axis < 0 || f.axis > 2 || (f.sign != 1 && f.sign != -1))
      throw DomainError("skeleton: invalid flexion entry");
}

KinematicTree KinematicTree::smpl_default() {
  KinematicTree t;
  t.names = {"pelvis",     "left_hip",      "right_hip",      "spine1",     "left_knee",  "right_knee",
             "spine2",     "left_ankle",    "right_ankle",    "spine3",     "left_foot",  "right_foot",
             "neck",       "left_collar",   "right_collar",   "head",       "left_shoulder", "right_shoulder",
             "left_elbow", "right_elbow",   "left_wrist",     "right_wrist"};
  t.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  // x to the body's left, y up, z forward.
  const double offsets[22][3] = {
      {0, 0, 0},       {70, -90, -5},   {-70, -90, -5},  {0, 110, -20},   {35, -380, 5},   {-35, -380, 5},
      {0, 135, 10},    {-10, -400, -40}, {10, -400, -40}, {0, 55, 5},      {20, -60, 120},  {-20, -60, 120},
      {0, 215, -30},   {80, 120, -10},  {-80, 120, -10}, {0, 90, 50},     {120, 40, -15},  {-120, 40, -15},
      {260, -10, -20}, {-260, -10, -20}, {250, 10, -5},   {-250, 10, -5}};
  t.rest_offsets.resize(3, 22);
  for (int j = 0; j < 22; ++j) t.rest_offsets.col(j) = Vec3(offsets[j][0], offsets[j][1], offsets[j][2]);

  // Coefficient 0 scales every bone by 5% per unit; the others scale limb
  // groups by 5% per unit.
  const std::vector<std::vector<int>> groups = {
      {},                   // all bones
      {4, 5, 7, 8},         // legs
      {18, 19, 20, 21},     // arms
      {3, 6, 9},            // spine
      {12, 15},             // neck and head
      {13, 14, 16, 17},     // shoulder width
      {1, 2},               // hip width
      {10, 11},             // feet
      {4, 5},               // thighs
      {20, 21}};            // forearms
  t.shape_basis = Eigen::MatrixXd::Zero(3 * 22, kShapeDim);
  for (int k = 0; k < kShapeDim; ++k) {
    for (int j = 1; j < 22; ++j) {
      const bool in = groups[k].empty() || std::find(groups[k].begin(), groups[k].end(), j) != groups[k].end();
      if (in) t.shape_basis.block<3, 1>(3 * j, k) = 0.05 * t.rest_offsets.col(j);
    }
  }
  t.mask_presets = {{"left_leg", {1, 4, 7, 10}},
                    {"legs", {1, 2, 4, 5, 7, 8, 10, 11}},
                    {"left_arm", {13, 16, 18, 20}},
                    {"arms", {13, 14, 16, 17, 18, 19, 20, 21}},
                    {"trunk", {3, 6, 9, 12, 15}}};
  // Knees flex about +x and elbows about -y (left) / +y (right); the signs
  // penalize hyperextension.
  t.flexion = {{4, 0, -1}, {5, 0, -1}, {18, 1, 1}, {19, 1, -1}};
  return t;
}

KinematicTree KinematicTree::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("skeleton config: ") + e.what());
  }
  KinematicTree t;
  try {
    const auto& joints = j.at("joints");
    const int J = static_cast<int>(joints.size());
    t.rest_offsets.resize(3, J);
    t.shape_basis = Eigen::MatrixXd::Zero(3 * J, kShapeDim);
    for (int i = 0; i < J; ++i) {
      const auto& e = joints[i];
      t.names.push_back(e.at("name").get<std::string>());
      t.parent.push_back(e.at("parent").get<int>());
      const auto off = e.at("offset").get<std::vector<double>>();
      if (off.size() != 3) throw FormatError("skeleton config: offset needs 3 values");
      t.rest_offsets.col(i) = Vec3(off[0], off[1], off[2]);
      if (e.contains("shape_basis")) {
        const auto rows = e.at("shape_basis").get<std::vector<std::vector<double>>>();
        if (rows.size() != 3) throw FormatError("skeleton config: shape_basis needs 3 rows");
        for (int r = 0; r < 3; ++r) {
          if (rows[r].size() != kShapeDim) throw FormatError("skeleton config: shape_basis rows need 10 values");
          for (int k = 0; k < kShapeDim; ++k) t.shape_basis(3 * i + r, k) = rows[r][k];
        }
      }
    }
    if (j.contains("mask_presets"))
      t.mask_presets = j.at("mask_presets").get<std::map<std::string, std::vector<int>>>();
    if (j.contains("flexion"))
      for (const auto& f : j.at("flexion"))
        t.flexion.push_back({f.at("joint").get<int>(), f.at("axis").get<int>(), f.at("sign").get<int>()});
  } catch (const json::exception& e) {
    throw FormatError(std::string("skeleton config: ") + e.what());
  }
  t.validate();
  return t;
}

std::string KinematicTree::to_json_text() const {
  json j;
  j["joints"] = json::array();
  for (int i = 0; i < num_joints(); ++i) {
    json e;
    e["name"] = names[i];
    e["parent"] = parent[i];
    e["offset"] = {rest_offsets(0, i), rest_offsets(1, i), rest_offsets(2, i)};
    json rows = json::array();
    for (int r = 0; r < 3; ++r) {
      std::vector<double> row(kShapeDim);
      for (int k = 0; k < kShapeDim; ++k) row[k] = shape_basis(3 * i + r, k);
      rows.push_back(row);
    }
    e["shape_basis"] = rows;
    j["joints"].push_back(e);
  }
  j["mask_presets"] = mask_presets;
  j["flexion"] = json::array();
  for (const auto& f : flexion) j["flexion"].push_back({{"joint", f.joint}, {"axis", f.axis}, {"sign", f.sign}});
  return j.dump(2) + "\n";
}

KinematicTree KinematicTree::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open skeleton config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

void KinematicTree::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write skeleton config '" + path + "'");
  out << to_json_text();
}

namespace {

void check_pose(const KinematicTree& tree, const Eigen::Ref<const Eigen::VectorXd>& pose) {
  if (pose.size() != tree.pose_dim())
    throw ShapeError("pose has " + std::to_string(pose.size()) + " entries, skeleton expects " +
                     std::to_string(tree.pose_dim()));
}

struct Chain {
  std::vector<Mat3> global;  // accumulated rotation of each joint frame
  Joints3 joints;
};

Chain run_chain(const KinematicTree& tree, const Eigen::Ref<const Eigen::VectorXd>& pose, const ShapeVector& beta,
                const Vec3& root_orient) {
  const int J = tree.num_joints();
  Chain c;
  c.global.resize(J);
  c.joints = Joints3::Zero(3, J);
  c.global[0] = axis_angle_to_matrix<double>(root_orient);
  for (int j = 1; j < J; ++j) {
    const int p = tree.parent[j];
    const Vec3 bone = tree.rest_offsets.col(j) + tree.shape_basis.middleRows<3>(3 * j) * beta;
    c.joints.col(j) = c.joints.col(p) + c.global[p] * bone;
    c.global[j] = c.global[p] * axis_angle_to_matrix<double>(Vec3(pose.segment<3>(tree.pose_index(j))));
  }
  return c;
}

bool is_strict_ancestor(const KinematicTree& tree, int ancestor, int joint) {
  for (int a = tree.parent[joint]; a >= 0; a = tree.parent[a])
    if (a == ancestor) return true;
  return false;
}

}  // namespace

Joints3 fk(const KinematicTree& tree, const Eigen::Ref<const Eigen::VectorXd>& pose, const ShapeVector& beta,
           const Vec3& root_orient) {
  check_pose(tree, pose);
  return run_chain(tree, pose, beta, root_orient).joints;
}

FkJacobian fk_jacobian(const KinematicTree& tree, const Eigen::Ref<const Eigen::VectorXd>& pose,
                       const ShapeVector& beta, const Vec3& root_orient) {
  check_pose(tree, pose);
  const int J = tree.num_joints();
  const Chain c = run_chain(tree, pose, beta, root_orient);
  FkJacobian out;
  out.joints = c.joints;
  out.d_pose = Eigen::MatrixXd::Zero(3 * J, tree.pose_dim());
  out.d_shape = Eigen::MatrixXd::Zero(3 * J, kShapeDim);
  out.d_root = Eigen::MatrixXd::Zero(3 * J, 3);

  // A rotation at joint k with world-frame angular direction u moves every
  // descendant j by u x (p_j - p_k).
  const Mat3 root_axes = so3_left_jacobian<double>(root_orient);
  for (int j = 1; j < J; ++j)
    for (int a = 0; a < 3; ++a) out.d_root.block<3, 1>(3 * j, a) = root_axes.col(a).cross(c.joints.col(j));

  for (int k = 1; k < J; ++k) {
    const Vec3 wk = pose.segment<3>(tree.pose_index(k));
    const Mat3 axes = c.global[tree.parent[k]] * so3_left_jacobian<double>(wk);
    for (int j = k + 1; j < J; ++j) {
      if (!is_strict_ancestor(tree, k, j)) continue;
      const Vec3 lever = c.joints.col(j) - c.joints.col(k);
      for (int a = 0; a < 3; ++a) out.d_pose.block<3, 1>(3 * j, tree.pose_index(k) + a) = axes.col(a).cross(lever);
    }
  }

  for (int j = 1; j < J; ++j) {
    const int p = tree.parent[j];
    out.d_shape.middleRows<3>(3 * j) = out.d_shape.middleRows<3>(3 * p) + c.global[p] * tree.shape_basis.middleRows<3>(3 * j);
  }
  return out;
}

Joints2 project(const CameraWP& camera, const Joints3& joints) {
  const Mat3 R = axis_angle_to_matrix<double>(camera.global_orient);
  const Joints3 world = (R * joints).colwise() + camera.root_trans;
  return (camera.scale * world.topRows<2>()).colwise() + camera.trans;
}

double geman_mcclure(const Vec2& residual, double gm_scale) {
  if (!(gm_scale > 0.0)) throw DomainError("Geman-McClure scale must be positive");
  const double s2 = gm_scale * gm_scale;
  const double r2 = residual.squaredNorm();
  if (std::isinf(r2)) return s2;
  return s2 * r2 / (s2 + r2);
}

Vec2 geman_mcclure_grad(const Vec2& residual, double gm_scale) {
  if (!(gm_scale > 0.0)) throw DomainError("Geman-McClure scale must be positive");
  const double s2 = gm_scale * gm_scale;
  const double denom = s2 + residual.squaredNorm();
  return (2.0 * s2 * s2 / (denom * denom)) * residual;
}

}  // namespace dposer
