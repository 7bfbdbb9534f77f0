#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "dposer/body_model.hpp"
#include "dposer/data.hpp"
#include "dposer/denoiser.hpp"
#include "dposer/metrics.hpp"
#include "dposer/prior.hpp"
#include "dposer/samplers.hpp"

namespace dposer {

// Diagonal measurement operator for pose completion: keeps the visible pose
// dimensions. Presets and joint lists always mask whole joints.
struct MaskOperator {
  Eigen::Array<bool, kPoseDim, 1> visible = Eigen::Array<bool, kPoseDim, 1>::Constant(true);

  static MaskOperator all_visible() { return {}; }
  static MaskOperator occluding(const std::vector<int>& joints, const KinematicTree& tree);
  static MaskOperator preset(std::string_view name, const KinematicTree& tree);

  void validate() const;
  int visible_count() const { return static_cast<int>(visible.count()); }
  // Skeleton joints (>= 1) with at least one hidden dimension.
  std::vector<int> occluded_joints() const;
  PoseVector weights() const { return visible.cast<double>(); }
};

// Accepts either a full 63-vector (hidden entries ignored) or just the visible
// entries in order; returns the full vector with hidden entries zeroed.
PoseVector expand_observation(const MaskOperator& mask, const Eigen::VectorXd& y);

struct HypothesisSet {
  PoseBatch poses;              // raw, one column per hypothesis
  std::vector<double> errors;   // per hypothesis, when ground truth is known (mm)
  Eigen::VectorXd visible_residual;  // max |x - y| over visible dims, normalized units

  Eigen::Index size() const { return poses.cols(); }
  std::optional<HypothesisStats> stats() const {
    if (errors.empty()) return std::nullopt;
    return hypothesis_stats(errors);
  }
};

// MPJPE (beta = 0) restricted to the joints moved by the occluded rotations;
// falls back to all joints when the occluded joints are leaves.
double completion_error(const KinematicTree& tree, const MaskOperator& mask, const PoseVector& pred_raw,
                        const PoseVector& gt_raw);

// Fills errors and visible residuals of a hypothesis set.
void score_hypotheses(HypothesisSet& set, const Normalizer& normalizer, const MaskOperator& mask,
                      const PoseVector& y_raw, const KinematicTree* tree, const std::optional<PoseVector>& gt_raw);

// --- completion ---------------------------------------------------------------

struct CompletionConfig {
  double data_weight = 1000.0;
  ScheduleSpec schedule;
  PriorConfig prior;
  InnerOptimizer optimizer{.lr = 0.2};
};

// S independent optimizations of data_weight |M(x - y)|^2 + L_DPoser in
// normalized space, visible dims started at y and hidden dims at N(0, 1).
// Errors are filled when both `tree` and `gt_raw` are given.
template <typename Scalar>
HypothesisSet complete_pose(const BasicDenoiser<Scalar>& model, const MaskOperator& mask, const Eigen::VectorXd& y_raw,
                            int S, const CompletionConfig& cfg, const KinematicTree* tree = nullptr,
                            const std::optional<PoseVector>& gt_raw = std::nullopt);

// --- motion denoising ---------------------------------------------------------

struct MotionProblem {
  std::vector<Joints3> observed;           // per frame, mm, root-relative
  std::vector<std::vector<bool>> visible;  // per frame per joint; empty means all visible
  double w_obs = 1.0;
  double w_temp = 0.5;

  int frames() const { return static_cast<int>(observed.size()); }
  void validate(const KinematicTree& tree) const;
  bool joint_visible(int frame, int joint) const { return visible.empty() || visible[frame][joint]; }
};

struct MotionConfig {
  ScheduleSpec schedule;
  PriorConfig prior = {WeightMode::constant, 2000.0, 0};
  InnerOptimizer optimizer{.lr = 0.2};
  double init_noise = 0.01;  // radians, around the zero pose
};

struct MotionResult {
  PoseBatch poses;  // raw, one column per frame
  std::vector<Joints3> joints;
  OptimTrace trace;
};

// L_obs + L_temp for the frame poses stacked in `params` (normalized, 63 per
// frame), with beta fixed at zero. Adds the gradient into `grad` when given.
double motion_task_loss(const KinematicTree& tree, const Normalizer& normalizer, const MotionProblem& problem,
                        const Eigen::VectorXd& params, Eigen::VectorXd* grad = nullptr);

template <typename Scalar>
MotionResult denoise_motion(const BasicDenoiser<Scalar>& model, const MotionProblem& problem,
                            const KinematicTree& tree, const MotionConfig& cfg);

// --- 2D keypoint fitting -----------------------------------------------------

struct FitWeights {
  double w_theta = 0.01;
  double w_beta = 0.001;
  double w_alpha = 100.0;
};

struct FitConfig {
  ScheduleSpec schedule;
  PriorConfig prior;
  InnerOptimizer optimizer;
  FitWeights weights;
  double gm_scale = 100.0;  // pixels
  // Per-coordinate step multipliers relative to optimizer.lr.
  double orient_step = 0.5;
  double scale_step = 0.2;   // log scale
  double trans_step = 40.0;  // pixels
};

struct FitState {
  PoseVector pose = PoseVector::Zero();  // raw
  ShapeVector beta = ShapeVector::Zero();
  CameraWP camera;
};

struct FitResult {
  FitState state;
  OptimTrace trace;
  double reprojection_error = 0.0;  // confidence-weighted mean pixel distance
};

// Throws FittingError unless at least six keypoints have positive confidence
// and they do not all lie on a line.
void check_keypoints(const Keypoints2D& kps, const KinematicTree& tree);

// Zero pose and shape, camera scale and translation from the keypoint
// bounding box.
FitState scratch_init(const Keypoints2D& kps, const KinematicTree& tree);

// sum_i lambda_i rho(Pi(M_J(theta, beta))_i - J_i), with gradients.
struct ReprojectionTerm {
  double loss = 0.0;
  PoseVector d_pose = PoseVector::Zero();
  ShapeVector d_beta = ShapeVector::Zero();
  Vec3 d_orient = Vec3::Zero();
  double d_scale = 0.0;
  Vec2 d_trans = Vec2::Zero();
};
ReprojectionTerm reprojection_loss(const KinematicTree& tree, const Keypoints2D& kps, const FitState& state,
                                   double gm_scale);

// sum over flexion entries of exp(sign * theta[joint, axis]).
double bending_loss(const KinematicTree& tree, const PoseVector& pose_raw, PoseVector* grad = nullptr);

double reprojection_error(const KinematicTree& tree, const Keypoints2D& kps, const FitState& state);

struct FitLossTerms {
  double joints = 0.0;
  double bending = 0.0;
  double shape = 0.0;
  double prior = 0.0;
  double total = 0.0;
};

// The four terms of the fitting objective at `state`, with the regularizer
// evaluated at time t and noise eps.
template <typename Scalar>
FitLossTerms fit_loss_terms(const BasicDenoiser<Scalar>& model, const Keypoints2D& kps, const KinematicTree& tree,
                            const FitState& state, const FitConfig& cfg, double t, const PoseVector& eps);

template <typename Scalar>
FitResult fit_2d(const BasicDenoiser<Scalar>& model, const Keypoints2D& kps, const KinematicTree& tree,
                 const std::optional<FitState>& init, const FitConfig& cfg);

// --- generation ---------------------------------------------------------------

template <typename Scalar>
PoseBatch generate(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n) {
  return sample(model, spec, n);
}

}  // namespace dposer
