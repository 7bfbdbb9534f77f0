#include "dposer/tasks.hpp"

#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>

#include "dposer/parallel.hpp"

namespace dposer {

// --- masks --------------------------------------------------------------------

MaskOperator MaskOperator::occluding(const std::vector<int>& joints, const KinematicTree& tree) {
  MaskOperator m;
  for (int j : joints) {
    if (j < 1 || j >= tree.num_joints()) throw DomainError("mask joint " + std::to_string(j) + " is not a posed joint");
    m.visible.segment<3>(tree.pose_index(j)).setConstant(false);
  }
  return m;
}

MaskOperator MaskOperator::preset(std::string_view name, const KinematicTree& tree) {
  const auto it = tree.mask_presets.find(std::string(name));
  if (it == tree.mask_presets.end()) throw DomainError("unknown mask preset '" + std::string(name) + "'");
  return occluding(it->second, tree);
}

void MaskOperator::validate() const {
  if (!visible.any()) throw DomainError("mask hides every pose dimension");
}

std::vector<int> MaskOperator::occluded_joints() const {
  std::vector<int> out;
  for (int j = 1; j <= kNumBodyJoints; ++j)
    if (!visible.segment<3>(3 * (j - 1)).all()) out.push_back(j);
  return out;
}

PoseVector expand_observation(const MaskOperator& mask, const Eigen::VectorXd& y) {
  PoseVector full = PoseVector::Zero();
  if (y.size() == kPoseDim) {
    full = mask.visible.select(y, 0.0);
  } else if (y.size() == mask.visible_count()) {
    Eigen::Index k = 0;
    for (int i = 0; i < kPoseDim; ++i)
      if (mask.visible[i]) full[i] = y[k++];
  } else {
    throw ShapeError("observation has " + std::to_string(y.size()) + " entries, expected 63 or " +
                     std::to_string(mask.visible_count()));
  }
  if (!full.allFinite()) throw DomainError("observation contains non-finite values");
  return full;
}

double completion_error(const KinematicTree& tree, const MaskOperator& mask, const PoseVector& pred_raw,
                        const PoseVector& gt_raw) {
  const ShapeVector beta = ShapeVector::Zero();
  const Joints3 pred = fk(tree, pred_raw, beta);
  const Joints3 gt = fk(tree, gt_raw, beta);
  std::vector<int> subset = tree.descendants(mask.occluded_joints());
  if (subset.empty()) return mpjpe(pred, gt);
  return mpjpe(pred, gt, subset);
}

void score_hypotheses(HypothesisSet& set, const Normalizer& normalizer, const MaskOperator& mask,
                      const PoseVector& y_raw, const KinematicTree* tree, const std::optional<PoseVector>& gt_raw) {
  const PoseVector y_n = normalizer.normalize(y_raw);
  const PoseBatch x_n = normalizer.normalize(set.poses);
  set.visible_residual.resize(set.size());
  for (Eigen::Index h = 0; h < set.size(); ++h)
    set.visible_residual[h] = mask.visible.select((x_n.col(h) - y_n).cwiseAbs(), 0.0).maxCoeff();
  set.errors.clear();
  if (tree && gt_raw)
    for (Eigen::Index h = 0; h < set.size(); ++h)
      set.errors.push_back(completion_error(*tree, mask, set.poses.col(h), *gt_raw));
}

// --- completion ---------------------------------------------------------------

template <typename Scalar>
HypothesisSet complete_pose(const BasicDenoiser<Scalar>& model, const MaskOperator& mask, const Eigen::VectorXd& y_raw,
                            int S, const CompletionConfig& cfg, const KinematicTree* tree,
                            const std::optional<PoseVector>& gt_raw) {
  mask.validate();
  if (S < 1) throw DomainError("completion needs at least one hypothesis");
  if (!(cfg.data_weight >= 0.0)) throw DomainError("completion data weight must be non-negative");
  const PoseVector y_full = expand_observation(mask, y_raw);
  const Normalizer& norm = model.normalizer();
  const PoseVector y_n = norm.normalize(y_full);
  const PoseVector w = mask.weights();

  HypothesisSet set;
  set.poses.resize(kPoseDim, S);
  parallel_for(static_cast<std::size_t>(S), [&](std::size_t h) {
    Rng init_rng(cfg.prior.seed, {0xc0e1, static_cast<std::uint64_t>(h)});
    PoseVector x0;
    init_rng.fill_normal(x0);
    x0 = mask.visible.select(y_n, x0);

    const TaskObjective task = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
      const PoseVector r = w.cwiseProduct(p.head<kPoseDim>() - y_n);
      grad.head<kPoseDim>() += 2.0 * cfg.data_weight * r;
      return cfg.data_weight * r.squaredNorm();
    };
    OptimState init{x0, {0}, {}, 0};
    const auto result = optimize(task, std::move(init), model, cfg.schedule, cfg.prior, cfg.optimizer, h);
    set.poses.col(static_cast<Eigen::Index>(h)) = norm.denormalize(PoseVector(result.state.params.template head<kPoseDim>()));
  });
  score_hypotheses(set, norm, mask, y_full, tree, gt_raw);
  return set;
}

// --- motion -------------------------------------------------------------------

void MotionProblem::validate(const KinematicTree& tree) const {
  if (observed.empty()) throw DomainError("motion problem needs at least one frame");
  for (const auto& f : observed)
    if (f.cols() != tree.num_joints()) throw ShapeError("motion frame has the wrong number of joints");
  if (!visible.empty()) {
    if (visible.size() != observed.size()) throw ShapeError("visibility mask length does not match the frame count");
    for (const auto& v : visible)
      if (static_cast<int>(v.size()) != tree.num_joints()) throw ShapeError("visibility mask has the wrong joint count");
  }
  if (!(w_obs >= 0.0 && w_temp >= 0.0)) throw DomainError("motion weights must be non-negative");
}

double motion_task_loss(const KinematicTree& tree, const Normalizer& normalizer, const MotionProblem& problem,
                        const Eigen::VectorXd& params, Eigen::VectorXd* grad) {
  const int F = problem.frames();
  const int J = tree.num_joints();
  if (params.size() != static_cast<Eigen::Index>(F) * kPoseDim) throw ShapeError("motion parameters do not match frames");
  const ShapeVector beta = ShapeVector::Zero();
  std::vector<Joints3> joints(F);
  std::vector<Eigen::MatrixXd> jac(grad ? F : 0);
  PoseBatch theta_grad = PoseBatch::Zero(kPoseDim, F);
  for (int f = 0; f < F; ++f) {
    const PoseVector theta = normalizer.denormalize(PoseVector(params.segment<kPoseDim>(f * kPoseDim)));
    if (grad) {
      auto fj = fk_jacobian(tree, theta, beta);
      joints[f] = std::move(fj.joints);
      jac[f] = std::move(fj.d_pose);
    } else {
      joints[f] = fk(tree, theta, beta);
    }
  }
  auto flat = [J](const Joints3& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), 3 * J); };

  double loss = 0.0;
  for (int f = 0; f < F; ++f) {
    Joints3 r = joints[f] - problem.observed[f];
    for (int j = 0; j < J; ++j)
      if (!problem.joint_visible(f, j)) r.col(j).setZero();
    loss += problem.w_obs * r.squaredNorm();
    if (grad) theta_grad.col(f) += 2.0 * problem.w_obs * jac[f].transpose() * flat(r);
  }
  for (int f = 1; f < F; ++f) {
    const Joints3 d = joints[f - 1] - joints[f];
    loss += problem.w_temp * d.squaredNorm();
    if (grad) {
      theta_grad.col(f - 1) += 2.0 * problem.w_temp * jac[f - 1].transpose() * flat(d);
      theta_grad.col(f) -= 2.0 * problem.w_temp * jac[f].transpose() * flat(d);
    }
  }
  if (grad) {
    for (int f = 0; f < F; ++f)
      grad->segment<kPoseDim>(f * kPoseDim) += theta_grad.col(f).cwiseProduct(normalizer.scale);
  }
  return loss;
}

template <typename Scalar>
MotionResult denoise_motion(const BasicDenoiser<Scalar>& model, const MotionProblem& problem,
                            const KinematicTree& tree, const MotionConfig& cfg) {
  problem.validate(tree);
  const int F = problem.frames();
  const Normalizer& norm = model.normalizer();
  OptimState init;
  init.params.resize(static_cast<Eigen::Index>(F) * kPoseDim);
  for (int f = 0; f < F; ++f) {
    Rng rng(cfg.prior.seed, {0x30710, static_cast<std::uint64_t>(f)});
    PoseVector theta;
    rng.fill_normal(theta);
    init.params.segment<kPoseDim>(f * kPoseDim) = norm.normalize(PoseVector(cfg.init_noise * theta));
    init.pose_offsets.push_back(static_cast<Eigen::Index>(f) * kPoseDim);
  }
  const TaskObjective task = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
    return motion_task_loss(tree, norm, problem, p, &grad);
  };
  auto result = optimize(task, std::move(init), model, cfg.schedule, cfg.prior, cfg.optimizer);

  MotionResult out;
  out.poses.resize(kPoseDim, F);
  for (int f = 0; f < F; ++f) {
    out.poses.col(f) = norm.denormalize(PoseVector(result.state.params.template segment<kPoseDim>(f * kPoseDim)));
    out.joints.push_back(fk(tree, out.poses.col(f), ShapeVector::Zero()));
  }
  out.trace = std::move(result.trace);
  return out;
}

// --- fitting ------------------------------------------------------------------

void check_keypoints(const Keypoints2D& kps, const KinematicTree& tree) {
  if (static_cast<int>(kps.size()) != tree.num_joints())
    throw ShapeError("expected " + std::to_string(tree.num_joints()) + " keypoints, got " + std::to_string(kps.size()));
  std::vector<Vec2> pts;
  for (const auto& k : kps) {
    if (!(k.confidence >= 0.0 && k.confidence <= 1.0)) throw DomainError("keypoint confidence outside [0, 1]");
    if (!k.position.allFinite()) throw DomainError("keypoint position is not finite");
    if (k.confidence > 0.0) pts.push_back(k.position);
  }
  if (pts.size() < 6) throw FittingError("fitting needs at least six keypoints with positive confidence");
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double big = es.eigenvalues()[1];
  if (!(big > 0.0) || es.eigenvalues()[0] <= 1e-9 * big) throw FittingError("keypoints are degenerate (collinear)");
}

FitState scratch_init(const Keypoints2D& kps, const KinematicTree& tree) {
  check_keypoints(kps, tree);
  const Joints3 rest = fk(tree, PoseVector::Zero(), ShapeVector::Zero());
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  Vec2 mlo = lo, mhi = hi;
  for (int j = 0; j < tree.num_joints(); ++j) {
    if (kps[j].confidence <= 0.0) continue;
    lo = lo.cwiseMin(kps[j].position);
    hi = hi.cwiseMax(kps[j].position);
    mlo = mlo.cwiseMin(rest.col(j).head<2>());
    mhi = mhi.cwiseMax(rest.col(j).head<2>());
  }
  FitState s;
  s.camera.scale = (hi - lo).norm() / std::max((mhi - mlo).norm(), 1e-6);
  s.camera.trans = 0.5 * (lo + hi) - s.camera.scale * 0.5 * (mlo + mhi);
  return s;
}

ReprojectionTerm reprojection_loss(const KinematicTree& tree, const Keypoints2D& kps, const FitState& state,
                                   double gm_scale) {
  const auto jac = fk_jacobian(tree, state.pose, state.beta, state.camera.global_orient);
  const double s = state.camera.scale;
  ReprojectionTerm out;
  for (int j = 0; j < tree.num_joints(); ++j) {
    const double lambda = kps[j].confidence;
    if (lambda <= 0.0) continue;
    const Vec2 body = jac.joints.col(j).head<2>() + state.camera.root_trans.head<2>();
    const Vec2 r = s * body + state.camera.trans - kps[j].position;
    out.loss += lambda * geman_mcclure(r, gm_scale);
    const Vec2 g = lambda * geman_mcclure_grad(r, gm_scale);
    const Vec2 gj = s * g;
    out.d_pose += jac.d_pose.middleRows<2>(3 * j).transpose() * gj;
    out.d_beta += jac.d_shape.middleRows<2>(3 * j).transpose() * gj;
    out.d_orient += jac.d_root.middleRows<2>(3 * j).transpose() * gj;
    out.d_scale += g.dot(body);
    out.d_trans += g;
  }
  return out;
}

double bending_loss(const KinematicTree& tree, const PoseVector& pose_raw, PoseVector* grad) {
  double loss = 0.0;
  for (const auto& e : tree.flexion) {
    const int i = tree.pose_index(e.joint) + e.axis;
    const double v = std::exp(e.sign * pose_raw[i]);
    loss += v;
    if (grad) (*grad)[i] += e.sign * v;
  }
  return loss;
}

double reprojection_error(const KinematicTree& tree, const Keypoints2D& kps, const FitState& state) {
  CameraWP cam = state.camera;
  const Joints2 p = project(cam, fk(tree, state.pose, state.beta));
  double num = 0.0, den = 0.0;
  for (int j = 0; j < tree.num_joints(); ++j) {
    num += kps[j].confidence * (p.col(j) - kps[j].position).norm();
    den += kps[j].confidence;
  }
  return den > 0.0 ? num / den : 0.0;
}

namespace {

// [x_n (63) | beta (10) | global orient (3) | log scale | trans (2)]
constexpr Eigen::Index kFitBeta = kPoseDim;
constexpr Eigen::Index kFitOrient = kFitBeta + kShapeDim;
constexpr Eigen::Index kFitScale = kFitOrient + 3;
constexpr Eigen::Index kFitTrans = kFitScale + 1;
constexpr Eigen::Index kFitParams = kFitTrans + 2;

Eigen::VectorXd pack(const FitState& s, const Normalizer& norm) {
  if (!(s.camera.scale > 0.0)) throw DomainError("camera scale must be positive");
  Eigen::VectorXd p(kFitParams);
  p.head<kPoseDim>() = norm.normalize(s.pose);
  p.segment<kShapeDim>(kFitBeta) = s.beta;
  p.segment<3>(kFitOrient) = s.camera.global_orient;
  p[kFitScale] = std::log(s.camera.scale);
  p.segment<2>(kFitTrans) = s.camera.trans;
  return p;
}

FitState unpack(const Eigen::VectorXd& p, const Normalizer& norm, const Vec3& root_trans) {
  FitState s;
  s.pose = norm.denormalize(PoseVector(p.head<kPoseDim>()));
  s.beta = p.segment<kShapeDim>(kFitBeta);
  s.camera.global_orient = p.segment<3>(kFitOrient);
  s.camera.scale = std::exp(p[kFitScale]);
  s.camera.trans = p.segment<2>(kFitTrans);
  s.camera.root_trans = root_trans;
  return s;
}

// L_J + w_theta L_theta + w_beta L_beta; the regularizer is added by the engine.
double fit_task_loss(const KinematicTree& tree, const Keypoints2D& kps, const Normalizer& norm, const FitConfig& cfg,
                     const Vec3& root_trans, const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
  const FitState s = unpack(p, norm, root_trans);
  const auto rep = reprojection_loss(tree, kps, s, cfg.gm_scale);
  PoseVector bend_grad = PoseVector::Zero();
  const double bend = bending_loss(tree, s.pose, &bend_grad);
  const double shape = s.beta.squaredNorm();
  if (grad) {
    grad->head<kPoseDim>() += (rep.d_pose + cfg.weights.w_theta * bend_grad).cwiseProduct(norm.scale);
    grad->segment<kShapeDim>(kFitBeta) += rep.d_beta + 2.0 * cfg.weights.w_beta * s.beta;
    grad->segment<3>(kFitOrient) += rep.d_orient;
    (*grad)[kFitScale] += rep.d_scale * s.camera.scale;
    grad->segment<2>(kFitTrans) += rep.d_trans;
  }
  return rep.loss + cfg.weights.w_theta * bend + cfg.weights.w_beta * shape;
}

PriorConfig fit_prior(const FitConfig& cfg) {
  PriorConfig p = cfg.prior;
  p.lambda = cfg.prior.lambda * cfg.weights.w_alpha;
  return p;
}

}  // namespace

template <typename Scalar>
FitLossTerms fit_loss_terms(const BasicDenoiser<Scalar>& model, const Keypoints2D& kps, const KinematicTree& tree,
                            const FitState& state, const FitConfig& cfg, double t, const PoseVector& eps) {
  check_keypoints(kps, tree);
  const Normalizer& norm = model.normalizer();
  FitLossTerms terms;
  terms.joints = reprojection_loss(tree, kps, state, cfg.gm_scale).loss;
  terms.bending = bending_loss(tree, state.pose);
  terms.shape = state.beta.squaredNorm();
  const PoseVector x_n = norm.normalize(state.pose);
  terms.prior = dposer_loss_and_grad(model, PoseBatch(x_n), t, PoseBatch(eps), cfg.prior).loss;
  const double task = fit_task_loss(tree, kps, norm, cfg, state.camera.root_trans, pack(state, norm), nullptr);
  terms.total = task + dposer_loss_and_grad(model, PoseBatch(x_n), t, PoseBatch(eps), fit_prior(cfg)).loss;
  return terms;
}

template <typename Scalar>
FitResult fit_2d(const BasicDenoiser<Scalar>& model, const Keypoints2D& kps, const KinematicTree& tree,
                 const std::optional<FitState>& init, const FitConfig& cfg) {
  check_keypoints(kps, tree);
  const Normalizer& norm = model.normalizer();
  FitState start = init ? *init : scratch_init(kps, tree);
  if (!init) start.pose = norm.denormalize(PoseVector::Zero());
  const Vec3 root_trans = start.camera.root_trans;

  OptimState state;
  state.params = pack(start, norm);
  state.pose_offsets = {0};
  state.step_scale = Eigen::VectorXd::Ones(kFitParams);
  state.step_scale.segment<3>(kFitOrient).setConstant(cfg.orient_step);
  state.step_scale[kFitScale] = cfg.scale_step;
  state.step_scale.segment<2>(kFitTrans).setConstant(cfg.trans_step);

  const TaskObjective task = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
    return fit_task_loss(tree, kps, norm, cfg, root_trans, p, &grad);
  };
  auto result = optimize(task, std::move(state), model, cfg.schedule, fit_prior(cfg), cfg.optimizer);

  FitResult out;
  out.state = unpack(result.state.params, norm, root_trans);
  out.trace = std::move(result.trace);
  out.reprojection_error = reprojection_error(tree, kps, out.state);
  return out;
}

#define DPOSER_INSTANTIATE(S)                                                                                      \
  template HypothesisSet complete_pose<S>(const BasicDenoiser<S>&, const MaskOperator&, const Eigen::VectorXd&, int,  \
                                          const CompletionConfig&, const KinematicTree*,                            \
                                          const std::optional<PoseVector>&);                                        \
  template MotionResult denoise_motion<S>(const BasicDenoiser<S>&, const MotionProblem&, const KinematicTree&,       \
                                          const MotionConfig&);                                                     \
  template FitLossTerms fit_loss_terms<S>(const BasicDenoiser<S>&, const Keypoints2D&, const KinematicTree&,         \
                                          const FitState&, const FitConfig&, double, const PoseVector&);            \
  template FitResult fit_2d<S>(const BasicDenoiser<S>&, const Keypoints2D&, const KinematicTree&,                    \
                               const std::optional<FitState>&, const FitConfig&);
DPOSER_INSTANTIATE(float)
DPOSER_INSTANTIATE(double)
#undef DPOSER_INSTANTIATE

}  // namespace dposer
