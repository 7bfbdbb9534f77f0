#include "dposer/baselines.hpp"

#include "dposer/parallel.hpp"

namespace dposer {

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::score_sde_bp: return "score_sde_bp";
    case SolverKind::mcg: return "mcg";
    case SolverKind::dps: return "dps";
  }
  return "score_sde_bp";
}

SolverKind parse_solver_kind(std::string_view name) {
  if (name == "score_sde_bp") return SolverKind::score_sde_bp;
  if (name == "mcg") return SolverKind::mcg;
  if (name == "dps") return SolverKind::dps;
  throw DomainError("unknown solver '" + std::string(name) + "'");
}

void SolverSpec::validate() const {
  sampler().validate();
  if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale)) throw DomainError("guidance scale must be >= 0");
}

template <typename Scalar>
Guidance dps_guidance(const BasicDenoiser<Scalar>& model, const PoseBatch& x, double t, const PoseVector& y_n,
                      const MaskOperator& mask) {
  using Matrix = typename BasicDenoiser<Scalar>::Matrix;
  using Vector = typename BasicDenoiser<Scalar>::Vector;
  const auto c = coefficients(model.schedule(), t);
  typename BasicDenoiser<Scalar>::Tape tape;
  const Vector tv = Vector::Constant(x.cols(), static_cast<Scalar>(t));
  Guidance g;
  g.eps_hat = model.forward(x.template cast<Scalar>(), tv, true, &tape).template cast<double>();
  const PoseBatch x_hat0 = (x - c.sigma * g.eps_hat) / c.alpha;
  const PoseVector w = mask.weights();
  const PoseBatch r = (x_hat0.colwise() - y_n).array().colwise() * w.array();
  g.residual_norm = r.colwise().norm().transpose();
  // u = M^T r / |r|; d|r|/dx = (I - sigma J^T) u / alpha since r = M (x_hat0 - y) here.
  PoseBatch u = r;
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    u.col(j) /= std::max(g.residual_norm[j], std::numeric_limits<double>::min());
  const Matrix jt_u = model.backward(tape, u.template cast<Scalar>()).input;
  g.grad = (u - c.sigma * jt_u.template cast<double>()) / c.alpha;
  return g;
}

template <typename Scalar>
HypothesisSet solve_completion(const BasicDenoiser<Scalar>& model, const MaskOperator& mask,
                               const Eigen::VectorXd& y_raw, const SolverSpec& spec, int S,
                               const KinematicTree* tree, const std::optional<PoseVector>& gt_raw,
                               const ProjectionObserver& observer) {
  spec.validate();
  mask.validate();
  if (S < 1) throw DomainError("completion needs at least one hypothesis");
  const PoseVector y_full = expand_observation(mask, y_raw);
  const Normalizer& norm = model.normalizer();
  const PoseVector y_n = norm.normalize(y_full);
  const SamplerSpec sspec = spec.sampler();
  const auto grid = sspec.time_grid();
  const bool guided = spec.kind != SolverKind::score_sde_bp;
  const bool project = spec.kind != SolverKind::dps;

  HypothesisSet set;
  set.poses.resize(kPoseDim, S);
  const Eigen::Index chunks = (S + kSampleChunk - 1) / kSampleChunk;
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t ci) {
    const Eigen::Index first = static_cast<Eigen::Index>(ci) * kSampleChunk;
    const Eigen::Index count = std::min<Eigen::Index>(kSampleChunk, S - first);
    auto streams = sample_streams(spec.seed, first, count);
    PoseBatch x = draw_normal(streams);
    for (int k = 0; k < spec.steps; ++k) {
      const double t = grid[k], t_next = grid[k + 1];
      Guidance g;
      if (guided) {
        g = dps_guidance(model, x, t, y_n, mask);
      } else {
        g.eps_hat = model.predict(x, t);
      }
      const PoseBatch z = draw_normal(streams);
      reverse_em_update(model.schedule(), x, g.eps_hat, t, t - t_next, z);
      if (guided) {
        // zeta / (|r| + 1e-8) applied to 1/2 grad |r|^2 = |r| grad |r|
        for (Eigen::Index j = 0; j < count; ++j)
          x.col(j) -= spec.guidance_scale * g.residual_norm[j] / (g.residual_norm[j] + 1e-8) * g.grad.col(j);
      }
      if (project) {
        const PoseBatch noise = draw_normal(streams);
        const auto cn = coefficients(model.schedule(), t_next);
        for (Eigen::Index j = 0; j < count; ++j)
          x.col(j) = mask.visible.select(cn.alpha * y_n + cn.sigma * noise.col(j), x.col(j));
        if (observer) observer(k, t_next, x, noise);
      }
      if (!x.allFinite()) throw DivergenceError("solver state became non-finite", k);
    }
    const auto e = coefficients(model.schedule(), sspec.t_end);
    x = (x - e.sigma * model.predict(x, sspec.t_end)) / e.alpha;
    if (!x.allFinite()) throw DivergenceError("solver state became non-finite", spec.steps);
    set.poses.middleCols(first, count) = norm.denormalize(x);
  });
  score_hypotheses(set, norm, mask, y_full, tree, gt_raw);
  return set;
}

#define DPOSER_INSTANTIATE(S)                                                                                  \
  template Guidance dps_guidance<S>(const BasicDenoiser<S>&, const PoseBatch&, double, const PoseVector&,      \
                                    const MaskOperator&);                                                      \
  template HypothesisSet solve_completion<S>(const BasicDenoiser<S>&, const MaskOperator&,                     \
                                             const Eigen::VectorXd&, const SolverSpec&, int,                   \
                                             const KinematicTree*, const std::optional<PoseVector>&,           \
                                             const ProjectionObserver&);
DPOSER_INSTANTIATE(float)
DPOSER_INSTANTIATE(double)
#undef DPOSER_INSTANTIATE

}  // namespace dposer
