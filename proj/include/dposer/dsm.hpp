#pragma once

#include "dposer/denoiser.hpp"
#include "dposer/sde.hpp"

namespace dposer {

namespace detail {

template <typename Scalar>
PoseBatch predict_perturbed(const BasicDenoiser<Scalar>& model, const PoseBatch& x0, const Eigen::VectorXd& t,
                            const PoseBatch& eps, bool use_ema, PoseBatch& xt) {
  if (x0.cols() != eps.cols() || x0.cols() != t.size()) throw ShapeError("dsm_loss: batch/eps/t shape mismatch");
  if (x0.cols() == 0) throw ShapeError("dsm_loss: empty batch");
  xt.resize(kPoseDim, x0.cols());
  for (Eigen::Index b = 0; b < x0.cols(); ++b) xt.col(b) = perturb(model.schedule(), x0.col(b), t[b], eps.col(b));
  return model.forward(xt.cast<Scalar>(), t.cast<Scalar>(), use_ema).template cast<double>();
}

}  // namespace detail

// mean_b w(sigma_b) || eps_b - eps_theta(alpha_b x0_b + sigma_b eps_b; t_b) ||^2
// `x0` is a normalized batch (one column per item), `t` one time per item.
template <typename Scalar, typename Weight>
double noise_form_loss(const BasicDenoiser<Scalar>& model, const PoseBatch& x0, const Eigen::VectorXd& t,
                       const PoseBatch& eps, Weight&& weight, bool use_ema = false) {
  PoseBatch xt;
  const PoseBatch pred = detail::predict_perturbed(model, x0, t, eps, use_ema, xt);
  double total = 0.0;
  for (Eigen::Index b = 0; b < x0.cols(); ++b)
    total += weight(coefficients(model.schedule(), t[b]).sigma) * (eps.col(b) - pred.col(b)).squaredNorm();
  return total / static_cast<double>(x0.cols());
}

// The same objective written as explicit score matching against the
// perturbation kernel's score, grad log p_0t(x_t | x_0) = -(x_t - alpha x_0) / sigma^2,
// with model score s = -eps_theta / sigma:
//   mean_b w(sigma_b) || s_b - grad log p_0t ||^2
// Score-form weight w equals noise-form weight w / sigma^2.
template <typename Scalar, typename Weight>
double score_form_loss(const BasicDenoiser<Scalar>& model, const PoseBatch& x0, const Eigen::VectorXd& t,
                       const PoseBatch& eps, Weight&& weight, bool use_ema = false) {
  PoseBatch xt;
  const PoseBatch pred = detail::predict_perturbed(model, x0, t, eps, use_ema, xt);
  double total = 0.0;
  for (Eigen::Index b = 0; b < x0.cols(); ++b) {
    const auto c = coefficients(model.schedule(), t[b]);
    const PoseVector model_score = score_from_noise(model.schedule(), PoseVector(pred.col(b)), t[b]);
    const PoseVector kernel_score = -(xt.col(b) - c.alpha * x0.col(b)) / (c.sigma * c.sigma);
    total += weight(c.sigma) * (model_score - kernel_score).squaredNorm();
  }
  return total / static_cast<double>(x0.cols());
}

// The DSM training loss: noise form with weight sigma_t^2.
template <typename Scalar>
double dsm_loss(const BasicDenoiser<Scalar>& model, const PoseBatch& x0, const Eigen::VectorXd& t,
                const PoseBatch& eps, bool use_ema = false) {
  return noise_form_loss(model, x0, t, eps, [](double s) { return s * s; }, use_ema);
}

// dsm_loss in score form (weight sigma_t^4).
template <typename Scalar>
double dsm_loss_score_form(const BasicDenoiser<Scalar>& model, const PoseBatch& x0, const Eigen::VectorXd& t,
                           const PoseBatch& eps, bool use_ema = false) {
  return score_form_loss(model, x0, t, eps, [](double s) { return s * s * s * s; }, use_ema);
}

}  // namespace dposer
