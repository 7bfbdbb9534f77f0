#pragma once

#include <cmath>

#include "dposer/types.hpp"

namespace dposer {

// Linear noise-rate schedule xi(t) = xi_min + t (xi_max - xi_min) driving the
// sub-VP forward SDE
//   dx = -1/2 xi(t) x dt + sqrt(xi(t) (1 - exp(-2 int_0^t xi))) dw.
struct NoiseSchedule {
  double xi_min = 0.1;
  double xi_max = 20.0;

  void validate() const;

  double rate(double t) const { return xi_min + t * (xi_max - xi_min); }
  // int_0^t xi(s) ds
  double integrated_rate(double t) const { return xi_min * t + 0.5 * (xi_max - xi_min) * t * t; }
  // Drift factor mu(t); the drift term is mu(t) x.
  double drift(double t) const { return -0.5 * rate(t); }
  double diffusion_squared(double t) const { return rate(t) * -std::expm1(-2.0 * integrated_rate(t)); }
  double diffusion(double t) const { return std::sqrt(diffusion_squared(t)); }

  bool operator==(const NoiseSchedule&) const = default;
};

// Perturbation kernel p(x_t | x_0) = N(alpha x_0, sigma^2 I).
struct DiffusionCoefficients {
  double t = 0.0;
  double alpha = 1.0;
  double sigma = 0.0;
};

// Closed-form coefficients; sigma is formed as 1 - alpha^2 so the sub-VP
// identity holds exactly. Throws DomainError for t outside [0, 1].
DiffusionCoefficients coefficients(const NoiseSchedule& schedule, double t);

// x_t = alpha_t x_0 + sigma_t eps
template <typename Derived, typename DerivedEps>
auto perturb(const NoiseSchedule& schedule, const Eigen::MatrixBase<Derived>& x0, double t,
             const Eigen::MatrixBase<DerivedEps>& eps) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ShapeError("perturb: x0/eps shape mismatch");
  const auto c = coefficients(schedule, t);
  using Scalar = typename Derived::Scalar;
  return (static_cast<Scalar>(c.alpha) * x0 + static_cast<Scalar>(c.sigma) * eps).eval();
}

// s = -eps_hat / sigma_t. Throws DomainError when sigma_t == 0.
template <typename Derived>
auto score_from_noise(const NoiseSchedule& schedule, const Eigen::MatrixBase<Derived>& eps_hat, double t) {
  const auto c = coefficients(schedule, t);
  if (!(c.sigma > 0.0)) throw DomainError("score_from_noise: singular time (sigma_t = 0)");
  using Scalar = typename Derived::Scalar;
  return (eps_hat * static_cast<Scalar>(-1.0 / c.sigma)).eval();
}

template <typename Derived>
auto noise_from_score(const NoiseSchedule& schedule, const Eigen::MatrixBase<Derived>& score, double t) {
  const auto c = coefficients(schedule, t);
  using Scalar = typename Derived::Scalar;
  return (score * static_cast<Scalar>(-c.sigma)).eval();
}

}  // namespace dposer
