#pragma once

#include <cmath>

#include "dposer/types.hpp"

namespace dposer {

struct AdamParams {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain Adam with bias correction over a flat parameter vector.
template <typename Scalar>
class Adam {
 public:
  using Vector = VectorX<Scalar>;

  Adam() = default;
  Adam(AdamParams params, Eigen::Index size)
      : params_(params), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

  // `step_scale`, if non-empty, multiplies the learning rate per coordinate.
  void step(Eigen::Ref<Vector> x, const Eigen::Ref<const Vector>& grad, double lr_factor = 1.0,
            const Vector& step_scale = Vector()) {
    if (grad.size() != m_.size() || x.size() != m_.size()) throw ShapeError("Adam: parameter/gradient size mismatch");
    ++t_;
    const Scalar b1 = static_cast<Scalar>(params_.beta1);
    const Scalar b2 = static_cast<Scalar>(params_.beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    const Scalar lr = static_cast<Scalar>(params_.lr * lr_factor * std::sqrt(c2) / c1);
    const Scalar eps = static_cast<Scalar>(params_.eps * std::sqrt(c2));
    if (step_scale.size() == 0)
      x.array() -= lr * m_.array() / (v_.array().sqrt() + eps);
    else
      x.array() -= lr * step_scale.array() * m_.array() / (v_.array().sqrt() + eps);
  }

  long steps() const { return t_; }
  const AdamParams& params() const { return params_; }

 private:
  AdamParams params_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

}  // namespace dposer
