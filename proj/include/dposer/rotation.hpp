#pragma once

#include <cmath>

#include <Eigen/Core>

namespace dposer {

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& v) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return m;
}

// Rodrigues' formula, exp([w]x).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> axis_angle_to_matrix(const Eigen::Matrix<Scalar, 3, 1>& w) {
  using std::cos;
  using std::sin;
  const Scalar theta2 = w.squaredNorm();
  const Eigen::Matrix<Scalar, 3, 3> K = skew(w);
  Scalar a, b;
  if (theta2 < Scalar(1e-12)) {
    a = Scalar(1) - theta2 / Scalar(6);
    b = Scalar(0.5) - theta2 / Scalar(24);
  } else {
    const Scalar theta = std::sqrt(theta2);
    a = sin(theta) / theta;
    b = (Scalar(1) - cos(theta)) / theta2;
  }
  return Eigen::Matrix<Scalar, 3, 3>::Identity() + a * K + b * K * K;
}

// Left Jacobian of SO(3): dR(w) R(w)^T = [J_l(w) dw]x.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3_left_jacobian(const Eigen::Matrix<Scalar, 3, 1>& w) {
  using std::cos;
  using std::sin;
  const Scalar theta2 = w.squaredNorm();
  const Eigen::Matrix<Scalar, 3, 3> K = skew(w);
  Scalar a, b;
  if (theta2 < Scalar(1e-8)) {
    a = Scalar(0.5) - theta2 / Scalar(24);
    b = Scalar(1) / Scalar(6) - theta2 / Scalar(120);
  } else {
    const Scalar theta = std::sqrt(theta2);
    a = (Scalar(1) - cos(theta)) / theta2;
    b = (theta - sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix<Scalar, 3, 3>::Identity() + a * K + b * K * K;
}

}  // namespace dposer
