#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace dposer {

inline constexpr int kPoseDim = 63;   // 21 body joints x axis-angle
inline constexpr int kNumBodyJoints = 21;
inline constexpr int kShapeDim = 10;

template <typename Scalar>
using PoseVectorT = Eigen::Matrix<Scalar, kPoseDim, 1>;
using PoseVector = PoseVectorT<double>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using ShapeVector = Eigen::Matrix<double, kShapeDim, 1>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Joint positions, one column per joint.
using Joints3 = Eigen::Matrix3Xd;
using Joints2 = Eigen::Matrix2Xd;

// A batch of poses, one column per pose.
using PoseBatch = Eigen::Matrix<double, kPoseDim, Eigen::Dynamic>;

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DomainError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class StateError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class FormatError : public DataError {
 public:
  using DataError::DataError;
};
class CorruptionError : public DataError {
 public:
  using DataError::DataError;
};
class AlignmentError : public DomainError {
 public:
  using DomainError::DomainError;
};
class FittingError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Non-finite values encountered during an iterative procedure.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace dposer
