#pragma once

#include <string>
#include <string_view>

#include "dposer/types.hpp"

namespace dposer {

enum class NormMode { zscore, minmax, none };

std::string to_string(NormMode mode);
NormMode parse_norm_mode(std::string_view name);

// Per-dimension affine map between raw axis-angle space and the space the
// denoiser works in: normalized = (raw - offset) / scale.
//   zscore: offset = mean, scale = std
//   minmax: offset = (max + min) / 2, scale = (max - min) / 2, so data maps to [-1, 1]
//   none:   offset = 0, scale = 1
// Dimensions with (near) zero spread keep scale 1.
struct Normalizer {
  NormMode mode = NormMode::none;
  PoseVector offset = PoseVector::Zero();
  PoseVector scale = PoseVector::Ones();

  static Normalizer fit(const PoseBatch& raw_poses, NormMode mode);

  void validate() const;

  template <typename Derived>
  auto normalize(const Eigen::MatrixBase<Derived>& raw) const {
    return ((raw.colwise() - offset).array().colwise() / scale.array()).matrix().eval();
  }
  template <typename Derived>
  auto denormalize(const Eigen::MatrixBase<Derived>& normalized) const {
    return ((normalized.array().colwise() * scale.array()).matrix().colwise() + offset).eval();
  }

  bool operator==(const Normalizer& other) const {
    return mode == other.mode && offset == other.offset && scale == other.scale;
  }
};

}  // namespace dposer
