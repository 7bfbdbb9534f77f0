#include "dposer/normalizer.hpp"

#include <cmath>

namespace dposer {

namespace {
constexpr double kMinSpread = 1e-8;
}

std::string to_string(NormMode mode) {
  switch (mode) {
    case NormMode::zscore: return "zscore";
    case NormMode::minmax: return "minmax";
    case NormMode::none: return "none";
  }
  return "none";
}

NormMode parse_norm_mode(std::string_view name) {
  if (name == "zscore") return NormMode::zscore;
  if (name == "minmax") return NormMode::minmax;
  if (name == "none") return NormMode::none;
  throw DomainError("unknown normalization mode '" + std::string(name) + "'");
}

Normalizer Normalizer::fit(const PoseBatch& raw_poses, NormMode mode) {
  Normalizer n;
  n.mode = mode;
  if (mode == NormMode::none) return n;
  if (raw_poses.cols() == 0) throw DataError("cannot fit normalization statistics on an empty dataset");

  if (mode == NormMode::zscore) {
    n.offset = raw_poses.rowwise().mean();
    const PoseBatch centered = raw_poses.colwise() - n.offset;
    n.scale = (centered.array().square().rowwise().sum() / static_cast<double>(raw_poses.cols())).sqrt();
  } else {
    const PoseVector lo = raw_poses.rowwise().minCoeff();
    const PoseVector hi = raw_poses.rowwise().maxCoeff();
    n.offset = 0.5 * (hi + lo);
    n.scale = 0.5 * (hi - lo);
  }
  for (int i = 0; i < kPoseDim; ++i)
    if (!(n.scale[i] > kMinSpread)) n.scale[i] = 1.0;
  return n;
}

void Normalizer::validate() const {
  if (!offset.allFinite() || !scale.allFinite()) throw DomainError("normalizer has non-finite statistics");
  if ((scale.array() <= 0.0).any()) throw DomainError("normalizer scale must be strictly positive");
}

}  // namespace dposer
