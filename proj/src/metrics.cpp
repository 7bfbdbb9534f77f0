#include "dposer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace dposer {

double mpjpe(const Joints3& pred, const Joints3& gt, const std::optional<std::vector<int>>& subset) {
  if (pred.cols() != gt.cols()) throw ShapeError("mpjpe: joint count mismatch");
  if (subset) {
    if (subset->empty()) throw DomainError("mpjpe: empty joint subset");
    double total = 0.0;
    for (int j : *subset) {
      if (j < 0 || j >= gt.cols()) throw DomainError("mpjpe: joint index out of range");
      total += (pred.col(j) - gt.col(j)).norm();
    }
    return total / static_cast<double>(subset->size());
  }
  if (gt.cols() == 0) throw DomainError("mpjpe: no joints");
  return (pred - gt).colwise().norm().mean();
}

double pa_mpjpe(const Joints3& pred, const Joints3& gt) {
  if (pred.cols() != gt.cols()) throw ShapeError("pa_mpjpe: joint count mismatch");
  if (gt.cols() < 3) throw AlignmentError("pa_mpjpe: need at least three joints");
  auto spread = [](const Joints3& j) {
    const Joints3 c = j.colwise() - j.rowwise().mean();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(c * c.transpose());
    const auto s = svd.singularValues();
    return std::pair{s[0], s[1]};
  };
  const auto [p0, p1] = spread(pred);
  const auto [g0, g1] = spread(gt);
  if (!(p1 > 1e-12 * std::max(p0, 1.0)) || !(g1 > 1e-12 * std::max(g0, 1.0)))
    throw AlignmentError("pa_mpjpe: degenerate (collinear) joint configuration");
  const Eigen::Matrix4d T = Eigen::umeyama(pred, gt, /*with_scaling=*/true);
  const Joints3 aligned = (T.topLeftCorner<3, 3>() * pred).colwise() + T.topRightCorner<3, 1>();
  return mpjpe(aligned, gt);
}

double apd(const PoseBatch& raw_poses, const KinematicTree& tree) {
  const Eigen::Index n = raw_poses.cols();
  if (n < 2) throw DomainError("apd: need at least two poses");
  std::vector<Joints3> joints;
  joints.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) joints.push_back(fk(tree, raw_poses.col(i), ShapeVector::Zero()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = i + 1; k < n; ++k) total += mpjpe(joints[i], joints[k]);
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

HypothesisStats hypothesis_stats(const std::vector<double>& errors) {
  if (errors.empty()) throw DomainError("hypothesis_stats: no hypotheses");
  const Eigen::Map<const Eigen::ArrayXd> e(errors.data(), static_cast<Eigen::Index>(errors.size()));
  HypothesisStats s;
  s.min = e.minCoeff();
  s.mean = e.mean();
  s.std = std::sqrt((e - s.mean).square().mean());
  return s;
}

namespace {

// Blocked brute force through |r|^2 + |q|^2 - 2 r.q; with skip_self the
// queries are the reference set and each pose ignores itself.
Eigen::VectorXd nearest(const PoseBatch& reference, const PoseBatch& queries, bool skip_self) {
  if (reference.cols() < (skip_self ? 2 : 1)) throw DomainError("nearest neighbour search needs reference poses");
  const Eigen::VectorXd ref_sq = reference.colwise().squaredNorm().transpose();
  Eigen::VectorXd out(queries.cols());
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index q0 = 0; q0 < queries.cols(); q0 += kBlock) {
    const Eigen::Index nq = std::min(kBlock, queries.cols() - q0);
    const auto block = queries.middleCols(q0, nq);
    Eigen::MatrixXd d2 = -2.0 * reference.transpose() * block;
    d2.colwise() += ref_sq;
    d2.rowwise() += block.colwise().squaredNorm();
    for (Eigen::Index j = 0; j < nq; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < reference.cols(); ++i) {
        if (skip_self && i == q0 + j) continue;
        best = std::min(best, d2(i, j));
      }
      out[q0 + j] = std::sqrt(std::max(best, 0.0));
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd nearest_neighbor_distances(const PoseBatch& reference, const PoseBatch& queries) {
  return nearest(reference, queries, false);
}

Eigen::VectorXd intra_nearest_neighbor_distances(const PoseBatch& reference) {
  return nearest(reference, reference, true);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SupportReport support_check(const PoseBatch& training, const PoseBatch& samples, double q) {
  if (samples.cols() == 0) throw DomainError("support check needs samples");
  const Eigen::VectorXd intra = intra_nearest_neighbor_distances(training);
  SupportReport r;
  r.threshold = quantile(std::vector<double>(intra.begin(), intra.end()), q);
  const Eigen::VectorXd d = nearest_neighbor_distances(training, samples);
  r.fraction = static_cast<double>((d.array() < r.threshold).count()) / static_cast<double>(samples.cols());
  return r;
}

}  // namespace dposer
