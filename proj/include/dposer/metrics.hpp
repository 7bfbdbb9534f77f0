#pragma once

#include <optional>
#include <vector>

#include "dposer/body_model.hpp"
#include "dposer/types.hpp"

namespace dposer {

// Mean Euclidean distance over joints, optionally restricted to `subset`.
double mpjpe(const Joints3& pred, const Joints3& gt, const std::optional<std::vector<int>>& subset = std::nullopt);

// MPJPE after the optimal similarity transform (rotation, translation and
// uniform scale) of pred onto gt. Throws AlignmentError for degenerate
// (collinear) configurations.
double pa_mpjpe(const Joints3& pred, const Joints3& gt);

// Average over unordered pairs of the mean per-joint distance between the
// root-anchored FK joints of each pose. Needs at least two poses.
double apd(const PoseBatch& raw_poses, const KinematicTree& tree);

struct HypothesisStats {
  double min = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

HypothesisStats hypothesis_stats(const std::vector<double>& errors);

// Euclidean distance in raw pose space from every query to its nearest
// reference pose.
Eigen::VectorXd nearest_neighbor_distances(const PoseBatch& reference, const PoseBatch& queries);
// Distance from every reference pose to its nearest other reference pose.
Eigen::VectorXd intra_nearest_neighbor_distances(const PoseBatch& reference);

// Linear-interpolation quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

// Fraction of samples whose nearest training pose is closer than the given
// quantile of intra-dataset nearest-neighbour distances.
struct SupportReport {
  double threshold = 0.0;
  double fraction = 0.0;
};
SupportReport support_check(const PoseBatch& training, const PoseBatch& samples, double q = 0.99);

struct MetricsReport {
  std::optional<double> mpjpe;
  std::optional<double> pa_mpjpe;
  std::optional<double> apd;
  std::optional<HypothesisStats> hypotheses;
  double runtime_seconds = 0.0;
};

}  // namespace dposer
