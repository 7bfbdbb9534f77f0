#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dposer/baselines.hpp"
#include "dposer/tasks.hpp"

namespace dposer {

// Paired-seed harnesses shared by the command line tools and the test suite.
// Every case is derived from (seed, case index) alone, so all compared
// methods see identical problems.

enum class BenchTask { complete, motion, fit2d };

std::string to_string(BenchTask task);
BenchTask parse_bench_task(std::string_view name);

// Held-out ground truth drawn from the training distribution.
PoseVector completion_case(const SyntheticFamilySpec& family, std::uint64_t seed, int index);

struct MotionCase {
  PoseBatch poses;              // clean, raw
  std::vector<Joints3> clean;   // mm
  std::vector<Joints3> noisy;   // mm
};
MotionCase motion_case(const KinematicTree& tree, const SyntheticFamilySpec& family, int frames, double noise_std,
                       std::uint64_t seed, int index);

struct FitCase {
  FitState truth;
  Keypoints2D keypoints;
};
FitCase fit_case(const KinematicTree& tree, const SyntheticFamilySpec& family, double keypoint_noise,
                 std::uint64_t seed, int index);

// Derived per-case seed for the optimizers and samplers.
std::uint64_t case_seed(std::uint64_t seed, int index);

struct AblationSetup {
  BenchTask task = BenchTask::complete;
  SyntheticFamilySpec family;
  std::uint64_t seed = 0;
  int cases = 10;
  int hypotheses = 5;
  std::string preset = "left_leg";
  int frames = 60;
  double noise_std = 40.0;
  double keypoint_noise = 2.0;
  CompletionConfig completion;
  MotionConfig motion;
  FitConfig fit;
};

struct AblationRow {
  BenchTask task = BenchTask::complete;
  ScheduleStrategy strategy = ScheduleStrategy::truncated;
  int cases = 0;
  std::string metric;
  double value = 0.0;
  std::vector<double> per_case;
};

// Primary metrics: mean min-MPJPE over hypotheses (complete), mean MPJPE of
// the denoised frames (motion), mean PA-MPJPE of the fitted joints (fit2d).
template <typename Scalar>
std::vector<AblationRow> ablate_schedule(const BasicDenoiser<Scalar>& model, const KinematicTree& tree,
                                         const AblationSetup& setup, const std::vector<ScheduleStrategy>& strategies);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

struct SolverBenchSetup {
  SyntheticFamilySpec family;
  std::uint64_t seed = 0;
  int cases = 20;
  int hypotheses = 10;
  std::string preset = "left_leg";
  CompletionConfig dposer;
  SolverSpec solver;
};

struct SolverBenchRecord {
  std::string method;
  int case_index = 0;
  HypothesisStats stats;
  double max_visible_residual = 0.0;
};

// Methods: dposer, no_prior (dposer engine with the regularizer switched off),
// score_sde_bp, mcg, dps.
template <typename Scalar>
std::vector<SolverBenchRecord> bench_solvers(const BasicDenoiser<Scalar>& model, const KinematicTree& tree,
                                             const SolverBenchSetup& setup, const std::vector<std::string>& methods);

// One row per method: mean min/mean MPJPE, worst visible residual and the
// fraction of cases where dposer's min-MPJPE is at most the method's.
void write_solver_csv(const std::vector<SolverBenchRecord>& records, const std::string& path);

}  // namespace dposer
