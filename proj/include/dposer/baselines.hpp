#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "dposer/samplers.hpp"
#include "dposer/tasks.hpp"

namespace dposer {

enum class SolverKind { score_sde_bp, mcg, dps };

std::string to_string(SolverKind kind);
SolverKind parse_solver_kind(std::string_view name);

struct SolverSpec {
  SolverKind kind = SolverKind::score_sde_bp;
  int steps = 1000;
  double guidance_scale = 1.0;  // zeta
  std::uint64_t seed = 0;
  double t_start = 1.0;
  double t_end = 1e-3;

  void validate() const;
  // Sampler with the same grid and seed; hypothesis h uses sample stream h.
  SamplerSpec sampler() const { return {SamplerKind::euler_maruyama, steps, t_start, t_end, seed}; }
};

// Called right after every back-projection with the step index, the new time,
// the chunk state and the noise used for the re-perturbed observation.
using ProjectionObserver =
    std::function<void(int step, double t, const PoseBatch& x, const PoseBatch& projection_noise)>;

// Gradient of |M (y - x_hat0(x_t))| with respect to x_t, per column, using
// the denoiser's input gradients. y is normalized.
struct Guidance {
  PoseBatch grad;
  PoseBatch eps_hat;
  Eigen::VectorXd residual_norm;
};

template <typename Scalar>
Guidance dps_guidance(const BasicDenoiser<Scalar>& model, const PoseBatch& x, double t, const PoseVector& y_n,
                      const MaskOperator& mask);

// Completion by conditioned reverse sampling. Returns raw hypotheses with the
// same scoring as complete_pose.
template <typename Scalar>
HypothesisSet solve_completion(const BasicDenoiser<Scalar>& model, const MaskOperator& mask,
                               const Eigen::VectorXd& y_raw, const SolverSpec& spec, int S,
                               const KinematicTree* tree = nullptr,
                               const std::optional<PoseVector>& gt_raw = std::nullopt,
                               const ProjectionObserver& observer = {});

}  // namespace dposer
