#pragma once

#include <concepts>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dposer/adam.hpp"
#include "dposer/normalizer.hpp"
#include "dposer/rng.hpp"
#include "dposer/sde.hpp"
#include "dposer/types.hpp"

namespace dposer {

// Anything that predicts the injected noise for a normalized batch at a
// single diffusion time. BasicDenoiser satisfies it (EMA weights by default);
// tests plug in analytic predictors.
template <typename P>
concept NoisePredictor = requires(const P& p, const PoseBatch& x, double t) {
  { p.predict(x, t) } -> std::convertible_to<PoseBatch>;
  { p.schedule() } -> std::convertible_to<NoiseSchedule>;
};

// --- timestep scheduling ------------------------------------------------------

enum class ScheduleStrategy { truncated, uniform, fixed, random };

std::string to_string(ScheduleStrategy s);
ScheduleStrategy parse_schedule_strategy(std::string_view name);

struct ScheduleSpec {
  ScheduleStrategy strategy = ScheduleStrategy::truncated;
  double t_max = 0.2;
  double t_min = 0.05;
  double fixed_t = 0.1;
  // Lower end for the uniform and random baselines; the upper end is 1.
  double t_floor = 0.05;
  long iters = 500;

  void validate() const;
};

// Diffusion time for optimization step `iter` (0-based):
//   truncated  t_max - (t_max - t_min) iter / (N - 1)
//   uniform    1 - (1 - t_floor) iter / (N - 1)
//   fixed      fixed_t
//   random     U[t_floor, 1] drawn from `rng`
// With N = 1 the linear schedules return their upper end.
double schedule_t(const ScheduleSpec& spec, long iter, Rng& rng);

// --- the regularizer ----------------------------------------------------------

enum class WeightMode { constant, snr_scaled };

std::string to_string(WeightMode m);
WeightMode parse_weight_mode(std::string_view name);

struct PriorConfig {
  WeightMode weight_mode = WeightMode::constant;
  double lambda = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  // w_t: lambda, or lambda * alpha_t / sigma_t for snr_scaled.
  double weight(const DiffusionCoefficients& c) const {
    return weight_mode == WeightMode::constant ? lambda : lambda * c.alpha / c.sigma;
  }
};

inline constexpr double kMinAlpha = 1e-8;

inline DiffusionCoefficients prior_coefficients(const NoiseSchedule& schedule, double t) {
  if (!(t > 0.0)) throw DomainError("denoiser time must lie in (0, 1]");
  const auto c = coefficients(schedule, t);
  if (c.alpha < kMinAlpha) throw DomainError("singular time: alpha_t below 1e-8");
  return c;
}

// x_hat0 = (x_t - sigma_t eps_theta(x_t; t)) / alpha_t with x_t = alpha_t x0 + sigma_t eps.
// Works column-wise on batches.
template <NoisePredictor Model>
PoseBatch denoise_one_step(const Model& model, const PoseBatch& x0, double t, const PoseBatch& eps) {
  if (x0.cols() != eps.cols()) throw ShapeError("denoise_one_step: x0/eps shape mismatch");
  const auto c = prior_coefficients(model.schedule(), t);
  const PoseBatch xt = c.alpha * x0 + c.sigma * eps;
  const PoseBatch eps_hat = model.predict(xt, t);
  return (xt - c.sigma * eps_hat) / c.alpha;
}

template <NoisePredictor Model>
PoseVector denoise_one_step(const Model& model, const PoseVector& x0, double t, const PoseVector& eps) {
  return denoise_one_step(model, PoseBatch(x0), t, PoseBatch(eps)).col(0);
}

struct PriorTerm {
  double loss = 0.0;   // sum over columns of w_t |x0 - sg[x_hat0]|^2
  PoseBatch grad;      // d loss / d x0
  PoseBatch x_hat0;
  PoseBatch eps_hat;
  double weight = 0.0;
};

// Regularizer value and its gradient. The gradient is the closed form
// 2 w_t (sigma_t / alpha_t) (eps_hat - eps); the network is only evaluated,
// never differentiated.
template <NoisePredictor Model>
PriorTerm dposer_loss_and_grad(const Model& model, const PoseBatch& x0, double t, const PoseBatch& eps,
                               const PriorConfig& cfg) {
  if (x0.cols() != eps.cols()) throw ShapeError("dposer_loss_and_grad: x0/eps shape mismatch");
  const auto c = prior_coefficients(model.schedule(), t);
  PriorTerm out;
  out.weight = cfg.weight(c);
  const PoseBatch xt = c.alpha * x0 + c.sigma * eps;
  out.eps_hat = model.predict(xt, t);
  out.x_hat0 = (xt - c.sigma * out.eps_hat) / c.alpha;
  out.loss = out.weight * (x0 - out.x_hat0).squaredNorm();
  out.grad = (2.0 * out.weight * c.sigma / c.alpha) * (out.eps_hat - eps);
  return out;
}

// Multi-step variant: k DDIM sub-steps over the times
// t_i = t - i (t - t_end) / k, i = 0..k-1, returning the last x_hat0.
// k = 1 is exactly denoise_one_step.
template <NoisePredictor Model>
PoseBatch multi_step_denoise(const Model& model, const PoseBatch& x0, double t, const PoseBatch& eps, int k,
                             double t_end = 1e-3) {
  if (k < 1) throw DomainError("multi_step_denoise: k must be at least 1");
  if (x0.cols() != eps.cols()) throw ShapeError("multi_step_denoise: x0/eps shape mismatch");
  auto c = prior_coefficients(model.schedule(), t);
  PoseBatch x = c.alpha * x0 + c.sigma * eps;
  PoseBatch x_hat0;
  for (int i = 0; i < k; ++i) {
    const double ti = t - (t - t_end) * static_cast<double>(i) / k;
    c = prior_coefficients(model.schedule(), ti);
    const PoseBatch eps_hat = model.predict(x, ti);
    x_hat0 = (x - c.sigma * eps_hat) / c.alpha;
    if (i + 1 < k) {
      const auto next = prior_coefficients(model.schedule(), t - (t - t_end) * static_cast<double>(i + 1) / k);
      x = next.alpha * x_hat0 + next.sigma * eps_hat;
    }
  }
  return x_hat0;
}

// --- test-time optimization engine --------------------------------------------

struct InnerOptimizer {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Learning rate decays linearly from lr to lr * final_lr_fraction.
  double final_lr_fraction = 1.0;
};

// Flat optimization variables. Every offset in `pose_offsets` marks a 63-long
// normalized pose that receives the regularizer; anything else (shape,
// camera, ...) is task-only. `step_scale` optionally rescales the learning
// rate per coordinate.
struct OptimState {
  Eigen::VectorXd params;
  std::vector<Eigen::Index> pose_offsets;
  Eigen::VectorXd step_scale;
  long iteration = 0;
};

// Returns the task loss at `params` and accumulates its gradient into `grad`
// (zeroed by the caller).
using TaskObjective = std::function<double(const Eigen::VectorXd& params, Eigen::VectorXd& grad)>;

struct OptimTrace {
  std::vector<double> t;
  std::vector<double> task_loss;
  std::vector<double> prior_loss;
};

struct OptimResult {
  OptimState state;
  OptimTrace trace;
};

inline PoseBatch gather_poses(const OptimState& s) {
  PoseBatch x(kPoseDim, static_cast<Eigen::Index>(s.pose_offsets.size()));
  for (std::size_t i = 0; i < s.pose_offsets.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = s.params.segment<kPoseDim>(s.pose_offsets[i]);
  return x;
}

// Runs `spec.iters` first-order steps on task + regularizer. `stream` keys
// the per-iteration noise draws (e.g. the hypothesis index) while the
// timestep schedule is shared across streams.
template <NoisePredictor Model>
OptimResult optimize(const TaskObjective& task, OptimState init, const Model& model, const ScheduleSpec& spec,
                     const PriorConfig& cfg, const InnerOptimizer& opt, std::uint64_t stream = 0) {
  spec.validate();
  cfg.validate();
  const Eigen::Index n = init.params.size();
  for (auto off : init.pose_offsets)
    if (off < 0 || off + kPoseDim > n) throw ShapeError("optimize: pose block outside the parameter vector");
  if (init.step_scale.size() != 0 && init.step_scale.size() != n)
    throw ShapeError("optimize: step_scale must match the parameter count");

  OptimResult result{std::move(init), {}};
  OptimState& s = result.state;
  Adam<double> adam({opt.lr, opt.beta1, opt.beta2, opt.eps}, n);
  Eigen::VectorXd grad(n);
  const bool use_prior = cfg.lambda > 0.0 && !s.pose_offsets.empty();
  const Eigen::Index blocks = static_cast<Eigen::Index>(s.pose_offsets.size());
  PoseBatch eps(kPoseDim, blocks);

  for (long it = 0; it < spec.iters; ++it) {
    Rng sched_rng(cfg.seed, {0x5c4ed, static_cast<std::uint64_t>(it)});
    const double t = schedule_t(spec, it, sched_rng);
    grad.setZero();
    const double task_loss = task(s.params, grad);
    double prior_loss = 0.0;
    if (use_prior) {
      Rng noise_rng(cfg.seed, {0xe95, stream, static_cast<std::uint64_t>(it)});
      noise_rng.fill_normal(eps);
      const PriorTerm term = dposer_loss_and_grad(model, gather_poses(s), t, eps, cfg);
      prior_loss = term.loss;
      for (Eigen::Index b = 0; b < blocks; ++b) grad.segment<kPoseDim>(s.pose_offsets[b]) += term.grad.col(b);
    }
    if (!std::isfinite(task_loss) || !std::isfinite(prior_loss) || !grad.allFinite())
      throw DivergenceError("test-time optimization diverged", it);
    result.trace.t.push_back(t);
    result.trace.task_loss.push_back(task_loss);
    result.trace.prior_loss.push_back(prior_loss);

    const double frac = spec.iters > 1 ? static_cast<double>(it) / static_cast<double>(spec.iters - 1) : 0.0;
    const double lr_factor = 1.0 + (opt.final_lr_fraction - 1.0) * frac;
    adam.step(s.params, grad, lr_factor, s.step_scale);
    ++s.iteration;
  }
  return result;
}

}  // namespace dposer
