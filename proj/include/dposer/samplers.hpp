#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dposer/denoiser.hpp"
#include "dposer/rng.hpp"
#include "dposer/types.hpp"

namespace dposer {

enum class SamplerKind { euler_maruyama, ddim };

std::string to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view name);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::euler_maruyama;
  int steps = 1000;
  double t_start = 1.0;
  double t_end = 1e-3;
  std::uint64_t seed = 0;

  static SamplerSpec euler_maruyama(int steps = 1000, std::uint64_t seed = 0) {
    return {SamplerKind::euler_maruyama, steps, 1.0, 1e-3, seed};
  }
  static SamplerSpec ddim(int steps = 10, std::uint64_t seed = 0) { return {SamplerKind::ddim, steps, 1.0, 1e-3, seed}; }

  void validate() const;
  // t_k = t_start - k (t_start - t_end) / steps, k = 0..steps
  std::vector<double> time_grid() const;
};

struct SamplerHooks {
  // Forces mu(t) = g(t) = 0 in the reverse update.
  bool freeze_dynamics = false;
  // When false the state at t_end is returned as is instead of its x_hat0.
  bool final_denoise = true;
  // Called after every step with the step index, the new time and the
  // normalized state of the current chunk.
  std::function<void(int step, double t, const PoseBatch& x)> observer;
};

// Samples are produced in chunks of this many columns. Every sample owns the
// random stream (seed, sample index), so the output does not depend on how
// chunks are scheduled.
inline constexpr Eigen::Index kSampleChunk = 256;

// Per-sample random streams and the standard-normal starting state.
std::vector<Rng> sample_streams(std::uint64_t seed, Eigen::Index first, Eigen::Index count);
PoseBatch draw_normal(std::vector<Rng>& streams);

// x <- x - (mu(t) x - g(t)^2 s) dt + g(t) sqrt(dt) z with s = -eps_hat / sigma_t.
void reverse_em_update(const NoiseSchedule& schedule, PoseBatch& x, const PoseBatch& eps_hat, double t, double dt,
                       const PoseBatch& z, bool frozen = false);

// x_t' = alpha_t' x_hat0 + sigma_t' eps_hat, with x_hat0 formed at t.
void ddim_update(const NoiseSchedule& schedule, PoseBatch& x, const PoseBatch& eps_hat, double t, double t_next);

// Both return raw (denormalized) poses, one per column.
template <typename Scalar>
PoseBatch sample_em(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n,
                    const SamplerHooks& hooks = {});

template <typename Scalar>
PoseBatch sample_ddim(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n,
                      const SamplerHooks& hooks = {});

// Dispatches on spec.kind.
template <typename Scalar>
PoseBatch sample(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n,
                 const SamplerHooks& hooks = {});

}  // namespace dposer
