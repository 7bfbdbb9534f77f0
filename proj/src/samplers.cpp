#include "dposer/samplers.hpp"

#include <cmath>

#include "dposer/parallel.hpp"

namespace dposer {

std::string to_string(SamplerKind kind) { return kind == SamplerKind::ddim ? "ddim" : "euler_maruyama"; }

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "euler_maruyama" || name == "em") return SamplerKind::euler_maruyama;
  if (name == "ddim") return SamplerKind::ddim;
  throw DomainError("unknown sampler '" + std::string(name) + "'");
}

void SamplerSpec::validate() const {
  if (steps < 1) throw DomainError("sampler needs at least one step");
  if (!(t_end > 0.0 && t_end < t_start && t_start <= 1.0)) throw DomainError("sampler requires 0 < t_end < t_start <= 1");
}

std::vector<double> SamplerSpec::time_grid() const {
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) grid[k] = t_start - (t_start - t_end) * static_cast<double>(k) / steps;
  grid.back() = t_end;
  return grid;
}

std::vector<Rng> sample_streams(std::uint64_t seed, Eigen::Index first, Eigen::Index count) {
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) streams.emplace_back(seed, std::initializer_list<std::uint64_t>{static_cast<std::uint64_t>(first + i)});
  return streams;
}

PoseBatch draw_normal(std::vector<Rng>& streams) {
  PoseBatch z(kPoseDim, static_cast<Eigen::Index>(streams.size()));
  for (std::size_t j = 0; j < streams.size(); ++j) streams[j].fill_normal(z.col(static_cast<Eigen::Index>(j)));
  return z;
}

void reverse_em_update(const NoiseSchedule& schedule, PoseBatch& x, const PoseBatch& eps_hat, double t, double dt,
                       const PoseBatch& z, bool frozen) {
  const auto c = coefficients(schedule, t);
  const double mu = frozen ? 0.0 : schedule.drift(t);
  const double g2 = frozen ? 0.0 : schedule.diffusion_squared(t);
  // -(mu x - g^2 s) dt with s = -eps_hat / sigma
  x = x - (mu * x + (g2 / c.sigma) * eps_hat) * dt + std::sqrt(g2 * dt) * z;
}

void ddim_update(const NoiseSchedule& schedule, PoseBatch& x, const PoseBatch& eps_hat, double t, double t_next) {
  const auto c = coefficients(schedule, t);
  const auto n = coefficients(schedule, t_next);
  const PoseBatch x_hat0 = (x - c.sigma * eps_hat) / c.alpha;
  x = n.alpha * x_hat0 + n.sigma * eps_hat;
}

namespace {

void check_state(const PoseBatch& x, int step) {
  if (!x.allFinite()) throw DivergenceError("sampler state became non-finite", step);
}

template <typename Scalar, typename Step>
PoseBatch run_sampler(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n,
                      const SamplerHooks& hooks, Step&& step) {
  spec.validate();
  if (n < 0) throw DomainError("sample count must be non-negative");
  const auto grid = spec.time_grid();
  PoseBatch out(kPoseDim, n);
  const Eigen::Index chunks = (n + kSampleChunk - 1) / kSampleChunk;
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
    const Eigen::Index first = static_cast<Eigen::Index>(c) * kSampleChunk;
    const Eigen::Index count = std::min(kSampleChunk, n - first);
    auto streams = sample_streams(spec.seed, first, count);
    PoseBatch x = draw_normal(streams);
    for (int k = 0; k < spec.steps; ++k) {
      const PoseBatch eps_hat = model.predict(x, grid[k]);
      step(x, eps_hat, grid[k], grid[k + 1], streams);
      check_state(x, k);
      if (hooks.observer) hooks.observer(k, grid[k + 1], x);
    }
    if (hooks.final_denoise) {
      const auto e = coefficients(model.schedule(), spec.t_end);
      x = (x - e.sigma * model.predict(x, spec.t_end)) / e.alpha;
      check_state(x, spec.steps);
    }
    out.middleCols(first, count) = model.normalizer().denormalize(x);
  });
  return out;
}

}  // namespace

template <typename Scalar>
PoseBatch sample_em(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n,
                    const SamplerHooks& hooks) {
  if (spec.kind != SamplerKind::euler_maruyama) throw DomainError("sample_em needs an euler_maruyama spec");
  return run_sampler(model, spec, n, hooks,
                     [&](PoseBatch& x, const PoseBatch& eps_hat, double t, double t_next, std::vector<Rng>& streams) {
                       const PoseBatch z = draw_normal(streams);
                       reverse_em_update(model.schedule(), x, eps_hat, t, t - t_next, z, hooks.freeze_dynamics);
                     });
}

template <typename Scalar>
PoseBatch sample_ddim(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n,
                      const SamplerHooks& hooks) {
  if (spec.kind != SamplerKind::ddim) throw DomainError("sample_ddim needs a ddim spec");
  return run_sampler(model, spec, n, hooks,
                     [&](PoseBatch& x, const PoseBatch& eps_hat, double t, double t_next, std::vector<Rng>&) {
                       if (!hooks.freeze_dynamics) ddim_update(model.schedule(), x, eps_hat, t, t_next);
                     });
}

template <typename Scalar>
PoseBatch sample(const BasicDenoiser<Scalar>& model, const SamplerSpec& spec, Eigen::Index n,
                 const SamplerHooks& hooks) {
  return spec.kind == SamplerKind::ddim ? sample_ddim(model, spec, n, hooks) : sample_em(model, spec, n, hooks);
}

#define DPOSER_INSTANTIATE(S)                                                                               \
  template PoseBatch sample_em<S>(const BasicDenoiser<S>&, const SamplerSpec&, Eigen::Index, const SamplerHooks&);   \
  template PoseBatch sample_ddim<S>(const BasicDenoiser<S>&, const SamplerSpec&, Eigen::Index, const SamplerHooks&); \
  template PoseBatch sample<S>(const BasicDenoiser<S>&, const SamplerSpec&, Eigen::Index, const SamplerHooks&);
DPOSER_INSTANTIATE(float)
DPOSER_INSTANTIATE(double)
#undef DPOSER_INSTANTIATE

}  // namespace dposer
