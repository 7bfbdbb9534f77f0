#include "dposer/sde.hpp"

namespace dposer {

void NoiseSchedule::validate() const {
  if (!(xi_min > 0.0) || !(xi_max > xi_min) || !std::isfinite(xi_max))
    throw DomainError("NoiseSchedule requires 0 < xi_min < xi_max");
}

DiffusionCoefficients coefficients(const NoiseSchedule& schedule, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("diffusion time must lie in [0, 1], got " + std::to_string(t));
  DiffusionCoefficients c;
  c.t = t;
  c.alpha = std::exp(-0.5 * schedule.integrated_rate(t));
  c.sigma = 1.0 - c.alpha * c.alpha;
  return c;
}

}  // namespace dposer
