#include "dposer/prior.hpp"

namespace dposer {

std::string to_string(ScheduleStrategy s) {
  switch (s) {
    case ScheduleStrategy::truncated: return "truncated";
    case ScheduleStrategy::uniform: return "uniform";
    case ScheduleStrategy::fixed: return "fixed";
    case ScheduleStrategy::random: return "random";
  }
  return "truncated";
}

ScheduleStrategy parse_schedule_strategy(std::string_view name) {
  if (name == "truncated") return ScheduleStrategy::truncated;
  if (name == "uniform") return ScheduleStrategy::uniform;
  if (name == "fixed") return ScheduleStrategy::fixed;
  if (name == "random") return ScheduleStrategy::random;
  throw DomainError("unknown schedule strategy '" + std::string(name) + "'");
}

std::string to_string(WeightMode m) { return m == WeightMode::constant ? "constant" : "snr_scaled"; }

WeightMode parse_weight_mode(std::string_view name) {
  if (name == "constant") return WeightMode::constant;
  if (name == "snr_scaled") return WeightMode::snr_scaled;
  throw DomainError("unknown weight mode '" + std::string(name) + "'");
}

void ScheduleSpec::validate() const {
  if (!(t_min > 0.0 && t_min <= t_max && t_max <= 1.0)) throw DomainError("schedule requires 0 < t_min <= t_max <= 1");
  if (!(fixed_t > 0.0 && fixed_t <= 1.0)) throw DomainError("schedule requires 0 < fixed_t <= 1");
  if (!(t_floor > 0.0 && t_floor <= 1.0)) throw DomainError("schedule requires 0 < t_floor <= 1");
  if (iters < 1) throw DomainError("schedule requires at least one iteration");
}

double schedule_t(const ScheduleSpec& spec, long iter, Rng& rng) {
  if (iter < 0 || iter >= spec.iters)
    throw DomainError("schedule_t: iteration " + std::to_string(iter) + " outside [0, " + std::to_string(spec.iters) + ")");
  const double frac = spec.iters > 1 ? static_cast<double>(iter) / static_cast<double>(spec.iters - 1) : 0.0;
  switch (spec.strategy) {
    case ScheduleStrategy::truncated: return spec.t_max - (spec.t_max - spec.t_min) * frac;
    case ScheduleStrategy::uniform: return 1.0 - (1.0 - spec.t_floor) * frac;
    case ScheduleStrategy::fixed: return spec.fixed_t;
    case ScheduleStrategy::random: return rng.uniform(spec.t_floor, 1.0);
  }
  return spec.t_max;
}

void PriorConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("prior lambda must be a finite non-negative number");
}

}  // namespace dposer
