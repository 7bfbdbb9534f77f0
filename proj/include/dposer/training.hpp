#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dposer/denoiser.hpp"

namespace dposer {

// Per-sample weight of |eps - eps_hat|^2 in the training loss.
//   sigma2: sigma_t^2 (the noise-form weight of dsm_loss)
//   unit:   1, i.e. sigma_t^2 in score form
enum class LossWeighting { sigma2, unit };

std::string to_string(LossWeighting w);
LossWeighting parse_loss_weighting(std::string_view name);

struct TrainConfig {
  double lr = 2e-4;
  int batch_size = 256;
  long iters = 5000;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Lower bound of the uniform training-time distribution; keeps sigma_t > 0.
  double t_floor = 1e-5;
  // Linear warmup from 0 over the first warmup_iters steps, then linear
  // decay to lr * lr_final_fraction at the last step.
  long warmup_iters = 0;
  LossWeighting weighting = LossWeighting::sigma2;
  double lr_final_fraction = 1.0;

  double lr_factor(long iter) const;

  void validate() const;
};

struct TrainReport {
  std::vector<double> loss;      // training objective, one entry per iteration
  std::vector<double> dsm_loss;  // sigma_t^2-weighted DSM loss on the same batch
};

// Trains `model` in place on raw-space poses with the sigma^2-weighted noise
// prediction loss. The model's normalizer must already describe `raw_poses`
// (see Normalizer::fit). Raw weights are optimized with Adam; the EMA shadow
// is updated after every step.
template <typename Scalar>
TrainReport train(BasicDenoiser<Scalar>& model, const PoseBatch& raw_poses, const TrainConfig& cfg);

extern template TrainReport train(BasicDenoiser<float>&, const PoseBatch&, const TrainConfig&);
extern template TrainReport train(BasicDenoiser<double>&, const PoseBatch&, const TrainConfig&);

}  // namespace dposer
