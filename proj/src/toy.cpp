#include "dposer/toy.hpp"

namespace dposer {

SyntheticFamilySpec toy_family() { return {PoseFamily::walk_cycle, 32, 0.05, 4096, 7}; }

TrainConfig toy_train_config() {
  TrainConfig cfg;
  cfg.lr = 2e-3;
  cfg.batch_size = 256;
  cfg.iters = 5000;
  cfg.seed = 3;
  cfg.warmup_iters = 500;
  cfg.weighting = LossWeighting::unit;
  cfg.lr_final_fraction = 0.05;
  return cfg;
}

Denoiser make_denoiser(const PoseBatch& poses, const DenoiserArch& arch, NormMode norm, double ema_decay,
                       std::uint64_t init_seed) {
  Denoiser model(arch, NoiseSchedule{}, Normalizer::fit(poses, norm), ema_decay);
  model.initialize(init_seed);
  return model;
}

}  // namespace dposer
