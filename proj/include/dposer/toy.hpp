#pragma once

#include "dposer/data.hpp"
#include "dposer/denoiser.hpp"
#include "dposer/training.hpp"

namespace dposer {

// The small prior used by the examples and the acceptance suite: a 32-mode
// walk cycle and a recipe that trains on one CPU core in about a minute.
SyntheticFamilySpec toy_family();
TrainConfig toy_train_config();
inline constexpr double kToyEmaDecay = 0.995;
inline constexpr std::uint64_t kToyInitSeed = 1;

// Freshly initialized model with a z-score normalizer fitted to `poses`.
Denoiser make_denoiser(const PoseBatch& poses, const DenoiserArch& arch = {}, NormMode norm = NormMode::zscore,
                       double ema_decay = kToyEmaDecay, std::uint64_t init_seed = kToyInitSeed);

}  // namespace dposer
