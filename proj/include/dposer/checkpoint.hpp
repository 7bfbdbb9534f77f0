#pragma once

#include <string>

#include "dposer/denoiser.hpp"

namespace dposer {

// Checkpoint layout (little-endian):
//   "DPSR" | u32 version = 1
//   u32 input_dim | u32 hidden_dim | u32 num_blocks | u32 time_embed_dim
//   f64 xi_min | f64 xi_max | f64 ema_decay
//   u32 norm_mode (0 zscore, 1 minmax, 2 none) | f64[63] offset | f64[63] scale
//   u64 parameter count | f32[count] weights | f32[count] ema weights
//   u32 CRC32 of all preceding bytes
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Denoiser& model, const std::string& path);
Denoiser load_checkpoint(const std::string& path);

std::vector<unsigned char> encode_checkpoint(const Denoiser& model);
Denoiser decode_checkpoint(std::vector<unsigned char> bytes);

}  // namespace dposer
