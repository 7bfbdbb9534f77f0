#include "dposer/checkpoint.hpp"

#include "detail/binary_io.hpp"

namespace dposer {

namespace {

std::uint32_t norm_tag(NormMode m) {
  switch (m) {
    case NormMode::zscore: return 0;
    case NormMode::minmax: return 1;
    case NormMode::none: return 2;
  }
  return 2;
}

NormMode norm_from_tag(std::uint32_t tag) {
  switch (tag) {
    case 0: return NormMode::zscore;
    case 1: return NormMode::minmax;
    case 2: return NormMode::none;
    default: throw FormatError("checkpoint: unknown normalization tag " + std::to_string(tag));
  }
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Denoiser& model) {
  detail::ByteWriter w;
  w.put_bytes("DPSR", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  const auto& a = model.arch();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.input_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.hidden_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.num_blocks));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.time_embed_dim));
  w.put<double>(model.schedule().xi_min);
  w.put<double>(model.schedule().xi_max);
  w.put<double>(model.ema_decay());
  const auto& n = model.normalizer();
  w.put<std::uint32_t>(norm_tag(n.mode));
  for (int i = 0; i < kPoseDim; ++i) w.put<double>(n.offset[i]);
  for (int i = 0; i < kPoseDim; ++i) w.put<double>(n.scale[i]);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(model.weights().size()));
  for (Eigen::Index i = 0; i < model.weights().size(); ++i) w.put<float>(model.weights()[i]);
  for (Eigen::Index i = 0; i < model.ema_weights().size(); ++i) w.put<float>(model.ema_weights()[i]);
  w.seal();
  return w.bytes();
}

Denoiser decode_checkpoint(std::vector<unsigned char> bytes) {
  detail::ByteReader r(std::move(bytes), "checkpoint");
  r.expect_magic("DPSR");
  r.verify_crc();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  DenoiserArch a;
  a.input_dim = static_cast<int>(r.get<std::uint32_t>());
  a.hidden_dim = static_cast<int>(r.get<std::uint32_t>());
  a.num_blocks = static_cast<int>(r.get<std::uint32_t>());
  a.time_embed_dim = static_cast<int>(r.get<std::uint32_t>());
  if (a.input_dim != kPoseDim) throw FormatError("checkpoint: input_dim must be 63");
  NoiseSchedule s;
  s.xi_min = r.get<double>();
  s.xi_max = r.get<double>();
  const double decay = r.get<double>();
  Normalizer n;
  n.mode = norm_from_tag(r.get<std::uint32_t>());
  for (int i = 0; i < kPoseDim; ++i) n.offset[i] = r.get<double>();
  for (int i = 0; i < kPoseDim; ++i) n.scale[i] = r.get<double>();
  const auto count = r.get<std::uint64_t>();
  try {
    a.validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (count != static_cast<std::uint64_t>(a.parameter_count()))
    throw FormatError("checkpoint: parameter count does not match architecture");
  if (r.remaining() != 2 * count * sizeof(float)) throw CorruptionError("checkpoint: weight payload has wrong size");
  Denoiser model(a, s, n, decay);
  Eigen::VectorXf w(static_cast<Eigen::Index>(count)), e(static_cast<Eigen::Index>(count));
  for (auto& v : w) v = r.get<float>();
  for (auto& v : e) v = r.get<float>();
  model.set_weights(w);
  model.set_ema_weights(e);
  return model;
}

void save_checkpoint(const Denoiser& model, const std::string& path) {
  detail::write_file(path, encode_checkpoint(model));
}

Denoiser load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file(path)); }

}  // namespace dposer
