#include "dposer/training.hpp"

#include <cmath>

#include "dposer/adam.hpp"
#include "dposer/rng.hpp"

namespace dposer {

std::string to_string(LossWeighting w) { return w == LossWeighting::unit ? "unit" : "sigma2"; }

LossWeighting parse_loss_weighting(std::string_view name) {
  if (name == "sigma2") return LossWeighting::sigma2;
  if (name == "unit") return LossWeighting::unit;
  throw DomainError("unknown loss weighting '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw DomainError("TrainConfig: lr must be positive");
  if (batch_size < 1) throw DomainError("TrainConfig: batch_size must be positive");
  if (iters < 0) throw DomainError("TrainConfig: iters must be non-negative");
  if (!(t_floor > 0.0 && t_floor < 1.0)) throw DomainError("TrainConfig: t_floor must lie in (0, 1)");
  if (!(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0))
    throw DomainError("TrainConfig: lr_final_fraction must lie in [0, 1]");
  if (warmup_iters < 0) throw DomainError("TrainConfig: warmup_iters must be non-negative");
}

double TrainConfig::lr_factor(long iter) const {
  if (iter < warmup_iters) return static_cast<double>(iter + 1) / static_cast<double>(warmup_iters);
  const long span = iters - 1 - warmup_iters;
  const double frac = span > 0 ? static_cast<double>(iter - warmup_iters) / static_cast<double>(span) : 0.0;
  return 1.0 + (lr_final_fraction - 1.0) * std::min(frac, 1.0);
}

template <typename Scalar>
TrainReport train(BasicDenoiser<Scalar>& model, const PoseBatch& raw_poses, const TrainConfig& cfg) {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  cfg.validate();
  if (raw_poses.cols() == 0) throw DataError("train: dataset is empty");
  if (!raw_poses.allFinite()) throw DataError("train: dataset contains non-finite values");

  TrainReport report;
  if (cfg.iters == 0) return report;
  report.loss.reserve(static_cast<std::size_t>(cfg.iters));
  report.dsm_loss.reserve(static_cast<std::size_t>(cfg.iters));

  const PoseBatch data = model.normalizer().normalize(raw_poses);
  const int B = cfg.batch_size;
  Adam<Scalar> adam({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}, model.weights().size());

  Matrix xt(kPoseDim, B), eps(kPoseDim, B);
  Vector t(B), sigma2(B);
  std::vector<double> dsm_weight(static_cast<std::size_t>(B));
  typename BasicDenoiser<Scalar>::Tape tape;

  for (long it = 0; it < cfg.iters; ++it) {
    Rng rng(cfg.seed, {0x7a11, static_cast<std::uint64_t>(it)});
    for (int b = 0; b < B; ++b) {
      const auto idx = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(data.cols())));
      const double tb = rng.uniform(cfg.t_floor, 1.0);
      const auto c = coefficients(model.schedule(), tb);
      for (int i = 0; i < kPoseDim; ++i) {
        const double e = rng.normal();
        eps(i, b) = static_cast<Scalar>(e);
        xt(i, b) = static_cast<Scalar>(c.alpha * data(i, idx) + c.sigma * e);
      }
      t[b] = static_cast<Scalar>(tb);
      dsm_weight[static_cast<std::size_t>(b)] = c.sigma * c.sigma;
      sigma2[b] = static_cast<Scalar>(cfg.weighting == LossWeighting::unit ? 1.0 : c.sigma * c.sigma);
    }

    const Matrix pred = model.forward(xt, t, /*use_ema=*/false, &tape);
    const Matrix diff = pred - eps;
    double loss = 0.0, dsm = 0.0;
    for (int b = 0; b < B; ++b) {
      const double sq = diff.col(b).template cast<double>().squaredNorm();
      loss += static_cast<double>(sigma2[b]) * sq;
      dsm += dsm_weight[static_cast<std::size_t>(b)] * sq;
    }
    loss /= B;
    dsm /= B;
    if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite", it);
    report.loss.push_back(loss);
    report.dsm_loss.push_back(dsm);

    const Matrix upstream = diff * (Scalar(2) / Scalar(B)) * sigma2.asDiagonal();
    const auto grads = model.backward(tape, upstream);
    adam.step(model.mutable_weights(), grads.params, cfg.lr_factor(it));
    model.update_ema();
  }
  return report;
}

template TrainReport train(BasicDenoiser<float>&, const PoseBatch&, const TrainConfig&);
template TrainReport train(BasicDenoiser<double>&, const PoseBatch&, const TrainConfig&);

}  // namespace dposer
