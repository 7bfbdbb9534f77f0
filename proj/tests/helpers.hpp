#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "dposer/checkpoint.hpp"
#include "dposer/data.hpp"
#include "dposer/denoiser.hpp"
#include "dposer/rng.hpp"

namespace testing {

using namespace dposer;

inline std::string data_path(const std::string& name) { return std::string(DPOSER_DATA_DIR) + "/" + name; }

inline std::string scratch_path(const std::string& name) {
  std::filesystem::create_directories(DPOSER_SCRATCH_DIR);
  return std::string(DPOSER_SCRATCH_DIR) + "/" + name;
}

inline const PoseDataset& toy_dataset() {
  static const PoseDataset d = read_ppd(data_path("toy_walk_cycle.ppd"));
  return d;
}

inline const Denoiser& toy_prior() {
  static const Denoiser m = load_checkpoint(DPOSER_TOY_PRIOR);
  return m;
}

template <typename Derived1, typename Derived2>
double rel_err(const Eigen::MatrixBase<Derived1>& a, const Eigen::MatrixBase<Derived2>& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

inline PoseBatch random_batch(Rng& rng, Eigen::Index n, double scale = 1.0) {
  PoseBatch x(kPoseDim, n);
  rng.fill_normal(x);
  return scale * x;
}

// Small double-precision network with every weight drawn at unit-ish scale so
// no layer is close to zero.
inline BasicDenoiser<double> tiny_model(std::uint64_t seed, int hidden = 8, int blocks = 1, int temb = 8) {
  BasicDenoiser<double> m({kPoseDim, hidden, blocks, temb}, NoiseSchedule{}, Normalizer{});
  Rng rng(seed, {0x717});
  Eigen::VectorXd w(m.arch().parameter_count());
  rng.fill_normal(w);
  m.set_weights(0.3 * w);
  m.set_ema_weights(0.3 * w);
  return m;
}

// Central differences of a scalar function along every coordinate.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Analytic noise predictors for the prior engine.
struct FixedPredictor {
  PoseBatch out;
  NoiseSchedule sched;
  PoseBatch predict(const PoseBatch& x, double) const {
    if (out.cols() == x.cols()) return out;
    return out.col(0).replicate(1, x.cols());
  }
  NoiseSchedule schedule() const { return sched; }
};

// Linear predictor eps_hat = A x + b t.
struct LinearPredictor {
  Eigen::MatrixXd A;
  PoseVector b;
  NoiseSchedule sched;
  PoseBatch predict(const PoseBatch& x, double t) const { return (A * x).colwise() + b * t; }
  NoiseSchedule schedule() const { return sched; }
};

}  // namespace testing
