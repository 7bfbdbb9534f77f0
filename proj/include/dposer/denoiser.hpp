#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dposer/normalizer.hpp"
#include "dposer/rng.hpp"
#include "dposer/sde.hpp"
#include "dposer/types.hpp"

namespace dposer {

struct DenoiserArch {
  int input_dim = kPoseDim;
  int hidden_dim = 256;
  int num_blocks = 4;
  int time_embed_dim = 64;

  void validate() const;
  Eigen::Index parameter_count() const;

  bool operator==(const DenoiserArch&) const = default;
};

// Copyable invocation counter, safe to bump from concurrent readers.
class InvocationCounter {
 public:
  InvocationCounter() = default;
  InvocationCounter(const InvocationCounter& o) : n_(o.get()) {}
  InvocationCounter& operator=(const InvocationCounter& o) {
    n_.store(o.get());
    return *this;
  }
  void bump() const { n_.fetch_add(1, std::memory_order_relaxed); }
  long get() const { return n_.load(std::memory_order_relaxed); }
  void reset() const { n_.store(0); }

 private:
  mutable std::atomic<long> n_{0};
};

// Time-conditioned residual MLP noise predictor eps(x_t; t).
//
//   emb   = [sin(w_k 1000 t), cos(w_k 1000 t)]      w_k = 10000^(-k / (E/2))
//   temb  = W_t2 silu(W_t1 emb + b_t1) + b_t2
//   h     = W_in x + b_in
//   h    += W_2 silu(W_1 h + b_1 + temb) + b_2       (num_blocks times)
//   out   = W_out silu(h) + b_out
//
// Inputs are batches with one column per sample. Parameters live in a single
// flat vector (plus an EMA shadow copy) so optimizers and checkpoints treat
// them uniformly.
template <typename Scalar>
class BasicDenoiser {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  // Forward intermediates required by backward().
  struct Tape {
    const BasicDenoiser* owner = nullptr;
    std::uint64_t version = 0;
    bool use_ema = false;
    Matrix input;
    Matrix emb, te_pre, te_act;
    std::vector<Matrix> h;    // num_blocks + 1 residual stream states
    std::vector<Matrix> pre;  // block pre-activations
    std::vector<Matrix> act;  // block activations
  };

  struct Gradients {
    Vector params;
    Matrix input;
  };

  BasicDenoiser() : BasicDenoiser(DenoiserArch{}, NoiseSchedule{}, Normalizer{}) {}
  BasicDenoiser(DenoiserArch arch, NoiseSchedule schedule, Normalizer normalizer, double ema_decay = 0.9999);

  // LeCun-normal initialization, second block layer scaled down. EMA is reset
  // to the initialized weights.
  void initialize(std::uint64_t seed);

  Matrix forward(const Matrix& x, const Vector& t, bool use_ema = true, Tape* tape = nullptr) const;
  // Single-sample convenience wrapper taking and returning double precision.
  PoseVector predict(const PoseVector& x, double t, bool use_ema = true) const;
  // Batch convenience wrapper, all columns share the same time.
  PoseBatch predict(const PoseBatch& x, double t, bool use_ema = true) const;

  // Exact reverse-mode gradients of sum(upstream .* forward(x, t)) with
  // respect to the weights used in the forward pass and to the input.
  Gradients backward(const Tape& tape, const Matrix& upstream) const;

  const DenoiserArch& arch() const { return arch_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Normalizer& normalizer() const { return normalizer_; }
  void set_normalizer(const Normalizer& n) {
    n.validate();
    normalizer_ = n;
  }
  double ema_decay() const { return ema_decay_; }
  void set_ema_decay(double d);

  const Vector& weights() const { return weights_; }
  const Vector& ema_weights() const { return ema_; }
  Vector& mutable_weights() {
    ++version_;
    return weights_;
  }
  void set_weights(const Vector& w);
  void set_ema_weights(const Vector& w);

  // ema <- decay ema + (1 - decay) weights, written as an increment so that
  // equal vectors stay exactly equal.
  void update_ema();

  long forward_invocations() const { return forward_calls_.get(); }
  long backward_invocations() const { return backward_calls_.get(); }
  void reset_counters() const {
    forward_calls_.reset();
    backward_calls_.reset();
  }

  template <typename Other>
  BasicDenoiser<Other> cast() const {
    BasicDenoiser<Other> out(arch_, schedule_, normalizer_, ema_decay_);
    out.set_weights(weights_.template cast<Other>());
    out.set_ema_weights(ema_.template cast<Other>());
    return out;
  }

 private:
  struct Layout {
    Eigen::Index te1_w, te1_b, te2_w, te2_b, in_w, in_b;
    std::vector<Eigen::Index> b1_w, b1_b, b2_w, b2_b;
    Eigen::Index out_w, out_b, total;
  };
  static Layout make_layout(const DenoiserArch& a);

  Matrix time_embedding(const Vector& t) const;

  DenoiserArch arch_;
  NoiseSchedule schedule_;
  Normalizer normalizer_;
  double ema_decay_;
  Layout layout_;
  Vector weights_;
  Vector ema_;
  std::uint64_t version_ = 0;
  InvocationCounter forward_calls_;
  InvocationCounter backward_calls_;
};

extern template class BasicDenoiser<float>;
extern template class BasicDenoiser<double>;

using Denoiser = BasicDenoiser<float>;

}  // namespace dposer
