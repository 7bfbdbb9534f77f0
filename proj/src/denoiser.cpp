#include "dposer/denoiser.hpp"

#include <cmath>

namespace dposer {

void DenoiserArch::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || num_blocks < 1 || time_embed_dim < 2)
    throw DomainError("DenoiserArch: all dimensions must be positive (time_embed_dim >= 2)");
  if (time_embed_dim % 2 != 0) throw DomainError("DenoiserArch: time_embed_dim must be even");
}

Eigen::Index DenoiserArch::parameter_count() const {
  const Eigen::Index H = hidden_dim, D = input_dim, E = time_embed_dim;
  return (H * E + H) + (H * H + H) + (H * D + H) + num_blocks * (2 * H * H + 2 * H) + (D * H + D);
}

namespace {

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename M>
M silu(const M& x) {
  using S = typename M::Scalar;
  return x.unaryExpr([](S v) { return v * sigmoid(v); });
}

template <typename M>
M silu_grad(const M& x) {
  using S = typename M::Scalar;
  return x.unaryExpr([](S v) {
    const S s = sigmoid(v);
    return s * (S(1) + v * (S(1) - s));
  });
}

}  // namespace

template <typename Scalar>
BasicDenoiser<Scalar>::BasicDenoiser(DenoiserArch arch, NoiseSchedule schedule, Normalizer normalizer,
                                     double ema_decay)
    : arch_(arch), schedule_(schedule), normalizer_(normalizer), ema_decay_(ema_decay) {
  arch_.validate();
  schedule_.validate();
  normalizer_.validate();
  set_ema_decay(ema_decay);
  layout_ = make_layout(arch_);
  weights_ = Vector::Zero(layout_.total);
  ema_ = Vector::Zero(layout_.total);
}

template <typename Scalar>
typename BasicDenoiser<Scalar>::Layout BasicDenoiser<Scalar>::make_layout(const DenoiserArch& a) {
  const Eigen::Index H = a.hidden_dim, D = a.input_dim, E = a.time_embed_dim;
  Layout l;
  Eigen::Index off = 0;
  auto take = [&off](Eigen::Index n) {
    const Eigen::Index at = off;
    off += n;
    return at;
  };
  l.te1_w = take(H * E);
  l.te1_b = take(H);
  l.te2_w = take(H * H);
  l.te2_b = take(H);
  l.in_w = take(H * D);
  l.in_b = take(H);
  for (int b = 0; b < a.num_blocks; ++b) {
    l.b1_w.push_back(take(H * H));
    l.b1_b.push_back(take(H));
    l.b2_w.push_back(take(H * H));
    l.b2_b.push_back(take(H));
  }
  l.out_w = take(D * H);
  l.out_b = take(D);
  l.total = off;
  return l;
}

template <typename Scalar>
void BasicDenoiser<Scalar>::set_ema_decay(double d) {
  if (!(d >= 0.0 && d <= 1.0)) throw DomainError("ema_decay must lie in [0, 1]");
  ema_decay_ = d;
}

template <typename Scalar>
void BasicDenoiser<Scalar>::set_weights(const Vector& w) {
  if (w.size() != layout_.total) throw ShapeError("set_weights: expected " + std::to_string(layout_.total) + " values");
  weights_ = w;
  ++version_;
}

template <typename Scalar>
void BasicDenoiser<Scalar>::set_ema_weights(const Vector& w) {
  if (w.size() != layout_.total) throw ShapeError("set_ema_weights: expected " + std::to_string(layout_.total) + " values");
  ema_ = w;
  ++version_;
}

template <typename Scalar>
void BasicDenoiser<Scalar>::update_ema() {
  ema_ += static_cast<Scalar>(1.0 - ema_decay_) * (weights_ - ema_);
  ++version_;
}

template <typename Scalar>
void BasicDenoiser<Scalar>::initialize(std::uint64_t seed) {
  Rng rng(seed, {0x1417});
  const Eigen::Index H = arch_.hidden_dim, D = arch_.input_dim, E = arch_.time_embed_dim;
  weights_.setZero();
  auto fill = [&](Eigen::Index off, Eigen::Index n, double std) {
    for (Eigen::Index i = 0; i < n; ++i) weights_[off + i] = static_cast<Scalar>(std * rng.normal());
  };
  fill(layout_.te1_w, H * E, 1.0 / std::sqrt(double(E)));
  fill(layout_.te2_w, H * H, 1.0 / std::sqrt(double(H)));
  fill(layout_.in_w, H * D, 1.0 / std::sqrt(double(D)));
  for (int b = 0; b < arch_.num_blocks; ++b) {
    fill(layout_.b1_w[b], H * H, 1.0 / std::sqrt(double(H)));
    fill(layout_.b2_w[b], H * H, 0.1 / std::sqrt(double(H)));
  }
  fill(layout_.out_w, D * H, 1.0 / std::sqrt(double(H)));
  ema_ = weights_;
  ++version_;
}

template <typename Scalar>
typename BasicDenoiser<Scalar>::Matrix BasicDenoiser<Scalar>::time_embedding(const Vector& t) const {
  const int half = arch_.time_embed_dim / 2;
  Matrix emb(arch_.time_embed_dim, t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    const double tt = 1000.0 * static_cast<double>(t[j]);
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * double(k) / double(half));
      emb(k, j) = static_cast<Scalar>(std::sin(freq * tt));
      emb(half + k, j) = static_cast<Scalar>(std::cos(freq * tt));
    }
  }
  return emb;
}

template <typename Scalar>
typename BasicDenoiser<Scalar>::Matrix BasicDenoiser<Scalar>::forward(const Matrix& x, const Vector& t, bool use_ema,
                                                                      Tape* tape) const {
  if (x.rows() != arch_.input_dim) throw ShapeError("denoiser forward: input has wrong dimension");
  if (t.size() != x.cols()) throw ShapeError("denoiser forward: one time value per column required");
  for (Eigen::Index j = 0; j < t.size(); ++j)
    if (!(t[j] >= 0 && t[j] <= 1)) throw DomainError("denoiser forward: t must lie in [0, 1]");
  forward_calls_.bump();

  using CMap = Eigen::Map<const Matrix>;
  using CVMap = Eigen::Map<const Vector>;
  const Scalar* w = (use_ema ? ema_ : weights_).data();
  const Eigen::Index H = arch_.hidden_dim, D = arch_.input_dim, E = arch_.time_embed_dim;

  Matrix emb = time_embedding(t);
  Matrix te_pre = (CMap(w + layout_.te1_w, H, E) * emb).colwise() + CVMap(w + layout_.te1_b, H);
  Matrix te_act = silu(te_pre);
  Matrix temb = (CMap(w + layout_.te2_w, H, H) * te_act).colwise() + CVMap(w + layout_.te2_b, H);

  Matrix h = (CMap(w + layout_.in_w, H, D) * x).colwise() + CVMap(w + layout_.in_b, H);
  if (tape) {
    tape->owner = this;
    tape->version = version_;
    tape->use_ema = use_ema;
    tape->input = x;
    tape->h.clear();
    tape->pre.clear();
    tape->act.clear();
  }
  for (int b = 0; b < arch_.num_blocks; ++b) {
    Matrix pre = (CMap(w + layout_.b1_w[b], H, H) * h).colwise() + CVMap(w + layout_.b1_b[b], H);
    pre += temb;
    Matrix act = silu(pre);
    Matrix next = h + CMap(w + layout_.b2_w[b], H, H) * act;
    next.colwise() += CVMap(w + layout_.b2_b[b], H);
    if (tape) {
      tape->h.push_back(std::move(h));
      tape->pre.push_back(std::move(pre));
      tape->act.push_back(std::move(act));
    }
    h = std::move(next);
  }
  Matrix out = (CMap(w + layout_.out_w, D, H) * silu(h)).colwise() + CVMap(w + layout_.out_b, D);
  if (tape) {
    tape->h.push_back(std::move(h));
    tape->emb = std::move(emb);
    tape->te_pre = std::move(te_pre);
    tape->te_act = std::move(te_act);
  }
  return out;
}

template <typename Scalar>
PoseVector BasicDenoiser<Scalar>::predict(const PoseVector& x, double t, bool use_ema) const {
  Vector tv(1);
  tv[0] = static_cast<Scalar>(t);
  Matrix in = x.template cast<Scalar>();
  return forward(in, tv, use_ema).template cast<double>();
}

template <typename Scalar>
PoseBatch BasicDenoiser<Scalar>::predict(const PoseBatch& x, double t, bool use_ema) const {
  Vector tv = Vector::Constant(x.cols(), static_cast<Scalar>(t));
  Matrix in = x.template cast<Scalar>();
  return forward(in, tv, use_ema).template cast<double>();
}

template <typename Scalar>
typename BasicDenoiser<Scalar>::Gradients BasicDenoiser<Scalar>::backward(const Tape& tape,
                                                                          const Matrix& upstream) const {
  if (tape.owner != this || tape.version != version_ || tape.h.empty())
    throw StateError("denoiser backward: forward intermediates are missing or stale");
  if (upstream.rows() != arch_.input_dim || upstream.cols() != tape.input.cols())
    throw ShapeError("denoiser backward: upstream gradient has wrong shape");
  backward_calls_.bump();

  using CMap = Eigen::Map<const Matrix>;
  using GMap = Eigen::Map<Matrix>;
  using GVMap = Eigen::Map<Vector>;
  const Scalar* w = (tape.use_ema ? ema_ : weights_).data();
  const Eigen::Index H = arch_.hidden_dim, D = arch_.input_dim, E = arch_.time_embed_dim;

  Gradients g;
  g.params = Vector::Zero(layout_.total);
  Scalar* gp = g.params.data();

  const Matrix& h_last = tape.h.back();
  GMap(gp + layout_.out_w, D, H).noalias() = upstream * silu(h_last).transpose();
  GVMap(gp + layout_.out_b, D) = upstream.rowwise().sum();
  Matrix gh = (CMap(w + layout_.out_w, D, H).transpose() * upstream).cwiseProduct(silu_grad(h_last));

  Matrix gtemb = Matrix::Zero(H, upstream.cols());
  for (int b = arch_.num_blocks - 1; b >= 0; --b) {
    GMap(gp + layout_.b2_w[b], H, H).noalias() = gh * tape.act[b].transpose();
    GVMap(gp + layout_.b2_b[b], H) = gh.rowwise().sum();
    Matrix gpre = (CMap(w + layout_.b2_w[b], H, H).transpose() * gh).cwiseProduct(silu_grad(tape.pre[b]));
    GMap(gp + layout_.b1_w[b], H, H).noalias() = gpre * tape.h[b].transpose();
    GVMap(gp + layout_.b1_b[b], H) = gpre.rowwise().sum();
    gtemb += gpre;
    gh.noalias() += CMap(w + layout_.b1_w[b], H, H).transpose() * gpre;
  }
  GMap(gp + layout_.in_w, H, D).noalias() = gh * tape.input.transpose();
  GVMap(gp + layout_.in_b, H) = gh.rowwise().sum();
  g.input = CMap(w + layout_.in_w, H, D).transpose() * gh;

  GMap(gp + layout_.te2_w, H, H).noalias() = gtemb * tape.te_act.transpose();
  GVMap(gp + layout_.te2_b, H) = gtemb.rowwise().sum();
  Matrix gte = (CMap(w + layout_.te2_w, H, H).transpose() * gtemb).cwiseProduct(silu_grad(tape.te_pre));
  GMap(gp + layout_.te1_w, H, E).noalias() = gte * tape.emb.transpose();
  GVMap(gp + layout_.te1_b, H) = gte.rowwise().sum();
  return g;
}

template class BasicDenoiser<float>;
template class BasicDenoiser<double>;

}  // namespace dposer
