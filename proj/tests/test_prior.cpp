#include <doctest.h>

#include "dposer/metrics.hpp"
#include "dposer/prior.hpp"
#include "helpers.hpp"

using namespace dposer;
using testing::FixedPredictor;
using testing::LinearPredictor;
using testing::rel_err;

namespace {

LinearPredictor random_linear(std::uint64_t seed) {
  Rng rng(seed);
  LinearPredictor p;
  p.A = Eigen::MatrixXd(kPoseDim, kPoseDim);
  rng.fill_normal(p.A);
  p.A *= 0.1;
  p.b = testing::random_batch(rng, 1).col(0);
  return p;
}

}  // namespace

TEST_SUITE("prior") {

TEST_CASE("truncated schedule endpoints and interior") {
  ScheduleSpec s;
  s.iters = 100;
  Rng rng(0);
  CHECK(schedule_t(s, 0, rng) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(schedule_t(s, 99, rng) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(std::abs(schedule_t(s, 50, rng) - (0.2 - 0.15 * 50.0 / 99.0)) < 1e-15);
  for (long i = 0; i + 1 < s.iters; ++i) {
    const double a = schedule_t(s, i, rng), b = schedule_t(s, i + 1, rng);
    CHECK(b < a);
    CHECK(a <= s.t_max);
    CHECK(b >= s.t_min - 1e-15);
  }
  CHECK_THROWS_AS(schedule_t(s, 100, rng), DomainError);
  CHECK_THROWS_AS(schedule_t(s, -1, rng), DomainError);
  s.iters = 1;
  CHECK(schedule_t(s, 0, rng) == 0.2);
}

TEST_CASE("other strategies") {
  Rng rng(1);
  ScheduleSpec s;
  s.iters = 11;
  s.strategy = ScheduleStrategy::fixed;
  for (long i = 0; i < s.iters; ++i) CHECK(schedule_t(s, i, rng) == 0.1);
  s.strategy = ScheduleStrategy::uniform;
  CHECK(schedule_t(s, 0, rng) == 1.0);
  CHECK(schedule_t(s, 10, rng) == doctest::Approx(0.05));
  CHECK(schedule_t(s, 5, rng) == doctest::Approx(0.525));
  s.strategy = ScheduleStrategy::random;
  for (int i = 0; i < 200; ++i) {
    const double t = schedule_t(s, 3, rng);
    CHECK(t >= 0.05);
    CHECK(t <= 1.0);
  }
  for (auto st : {ScheduleStrategy::truncated, ScheduleStrategy::uniform, ScheduleStrategy::fixed,
                  ScheduleStrategy::random})
    CHECK(parse_schedule_strategy(to_string(st)) == st);
  CHECK_THROWS_AS(parse_schedule_strategy("cosine"), DomainError);
  ScheduleSpec bad;
  bad.t_min = 0.3;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("one-step denoiser special cases") {
  Rng rng(2);
  const PoseBatch x0 = testing::random_batch(rng, 3), eps = testing::random_batch(rng, 3);
  const double t = 0.15;
  const auto c = coefficients(NoiseSchedule{}, t);
  CHECK((denoise_one_step(FixedPredictor{eps, {}}, x0, t, eps) - x0).cwiseAbs().maxCoeff() < 1e-12);
  const PoseBatch zero = PoseBatch::Zero(kPoseDim, 3);
  const PoseBatch expected = x0 + (c.sigma / c.alpha) * eps;
  CHECK((denoise_one_step(FixedPredictor{zero, {}}, x0, t, eps) - expected).cwiseAbs().maxCoeff() < 1e-12);

  const auto lin = random_linear(3);
  const PoseBatch xt = c.alpha * x0 + c.sigma * eps;
  const PoseBatch eps_hat = (lin.A * xt).colwise() + lin.b * t;
  const PoseBatch oracle = (xt - c.sigma * eps_hat) / c.alpha;
  CHECK((denoise_one_step(lin, x0, t, eps) - oracle).cwiseAbs().maxCoeff() < 1e-12);
  const PoseVector single = denoise_one_step(lin, PoseVector(x0.col(1)), t, PoseVector(eps.col(1)));
  CHECK((single - oracle.col(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("singular times are rejected") {
  Rng rng(4);
  const PoseBatch x0 = testing::random_batch(rng, 1), eps = testing::random_batch(rng, 1);
  FixedPredictor steep{eps, NoiseSchedule{0.1, 100.0}};
  CHECK_THROWS_AS(denoise_one_step(steep, x0, 1.0, eps), DomainError);
  CHECK_THROWS_AS(denoise_one_step(FixedPredictor{eps, {}}, x0, 0.0, eps), DomainError);
  CHECK_THROWS_AS(dposer_loss_and_grad(steep, x0, 1.0, eps, PriorConfig{}), DomainError);
}

TEST_CASE("perfect denoiser gives zero loss and gradient") {
  Rng rng(5);
  const PoseBatch x0 = testing::random_batch(rng, 2), eps = testing::random_batch(rng, 2);
  const auto term = dposer_loss_and_grad(FixedPredictor{eps, {}}, x0, 0.1, eps, PriorConfig{});
  CHECK(term.loss < 1e-24);
  CHECK(term.grad.norm() == 0.0);
}

TEST_CASE("gradient identity on 100 random cases") {
  for (int k = 0; k < 100; ++k) {
    CAPTURE(k);
    auto m = testing::tiny_model(1000 + k, 16, 2, 8);
    Rng rng(2000 + k);
    const PoseBatch x0 = testing::random_batch(rng, 1), eps = testing::random_batch(rng, 1);
    const double t = rng.uniform(0.01, 1.0);
    PriorConfig cfg{k % 2 ? WeightMode::snr_scaled : WeightMode::constant, rng.uniform(0.1, 10.0), 0};
    const auto term = dposer_loss_and_grad(m, x0, t, eps, cfg);

    const auto c = coefficients(m.schedule(), t);
    const double w = cfg.weight_mode == WeightMode::constant ? cfg.lambda : cfg.lambda * c.alpha / c.sigma;
    const PoseVector eps_hat = m.predict(PoseVector(c.alpha * x0.col(0) + c.sigma * eps.col(0)), t);
    const PoseVector oracle = 2.0 * w * (c.sigma / c.alpha) * (eps_hat - eps.col(0));
    CHECK(rel_err(PoseVector(term.grad.col(0)), oracle) < 1e-10);
    CHECK(term.weight == doctest::Approx(w).epsilon(1e-14));

    const double cosine = term.grad.col(0).dot(eps_hat - eps.col(0)) / (term.grad.norm() * (eps_hat - eps.col(0)).norm());
    CHECK(std::abs(cosine - 1.0) < 1e-12);
  }
}

TEST_CASE("gradient equals differentiating the loss with x_hat0 held fixed") {
  const auto lin = random_linear(6);
  Rng rng(7);
  const PoseBatch x0 = testing::random_batch(rng, 1), eps = testing::random_batch(rng, 1);
  PriorConfig cfg{WeightMode::constant, 2.5, 0};
  const auto term = dposer_loss_and_grad(lin, x0, 0.12, eps, cfg);
  const PoseVector frozen = term.x_hat0.col(0);
  auto f = [&](const Eigen::VectorXd& x) { return cfg.lambda * (x - frozen).squaredNorm(); };
  const Eigen::VectorXd fd = testing::numeric_gradient(f, x0.col(0), 1e-5);
  CHECK(rel_err(Eigen::VectorXd(term.grad.col(0)), fd) < 1e-8);
  CHECK(rel_err(term.loss, f(x0.col(0))) < 1e-14);
}

TEST_CASE("stop-gradient: grad depends only on eps_hat and eps") {
  const auto lin = random_linear(8);
  Rng rng(9);
  const PoseBatch x0 = testing::random_batch(rng, 2), eps = testing::random_batch(rng, 2);
  PriorConfig cfg;
  auto term = dposer_loss_and_grad(lin, x0, 0.2, eps, cfg);
  const PoseBatch grad = term.grad;
  term.x_hat0.setRandom();
  const auto c = coefficients(NoiseSchedule{}, 0.2);
  CHECK(rel_err(grad, PoseBatch(2.0 * cfg.lambda * (c.sigma / c.alpha) * (term.eps_hat - eps))) < 1e-14);
}

TEST_CASE("the prior never calls backward") {
  auto m = testing::tiny_model(10);
  m.reset_counters();
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const PoseBatch x0 = testing::random_batch(rng, 3), eps = testing::random_batch(rng, 3);
    dposer_loss_and_grad(m, x0, 0.1, eps, PriorConfig{});
  }
  CHECK(m.forward_invocations() == 20);
  CHECK(m.backward_invocations() == 0);
}

TEST_CASE("multi-step denoising") {
  const auto lin = random_linear(12);
  Rng rng(13);
  const PoseBatch x0 = testing::random_batch(rng, 2), eps = testing::random_batch(rng, 2);
  const double t = 0.3;
  CHECK(multi_step_denoise(lin, x0, t, eps, 1) == denoise_one_step(lin, x0, t, eps));
  for (int k : {1, 3, 7})
    CHECK((multi_step_denoise(FixedPredictor{eps, {}}, x0, t, eps, k) - x0).cwiseAbs().maxCoeff() < 1e-12);

  // hand-unrolled five sub-steps
  NoiseSchedule s;
  const double t_end = 1e-3;
  auto ti = [&](int i) { return t - (t - t_end) * i / 5.0; };
  auto c = coefficients(s, ti(0));
  PoseBatch x = c.alpha * x0 + c.sigma * eps, xh;
  for (int i = 0; i < 5; ++i) {
    c = coefficients(s, ti(i));
    const PoseBatch e = (lin.A * x).colwise() + lin.b * ti(i);
    xh = (x - c.sigma * e) / c.alpha;
    const auto nx = coefficients(s, ti(i + 1));
    x = nx.alpha * xh + nx.sigma * e;
  }
  CHECK((multi_step_denoise(lin, x0, t, eps, 5) - xh).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(multi_step_denoise(lin, x0, t, eps, 0), DomainError);
}

TEST_CASE("without the prior a convex quadratic converges") {
  Rng rng(14);
  const Eigen::VectorXd target = testing::random_batch(rng, 1).col(0);
  const Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(kPoseDim, 0.5, 3.0);
  TaskObjective task = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    const Eigen::VectorXd r = p - target;
    g += 2.0 * d.cwiseProduct(r);
    return r.dot(d.cwiseProduct(r));
  };
  OptimState init{Eigen::VectorXd::Zero(kPoseDim), {0}, {}, 0};
  ScheduleSpec spec;
  spec.iters = 500;
  PriorConfig off{WeightMode::constant, 0.0, 0};
  InnerOptimizer opt;
  opt.final_lr_fraction = 0.0;
  const auto r = optimize(task, init, FixedPredictor{PoseBatch::Zero(kPoseDim, 1), {}}, spec, off, opt);
  CHECK((r.state.params - target).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(r.trace.t.size() == 500);
  CHECK(r.state.iteration == 500);
  for (double p : r.trace.prior_loss) CHECK(p == 0.0);
}

TEST_CASE("a single iteration makes one update") {
  TaskObjective task = [](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    g += 2.0 * p;
    return p.squaredNorm();
  };
  OptimState init{Eigen::VectorXd::Ones(kPoseDim), {0}, {}, 0};
  ScheduleSpec spec;
  spec.iters = 1;
  InnerOptimizer opt;
  PriorConfig off;
  off.lambda = 0.0;
  const auto r = optimize(task, init, FixedPredictor{PoseBatch::Zero(kPoseDim, 1), {}}, spec, off, opt);
  CHECK(r.trace.t.size() == 1);
  CHECK(r.trace.t[0] == 0.2);
  CHECK(r.state.iteration == 1);
  // first Adam step moves every coordinate by about lr
  CHECK((r.state.params.array() - (1.0 - opt.lr)).abs().maxCoeff() < 0.02);
}

TEST_CASE("non-finite task loss raises a divergence error") {
  TaskObjective task = [](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    g += p;
    return p[0] > 0.9 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
  };
  OptimState init{Eigen::VectorXd::Zero(kPoseDim), {}, {}, 0};
  init.params[0] = 0.5;
  TaskObjective up = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    g[0] -= 1.0;
    return task(p, g);
  };
  ScheduleSpec spec;
  spec.iters = 100;
  InnerOptimizer opt;
  opt.lr = 0.1;
  try {
    optimize(up, init, FixedPredictor{PoseBatch::Zero(kPoseDim, 1), {}}, spec, PriorConfig{}, opt);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() > 0);
    CHECK(e.step() < 20);
  }
}

TEST_CASE("timestep schedule is shared across hypothesis streams") {
  TaskObjective none = [](const Eigen::VectorXd&, Eigen::VectorXd&) { return 0.0; };
  OptimState init{Eigen::VectorXd::Zero(kPoseDim), {0}, {}, 0};
  ScheduleSpec spec;
  spec.strategy = ScheduleStrategy::random;
  spec.iters = 20;
  const auto lin = random_linear(15);
  const auto a = optimize(none, init, lin, spec, PriorConfig{}, InnerOptimizer{}, 0);
  const auto b = optimize(none, init, lin, spec, PriorConfig{}, InnerOptimizer{}, 1);
  const auto a2 = optimize(none, init, lin, spec, PriorConfig{}, InnerOptimizer{}, 0);
  CHECK(a.trace.t == b.trace.t);
  CHECK(a.state.params != b.state.params);
  CHECK(a.state.params == a2.state.params);
}

TEST_CASE("the toy prior pulls random poses toward the data") {
  const Denoiser& m = testing::toy_prior();
  const PoseBatch& train = testing::toy_dataset().poses;
  const auto& norm = m.normalizer();
  TaskObjective none = [](const Eigen::VectorXd&, Eigen::VectorXd&) { return 0.0; };
  ScheduleSpec spec;
  spec.iters = 300;
  int closer = 0;
  const int seeds = 100;
  PoseBatch before(kPoseDim, seeds), after(kPoseDim, seeds);
  for (int s = 0; s < seeds; ++s) {
    Rng rng(s, {0x1a1});
    OptimState init{testing::random_batch(rng, 1).col(0), {0}, {}, 0};
    const auto r = optimize(none, init, m, spec, PriorConfig{WeightMode::constant, 1.0, static_cast<std::uint64_t>(s)},
                            InnerOptimizer{});
    before.col(s) = norm.denormalize(init.params);
    after.col(s) = norm.denormalize(r.state.params);
  }
  const Eigen::VectorXd d0 = nearest_neighbor_distances(train, before);
  const Eigen::VectorXd d1 = nearest_neighbor_distances(train, after);
  for (int s = 0; s < seeds; ++s) closer += d1[s] < d0[s];
  CAPTURE(closer);
  CHECK(closer >= 90);
}

}
