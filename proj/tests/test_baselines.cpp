#include <doctest.h>

#include "dposer/baselines.hpp"
#include "dposer/benchmarks.hpp"
#include "dposer/toy.hpp"
#include "helpers.hpp"

using namespace dposer;
using testing::rel_err;

TEST_SUITE("baselines") {

TEST_CASE("solver names and validation") {
  for (auto k : {SolverKind::score_sde_bp, SolverKind::mcg, SolverKind::dps}) CHECK(parse_solver_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_solver_kind("ddrm"), DomainError);
  SolverSpec s;
  s.guidance_scale = -1.0;
  CHECK_THROWS_AS(s.validate(), DomainError);
  s = SolverSpec{};
  s.steps = 0;
  CHECK_THROWS_AS(s.validate(), DomainError);
}

TEST_CASE("DPS guidance against central differences") {
  const auto tree = KinematicTree::smpl_default();
  const auto mask = MaskOperator::preset("legs", tree);
  for (int k = 0; k < 5; ++k) {
    const auto m = testing::tiny_model(30 + k);
    Rng rng(40 + k);
    const PoseBatch x = testing::random_batch(rng, 2);
    const PoseVector y = testing::random_batch(rng, 1).col(0);
    const double t = rng.uniform(0.05, 0.9);
    const auto g = dps_guidance(m, x, t, y, mask);
    const auto c = coefficients(m.schedule(), t);
    const PoseVector w = mask.weights();
    for (int j = 0; j < 2; ++j) {
      auto f = [&](const Eigen::VectorXd& xi) {
        const PoseVector xh = (PoseVector(xi) - c.sigma * m.predict(PoseVector(xi), t)) / c.alpha;
        return w.cwiseProduct(y - xh).norm();
      };
      CHECK(rel_err(Eigen::VectorXd(g.grad.col(j)), testing::numeric_gradient(f, x.col(j), 1e-5)) < 1e-3);
      CHECK(g.residual_norm[j] == doctest::Approx(f(x.col(j))).epsilon(1e-12));
    }
  }
}

TEST_CASE("back-projection is exact after every step") {
  const Denoiser& model = testing::toy_prior();
  const auto tree = KinematicTree::smpl_default();
  const auto mask = MaskOperator::preset("left_leg", tree);
  const PoseVector gt = completion_case(toy_family(), 0, 0);
  const PoseVector y_n = model.normalizer().normalize(gt);
  for (auto kind : {SolverKind::score_sde_bp, SolverKind::mcg}) {
    SolverSpec spec;
    spec.kind = kind;
    spec.steps = 100;
    double worst = 0.0;
    int calls = 0;
    const ProjectionObserver obs = [&](int, double t, const PoseBatch& x, const PoseBatch& noise) {
      ++calls;
      const auto c = coefficients(model.schedule(), t);
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (int i = 0; i < kPoseDim; ++i)
          if (mask.visible[i]) worst = std::max(worst, std::abs(x(i, j) - (c.alpha * y_n[i] + c.sigma * noise(i, j))));
    };
    solve_completion(model, mask, gt, spec, 4, nullptr, std::nullopt, obs);
    CAPTURE(to_string(kind));
    CHECK(calls == 100);
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("fully observed back-projection returns the observation") {
  const Denoiser& model = testing::toy_prior();
  const PoseVector gt = completion_case(toy_family(), 1, 0);
  SolverSpec spec;
  spec.steps = 200;
  const auto set = solve_completion(model, MaskOperator::all_visible(), gt, spec, 3);
  CHECK(set.visible_residual.maxCoeff() < 0.02);
}

TEST_CASE("DPS with zero guidance is unconditional sampling") {
  const Denoiser& model = testing::toy_prior();
  const auto tree = KinematicTree::smpl_default();
  SolverSpec spec;
  spec.kind = SolverKind::dps;
  spec.guidance_scale = 0.0;
  spec.steps = 50;
  spec.seed = 4;
  const PoseVector gt = completion_case(toy_family(), 2, 0);
  const auto set = solve_completion(model, MaskOperator::preset("arms", tree), gt, spec, 5);
  CHECK(set.poses == sample_em(model, spec.sampler(), 5));
}

TEST_CASE("projected solvers keep the visible dims") {
  const Denoiser& model = testing::toy_prior();
  const auto tree = KinematicTree::smpl_default();
  const auto mask = MaskOperator::preset("left_leg", tree);
  const PoseVector gt = completion_case(toy_family(), 0, 3);
  for (auto kind : {SolverKind::score_sde_bp, SolverKind::mcg, SolverKind::dps}) {
    SolverSpec spec;
    spec.kind = kind;
    const auto set = solve_completion(model, mask, gt, spec, 10, &tree, gt);
    CAPTURE(to_string(kind));
    CHECK(set.errors.size() == 10);
    if (kind != SolverKind::dps) CHECK(set.visible_residual.maxCoeff() < 0.05);
    CHECK(set.stats()->min <= set.stats()->mean);
  }
}

}
