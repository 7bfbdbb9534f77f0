#include "dposer/benchmarks.hpp"

#include <fstream>
#include <iomanip>
#include <map>

namespace dposer {

std::string to_string(BenchTask task) {
  switch (task) {
    case BenchTask::complete: return "complete";
    case BenchTask::motion: return "motion";
    case BenchTask::fit2d: return "fit2d";
  }
  return "complete";
}

BenchTask parse_bench_task(std::string_view name) {
  if (name == "complete") return BenchTask::complete;
  if (name == "motion") return BenchTask::motion;
  if (name == "fit2d") return BenchTask::fit2d;
  throw DomainError("unknown task '" + std::string(name) + "'");
}

std::uint64_t case_seed(std::uint64_t seed, int index) {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(index));
}

PoseVector completion_case(const SyntheticFamilySpec& family, std::uint64_t seed, int index) {
  Rng rng(seed, {0xca5e, static_cast<std::uint64_t>(index)});
  return draw_family_pose(family, rng);
}

MotionCase motion_case(const KinematicTree& tree, const SyntheticFamilySpec& family, int frames, double noise_std,
                       std::uint64_t seed, int index) {
  SyntheticFamilySpec spec = family;
  spec.seed = case_seed(seed, index);
  MotionCase c;
  c.poses = generate_motion(spec, frames);
  for (int f = 0; f < frames; ++f) c.clean.push_back(fk(tree, c.poses.col(f), ShapeVector::Zero()));
  c.noisy = corrupt(c.clean, noise_std, case_seed(seed, index) ^ 0x40).corrupted;
  return c;
}

FitCase fit_case(const KinematicTree& tree, const SyntheticFamilySpec& family, double keypoint_noise,
                 std::uint64_t seed, int index) {
  Rng rng(seed, {0xf17, static_cast<std::uint64_t>(index)});
  FitCase c;
  c.truth.pose = draw_family_pose(family, rng);
  for (int k = 0; k < kShapeDim; ++k) c.truth.beta[k] = 0.5 * rng.normal();
  c.truth.camera.scale = 0.2 * std::exp(0.1 * rng.normal());
  c.truth.camera.trans = Vec2(320.0 + 10.0 * rng.normal(), 320.0 + 10.0 * rng.normal());
  for (int k = 0; k < 3; ++k) c.truth.camera.global_orient[k] = 0.15 * rng.normal();
  const Joints2 p = project(c.truth.camera, fk(tree, c.truth.pose, c.truth.beta));
  for (int j = 0; j < tree.num_joints(); ++j) {
    const Vec2 n(rng.normal(), rng.normal());
    c.keypoints.push_back({p.col(j) + keypoint_noise * n, 1.0});
  }
  return c;
}

namespace {

template <typename Scalar>
double run_case(const BasicDenoiser<Scalar>& model, const KinematicTree& tree, const AblationSetup& setup,
                ScheduleStrategy strategy, int k) {
  const std::uint64_t s = case_seed(setup.seed, k);
  switch (setup.task) {
    case BenchTask::complete: {
      CompletionConfig cfg = setup.completion;
      cfg.schedule.strategy = strategy;
      cfg.prior.seed = s;
      const PoseVector gt = completion_case(setup.family, setup.seed, k);
      const auto mask = MaskOperator::preset(setup.preset, tree);
      const auto set = complete_pose(model, mask, gt, setup.hypotheses, cfg, &tree, gt);
      return set.stats()->min;
    }
    case BenchTask::motion: {
      MotionConfig cfg = setup.motion;
      cfg.schedule.strategy = strategy;
      cfg.prior.seed = s;
      const auto c = motion_case(tree, setup.family, setup.frames, setup.noise_std, setup.seed, k);
      MotionProblem problem;
      problem.observed = c.noisy;
      const auto result = denoise_motion(model, problem, tree, cfg);
      double err = 0.0;
      for (int f = 0; f < setup.frames; ++f) err += mpjpe(result.joints[f], c.clean[f]);
      return err / setup.frames;
    }
    case BenchTask::fit2d: {
      FitConfig cfg = setup.fit;
      cfg.schedule.strategy = strategy;
      cfg.prior.seed = s;
      const auto c = fit_case(tree, setup.family, setup.keypoint_noise, setup.seed, k);
      const auto result = fit_2d(model, c.keypoints, tree, std::nullopt, cfg);
      return pa_mpjpe(fk(tree, result.state.pose, result.state.beta), fk(tree, c.truth.pose, c.truth.beta));
    }
  }
  return 0.0;
}

const char* metric_name(BenchTask task) {
  switch (task) {
    case BenchTask::complete: return "min_mpjpe_mm";
    case BenchTask::motion: return "mpjpe_mm";
    case BenchTask::fit2d: return "pa_mpjpe_mm";
  }
  return "";
}

}  // namespace

template <typename Scalar>
std::vector<AblationRow> ablate_schedule(const BasicDenoiser<Scalar>& model, const KinematicTree& tree,
                                         const AblationSetup& setup, const std::vector<ScheduleStrategy>& strategies) {
  if (setup.cases < 1) throw DomainError("ablation needs at least one case");
  std::vector<AblationRow> rows;
  for (const auto strategy : strategies) {
    AblationRow row{setup.task, strategy, setup.cases, metric_name(setup.task), 0.0, {}};
    for (int k = 0; k < setup.cases; ++k) row.per_case.push_back(run_case(model, tree, setup, strategy, k));
    for (double v : row.per_case) row.value += v;
    row.value /= setup.cases;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << "task,strategy,cases,metric,value\n" << std::setprecision(10);
  for (const auto& r : rows)
    f << to_string(r.task) << ',' << to_string(r.strategy) << ',' << r.cases << ',' << r.metric << ',' << r.value << '\n';
}

template <typename Scalar>
std::vector<SolverBenchRecord> bench_solvers(const BasicDenoiser<Scalar>& model, const KinematicTree& tree,
                                             const SolverBenchSetup& setup, const std::vector<std::string>& methods) {
  for (const auto& m : methods)
    if (m != "dposer" && m != "no_prior") parse_solver_kind(m);
  const auto mask = MaskOperator::preset(setup.preset, tree);
  std::vector<SolverBenchRecord> out;
  for (int k = 0; k < setup.cases; ++k) {
    const PoseVector gt = completion_case(setup.family, setup.seed, k);
    const std::uint64_t s = case_seed(setup.seed, k);
    for (const auto& m : methods) {
      HypothesisSet set;
      if (m == "dposer" || m == "no_prior") {
        CompletionConfig cfg = setup.dposer;
        cfg.prior.seed = s;
        if (m == "no_prior") cfg.prior.lambda = 0.0;
        set = complete_pose(model, mask, gt, setup.hypotheses, cfg, &tree, gt);
      } else {
        SolverSpec spec = setup.solver;
        spec.kind = parse_solver_kind(m);
        spec.seed = s;
        set = solve_completion(model, mask, gt, spec, setup.hypotheses, &tree, gt);
      }
      out.push_back({m, k, *set.stats(), set.visible_residual.maxCoeff()});
    }
  }
  return out;
}

void write_solver_csv(const std::vector<SolverBenchRecord>& records, const std::string& path) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SolverBenchRecord*>> by_method;
  std::map<int, double> dposer_min;
  for (const auto& r : records) {
    if (!by_method.count(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
    if (r.method == "dposer") dposer_min[r.case_index] = r.stats.min;
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << "method,cases,mean_min_mpjpe_mm,mean_mean_mpjpe_mm,max_visible_residual,dposer_win_rate\n" << std::setprecision(10);
  for (const auto& m : order) {
    const auto& rs = by_method[m];
    double mn = 0.0, mean = 0.0, res = 0.0;
    int wins = 0, paired = 0;
    for (const auto* r : rs) {
      mn += r->stats.min;
      mean += r->stats.mean;
      res = std::max(res, r->max_visible_residual);
      if (auto it = dposer_min.find(r->case_index); it != dposer_min.end()) {
        ++paired;
        if (it->second <= r->stats.min) ++wins;
      }
    }
    const double n = static_cast<double>(rs.size());
    f << m << ',' << rs.size() << ',' << mn / n << ',' << mean / n << ',' << res << ',';
    if (paired > 0) f << static_cast<double>(wins) / paired;
    f << '\n';
  }
}

#define DPOSER_INSTANTIATE(S)                                                                                  \
  template std::vector<AblationRow> ablate_schedule<S>(const BasicDenoiser<S>&, const KinematicTree&,          \
                                                       const AblationSetup&, const std::vector<ScheduleStrategy>&); \
  template std::vector<SolverBenchRecord> bench_solvers<S>(const BasicDenoiser<S>&, const KinematicTree&,      \
                                                           const SolverBenchSetup&, const std::vector<std::string>&);
DPOSER_INSTANTIATE(float)
DPOSER_INSTANTIATE(double)
#undef DPOSER_INSTANTIATE

}  // namespace dposer
