#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dposer/baselines.hpp"
#include "dposer/benchmarks.hpp"
#include "dposer/checkpoint.hpp"
#include "dposer/data.hpp"
#include "dposer/metrics.hpp"
#include "dposer/parallel.hpp"
#include "dposer/render.hpp"
#include "dposer/tasks.hpp"
#include "dposer/toy.hpp"
#include "dposer/training.hpp"

namespace dposer::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// --- run configuration ----------------------------------------------------------

json default_config() {
  const DenoiserArch arch;
  const TrainConfig train;
  const ScheduleSpec schedule;
  const SamplerSpec sampler;
  const CompletionConfig complete;
  const MotionConfig motion;
  const MotionProblem motion_problem;
  const FitConfig fit;
  const SolverSpec solver;
  const AblationSetup ablation;
  const SyntheticFamilySpec family = toy_family();

  json c;
  c["seed"] = 0;
  c["threads"] = 0;
  c["skeleton"] = "";
  c["data"] = {{"family", to_string(family.family)},
               {"modes", family.modes},
               {"std", family.std},
               {"count", family.count},
               {"seed", family.seed}};
  c["model"] = {{"hidden", arch.hidden_dim},
                {"blocks", arch.num_blocks},
                {"time_embed", arch.time_embed_dim},
                {"norm", "zscore"},
                {"ema_decay", 0.9999},
                {"init_seed", kToyInitSeed}};
  c["train"] = {{"iters", train.iters},
                {"lr", train.lr},
                {"batch", train.batch_size},
                {"warmup", train.warmup_iters},
                {"lr_final_fraction", train.lr_final_fraction},
                {"weighting", to_string(train.weighting)}};
  c["sampler"] = {{"kind", "em"}, {"steps", sampler.steps}, {"t_end", sampler.t_end}};
  c["schedule"] = {{"strategy", to_string(schedule.strategy)},
                   {"t_max", schedule.t_max},
                   {"t_min", schedule.t_min},
                   {"fixed_t", schedule.fixed_t},
                   {"t_floor", schedule.t_floor},
                   {"iters", schedule.iters}};
  c["prior"] = {{"weight_mode", to_string(WeightMode::constant)}};
  c["complete"] = {{"occlusion", "left_leg"},
                   {"hypotheses", 10},
                   {"cases", 20},
                   {"data_weight", complete.data_weight},
                   {"lambda", complete.prior.lambda},
                   {"lr", complete.optimizer.lr}};
  c["motion"] = {{"frames", 60},
                 {"noise_std", 40.0},
                 {"w_obs", motion_problem.w_obs},
                 {"w_temp", motion_problem.w_temp},
                 {"lambda", motion.prior.lambda},
                 {"lr", motion.optimizer.lr},
                 {"init_noise", motion.init_noise}};
  c["fit2d"] = {{"cases", 1},
                {"keypoint_noise", 2.0},
                {"w_theta", fit.weights.w_theta},
                {"w_beta", fit.weights.w_beta},
                {"w_alpha", fit.weights.w_alpha},
                {"lambda", fit.prior.lambda},
                {"gm_scale", fit.gm_scale},
                {"lr", fit.optimizer.lr}};
  c["solver"] = {{"steps", solver.steps}, {"guidance_scale", solver.guidance_scale}};
  c["bench"] = {{"cases", ablation.cases}, {"hypotheses", ablation.hypotheses}};
  return c;
}

void merge_config(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw UsageError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw UsageError("unknown config key '" + name + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, name);
      continue;
    }
    const bool ok = (slot.is_string() && value.is_string()) ||
                    (slot.is_number_integer() && value.is_number_integer()) ||
                    (slot.is_number_float() && value.is_number()) || (slot.is_boolean() && value.is_boolean());
    if (!ok) throw UsageError("config key '" + name + "' has the wrong type");
    slot = value;
  }
}

json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read config " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError("malformed config " + path + ": " + e.what());
  }
}

// Flags are recorded as (json pointer, value) pairs and applied after the
// config file, so they win.
struct Overrides {
  std::vector<std::pair<std::string, json>> values;

  template <typename T>
  CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    return app->add_option_function<T>(
        flag, [this, pointer](const T& v) { values.emplace_back(pointer, json(v)); }, help);
  }

  void apply(json& cfg) const {
    for (const auto& [pointer, value] : values) {
      const json::json_pointer p(pointer);
      if (!cfg.contains(p)) throw UsageError("no config key for " + pointer);
      json patch = json::object();
      json* node = &patch;
      std::string rest = pointer.substr(1);
      for (std::size_t pos; (pos = rest.find('/')) != std::string::npos; rest = rest.substr(pos + 1))
        node = &(*node)[rest.substr(0, pos)];
      (*node)[rest] = value;
      merge_config(cfg, patch, "");
    }
  }
};

struct Context {
  json cfg;
  std::ostream& out;
  std::ostream& err;

  const json& at(const std::string& pointer) const { return cfg.at(json::json_pointer(pointer)); }
  double num(const std::string& pointer) const { return at(pointer).get<double>(); }
  long integer(const std::string& pointer) const { return at(pointer).get<long>(); }
  std::string str(const std::string& pointer) const { return at(pointer).get<std::string>(); }
  std::uint64_t seed() const { return at("/seed").get<std::uint64_t>(); }

  KinematicTree tree() const {
    const std::string path = str("/skeleton");
    return path.empty() ? KinematicTree::smpl_default() : KinematicTree::load(path);
  }
  SyntheticFamilySpec family() const {
    SyntheticFamilySpec f;
    f.family = parse_pose_family(str("/data/family"));
    f.modes = static_cast<int>(integer("/data/modes"));
    f.std = num("/data/std");
    f.count = static_cast<int>(integer("/data/count"));
    f.seed = at("/data/seed").get<std::uint64_t>();
    f.validate();
    return f;
  }
  ScheduleSpec schedule() const {
    ScheduleSpec s;
    s.strategy = parse_schedule_strategy(str("/schedule/strategy"));
    s.t_max = num("/schedule/t_max");
    s.t_min = num("/schedule/t_min");
    s.fixed_t = num("/schedule/fixed_t");
    s.t_floor = num("/schedule/t_floor");
    s.iters = integer("/schedule/iters");
    s.validate();
    return s;
  }
  PriorConfig prior(double lambda) const {
    PriorConfig p;
    p.weight_mode = parse_weight_mode(str("/prior/weight_mode"));
    p.lambda = lambda;
    p.seed = seed();
    p.validate();
    return p;
  }
  CompletionConfig completion() const {
    CompletionConfig c;
    c.data_weight = num("/complete/data_weight");
    if (!(c.data_weight >= 0.0)) throw DomainError("data_weight must be non-negative");
    c.schedule = schedule();
    c.prior = prior(num("/complete/lambda"));
    c.optimizer.lr = num("/complete/lr");
    return c;
  }
  MotionConfig motion() const {
    MotionConfig c;
    c.schedule = schedule();
    c.prior = prior(num("/motion/lambda"));
    c.optimizer.lr = num("/motion/lr");
    c.init_noise = num("/motion/init_noise");
    return c;
  }
  FitConfig fit() const {
    FitConfig c;
    c.schedule = schedule();
    c.prior = prior(num("/fit2d/lambda"));
    c.optimizer.lr = num("/fit2d/lr");
    c.weights = {num("/fit2d/w_theta"), num("/fit2d/w_beta"), num("/fit2d/w_alpha")};
    c.gm_scale = num("/fit2d/gm_scale");
    return c;
  }
  SolverSpec solver() const {
    SolverSpec s;
    s.steps = static_cast<int>(integer("/solver/steps"));
    s.guidance_scale = num("/solver/guidance_scale");
    s.t_end = num("/sampler/t_end");
    s.seed = seed();
    s.validate();
    return s;
  }
};

// --- output helpers -----------------------------------------------------------

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed for " + path.string());
}

void echo_config(const Context& ctx, const fs::path& path) { write_text(path, ctx.cfg.dump(2) + "\n"); }

std::string sidecar(const std::string& file, const std::string& suffix) { return file + suffix; }

std::vector<Joints3> skeletons(const KinematicTree& tree, const PoseBatch& poses, Eigen::Index limit) {
  std::vector<Joints3> out;
  for (Eigen::Index i = 0; i < std::min(limit, poses.cols()); ++i) out.push_back(fk(tree, poses.col(i), ShapeVector::Zero()));
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) items.push_back(item);
  if (items.empty()) throw UsageError("empty list '" + text + "'");
  return items;
}

Denoiser load_model(const std::string& path) { return load_checkpoint(path); }

json state_json(const FitState& s) {
  json j;
  j["pose"] = std::vector<double>(s.pose.data(), s.pose.data() + kPoseDim);
  j["beta"] = std::vector<double>(s.beta.data(), s.beta.data() + kShapeDim);
  j["camera"] = {{"scale", s.camera.scale},
                 {"trans", {s.camera.trans.x(), s.camera.trans.y()}},
                 {"global_orient", {s.camera.global_orient.x(), s.camera.global_orient.y(), s.camera.global_orient.z()}}};
  return j;
}

// --- commands -------------------------------------------------------------------

struct Paths {
  std::string data, out, out_dir, model, input, keypoints, loss_csv;
  std::string strategies = "truncated,uniform,fixed,random";
  std::string solvers = "dposer,no_prior,score_sde_bp,mcg,dps";
  std::string task;
  long num = 500;
  int svg = 0;
};

void cmd_synth(const Context& ctx, const Paths& p) {
  const auto ds = generate_synthetic(ctx.family());
  write_poses(ds, p.out);
  echo_config(ctx, sidecar(p.out, ".config.json"));
  ctx.out << "wrote " << ds.count() << " poses to " << p.out << "\n";
}

void cmd_train(const Context& ctx, const Paths& p) {
  const PoseDataset ds = read_poses(p.data);
  ds.validate();
  if (ds.count() == 0) throw DataError("training data " + p.data + " holds no poses");
  DenoiserArch arch;
  arch.hidden_dim = static_cast<int>(ctx.integer("/model/hidden"));
  arch.num_blocks = static_cast<int>(ctx.integer("/model/blocks"));
  arch.time_embed_dim = static_cast<int>(ctx.integer("/model/time_embed"));
  arch.validate();
  Denoiser model = make_denoiser(ds.poses, arch, parse_norm_mode(ctx.str("/model/norm")), ctx.num("/model/ema_decay"),
                                 ctx.at("/model/init_seed").get<std::uint64_t>());

  TrainConfig cfg;
  cfg.iters = ctx.integer("/train/iters");
  cfg.lr = ctx.num("/train/lr");
  cfg.batch_size = static_cast<int>(ctx.integer("/train/batch"));
  cfg.warmup_iters = ctx.integer("/train/warmup");
  cfg.lr_final_fraction = ctx.num("/train/lr_final_fraction");
  cfg.weighting = parse_loss_weighting(ctx.str("/train/weighting"));
  cfg.seed = ctx.seed();
  if (cfg.iters < 0) throw UsageError("--iters must be non-negative");

  TrainReport report;
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.iters > 0) report = train(model, ds.poses, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint(model, p.out);
  const std::string loss_csv = p.loss_csv.empty() ? sidecar(p.out, ".loss.csv") : p.loss_csv;
  std::ostringstream csv;
  csv << "iter,loss,dsm_loss\n" << std::setprecision(10);
  for (std::size_t i = 0; i < report.loss.size(); ++i) csv << i << ',' << report.loss[i] << ',' << report.dsm_loss[i] << '\n';
  write_text(loss_csv, csv.str());
  echo_config(ctx, sidecar(p.out, ".config.json"));
  ctx.out << "trained " << cfg.iters << " iterations in " << std::fixed << std::setprecision(1) << secs << " s; wrote "
          << p.out << "\n";
}

void cmd_generate(const Context& ctx, const Paths& p) {
  const Denoiser model = load_model(p.model);
  const KinematicTree tree = ctx.tree();
  if (p.num < 0) throw UsageError("--num must be non-negative");
  SamplerSpec spec;
  spec.kind = parse_sampler_kind(ctx.str("/sampler/kind"));
  spec.steps = static_cast<int>(ctx.integer("/sampler/steps"));
  spec.t_end = ctx.num("/sampler/t_end");
  spec.seed = ctx.seed();
  spec.validate();

  const fs::path dir = prepare_dir(p.out_dir);
  const PoseBatch poses = generate(model, spec, p.num);
  write_poses({"samples", spec.seed, poses}, (dir / "samples.ppd").string());
  std::ostringstream csv;
  csv << "count,apd_mm\n" << poses.cols() << ',';
  if (poses.cols() >= 2) csv << std::setprecision(10) << apd(poses, tree);
  csv << '\n';
  write_text(dir / "metrics.csv", csv.str());
  if (p.svg > 0) write_svg(tree, skeletons(tree, poses, p.svg), (dir / "samples.svg").string());
  echo_config(ctx, dir / "config.json");
  ctx.out << "generated " << poses.cols() << " poses into " << dir.string() << "\n";
}

void cmd_complete(const Context& ctx, const Paths& p) {
  const Denoiser model = load_model(p.model);
  const KinematicTree tree = ctx.tree();
  const MaskOperator mask = MaskOperator::preset(ctx.str("/complete/occlusion"), tree);
  const int S = static_cast<int>(ctx.integer("/complete/hypotheses"));
  if (S < 1) throw UsageError("--hypotheses must be at least 1");
  const CompletionConfig base = ctx.completion();

  PoseBatch truth;
  if (!p.input.empty()) {
    const auto ds = read_poses(p.input);
    ds.validate();
    truth = ds.poses;
  } else {
    const int cases = static_cast<int>(ctx.integer("/complete/cases"));
    if (cases < 1) throw UsageError("--cases must be at least 1");
    truth.resize(kPoseDim, cases);
    for (int k = 0; k < cases; ++k) truth.col(k) = completion_case(ctx.family(), ctx.seed(), k);
  }

  const fs::path dir = prepare_dir(p.out_dir);
  PoseBatch all(kPoseDim, truth.cols() * S);
  std::ostringstream csv;
  csv << "min,mean,std\n" << std::setprecision(10);
  for (Eigen::Index k = 0; k < truth.cols(); ++k) {
    CompletionConfig cfg = base;
    cfg.prior.seed = case_seed(ctx.seed(), static_cast<int>(k));
    const PoseVector gt = truth.col(k);
    const auto set = complete_pose(model, mask, gt, S, cfg, &tree, gt);
    all.middleCols(k * S, S) = set.poses;
    const auto stats = *set.stats();
    csv << stats.min << ',' << stats.mean << ',' << stats.std << '\n';
    if (p.svg > 0) {
      std::vector<Joints3> panels{fk(tree, gt, ShapeVector::Zero())};
      for (const auto& s : skeletons(tree, set.poses, p.svg)) panels.push_back(s);
      std::ostringstream name;
      name << "case_" << std::setw(3) << std::setfill('0') << k << ".svg";
      write_svg(tree, panels, (dir / name.str()).string());
    }
  }
  write_poses({"hypotheses", ctx.seed(), all}, (dir / "hypotheses.ppd").string());
  write_text(dir / "metrics.csv", csv.str());
  echo_config(ctx, dir / "config.json");
  ctx.out << "completed " << truth.cols() << " poses x " << S << " hypotheses into " << dir.string() << "\n";
}

void cmd_denoise_motion(const Context& ctx, const Paths& p) {
  const Denoiser model = load_model(p.model);
  const KinematicTree tree = ctx.tree();
  MotionProblem problem;
  problem.w_obs = ctx.num("/motion/w_obs");
  problem.w_temp = ctx.num("/motion/w_temp");
  std::optional<std::vector<Joints3>> clean;
  const fs::path dir = prepare_dir(p.out_dir);
  if (!p.input.empty()) {
    problem.observed = read_trajectory_csv(p.input, tree.num_joints());
  } else {
    const int frames = static_cast<int>(ctx.integer("/motion/frames"));
    if (frames < 1) throw UsageError("--frames must be at least 1");
    const auto c = motion_case(tree, ctx.family(), frames, ctx.num("/motion/noise_std"), ctx.seed(), 0);
    problem.observed = c.noisy;
    clean = c.clean;
    write_trajectory_csv(c.noisy, (dir / "noisy.csv").string());
    write_trajectory_csv(c.clean, (dir / "clean.csv").string());
  }
  MotionConfig cfg = ctx.motion();
  cfg.prior.seed = case_seed(ctx.seed(), 0);
  const auto result = denoise_motion(model, problem, tree, cfg);

  write_poses({"motion", ctx.seed(), result.poses}, (dir / "poses.ppd").string());
  write_trajectory_csv(result.joints, (dir / "joints.csv").string());
  auto mean_mpjpe = [&](const std::vector<Joints3>& a, const std::vector<Joints3>& b) {
    double s = 0.0;
    for (std::size_t f = 0; f < a.size(); ++f) s += mpjpe(a[f], b[f]);
    return s / static_cast<double>(a.size());
  };
  std::ostringstream csv;
  csv << std::setprecision(10);
  if (clean) {
    const double pre = mean_mpjpe(problem.observed, *clean), post = mean_mpjpe(result.joints, *clean);
    csv << "pre_mpjpe_mm,post_mpjpe_mm\n" << pre << ',' << post << '\n';
    ctx.out << "pre " << std::fixed << std::setprecision(2) << pre << " mm, post " << post << " mm\n";
  } else {
    const double gap = mean_mpjpe(result.joints, problem.observed);
    csv << "observation_gap_mm\n" << gap << '\n';
    ctx.out << "mean distance to the observations " << std::fixed << std::setprecision(2) << gap << " mm\n";
  }
  write_text(dir / "report.csv", csv.str());
  if (p.svg > 0) {
    std::vector<Joints3> panels;
    const std::size_t stride = std::max<std::size_t>(1, result.joints.size() / static_cast<std::size_t>(p.svg));
    for (std::size_t f = 0; f < result.joints.size() && panels.size() < static_cast<std::size_t>(p.svg); f += stride)
      panels.push_back(result.joints[f]);
    write_svg(tree, panels, (dir / "motion.svg").string());
  }
  echo_config(ctx, dir / "config.json");
}

void cmd_fit2d(const Context& ctx, const Paths& p) {
  const Denoiser model = load_model(p.model);
  const KinematicTree tree = ctx.tree();
  const FitConfig base = ctx.fit();
  const fs::path dir = prepare_dir(p.out_dir);

  std::vector<Keypoints2D> inputs;
  std::vector<std::optional<FitState>> truths;
  if (!p.keypoints.empty()) {
    inputs.push_back(read_keypoints_csv(p.keypoints, tree.num_joints()));
    truths.emplace_back();
  } else {
    const int cases = static_cast<int>(ctx.integer("/fit2d/cases"));
    if (cases < 1) throw UsageError("--cases must be at least 1");
    for (int k = 0; k < cases; ++k) {
      auto c = fit_case(tree, ctx.family(), ctx.num("/fit2d/keypoint_noise"), ctx.seed(), k);
      write_keypoints_csv(c.keypoints, (dir / ("keypoints_" + std::to_string(k) + ".csv")).string());
      inputs.push_back(std::move(c.keypoints));
      truths.emplace_back(c.truth);
    }
  }

  json fits = json::array();
  std::ostringstream csv;
  csv << (truths.front() ? "reprojection_px,pa_mpjpe_mm\n" : "reprojection_px\n") << std::setprecision(10);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    FitConfig cfg = base;
    cfg.prior.seed = case_seed(ctx.seed(), static_cast<int>(k));
    const auto result = fit_2d(model, inputs[k], tree, std::nullopt, cfg);
    fits.push_back(state_json(result.state));
    csv << result.reprojection_error;
    if (truths[k]) {
      const auto& t = *truths[k];
      csv << ',' << pa_mpjpe(fk(tree, result.state.pose, result.state.beta), fk(tree, t.pose, t.beta));
    }
    csv << '\n';
    if (p.svg > 0)
      write_svg(tree, {fk(tree, result.state.pose, result.state.beta)},
                (dir / ("fit_" + std::to_string(k) + ".svg")).string());
  }
  write_text(dir / "fit.json", fits.dump(2) + "\n");
  write_text(dir / "metrics.csv", csv.str());
  echo_config(ctx, dir / "config.json");
  ctx.out << "fitted " << inputs.size() << " keypoint sets into " << dir.string() << "\n";
}

void cmd_ablate(const Context& ctx, const Paths& p) {
  std::vector<ScheduleStrategy> strategies;
  for (const auto& name : split_list(p.strategies)) strategies.push_back(parse_schedule_strategy(name));
  AblationSetup setup;
  setup.task = parse_bench_task(p.task);
  const Denoiser model = load_model(p.model);
  const KinematicTree tree = ctx.tree();
  setup.family = ctx.family();
  setup.seed = ctx.seed();
  setup.cases = static_cast<int>(ctx.integer("/bench/cases"));
  setup.hypotheses = static_cast<int>(ctx.integer("/bench/hypotheses"));
  setup.preset = ctx.str("/complete/occlusion");
  setup.frames = static_cast<int>(ctx.integer("/motion/frames"));
  setup.noise_std = ctx.num("/motion/noise_std");
  setup.keypoint_noise = ctx.num("/fit2d/keypoint_noise");
  setup.completion = ctx.completion();
  setup.motion = ctx.motion();
  setup.fit = ctx.fit();

  const fs::path dir = prepare_dir(p.out_dir);
  const auto rows = ablate_schedule(model, tree, setup, strategies);
  write_ablation_csv(rows, (dir / "ablation.csv").string());
  echo_config(ctx, dir / "config.json");
  for (const auto& r : rows) ctx.out << to_string(r.strategy) << ' ' << r.metric << ' ' << r.value << '\n';
}

void cmd_bench(const Context& ctx, const Paths& p) {
  const auto methods = split_list(p.solvers);
  for (const auto& m : methods)
    if (m != "dposer" && m != "no_prior") parse_solver_kind(m);
  const Denoiser model = load_model(p.model);
  const KinematicTree tree = ctx.tree();
  SolverBenchSetup setup;
  setup.family = ctx.family();
  setup.seed = ctx.seed();
  setup.cases = static_cast<int>(ctx.integer("/bench/cases"));
  setup.hypotheses = static_cast<int>(ctx.integer("/bench/hypotheses"));
  setup.preset = ctx.str("/complete/occlusion");
  setup.dposer = ctx.completion();
  setup.solver = ctx.solver();

  const fs::path dir = prepare_dir(p.out_dir);
  const auto records = bench_solvers(model, tree, setup, methods);
  write_solver_csv(records, (dir / "solvers.csv").string());
  echo_config(ctx, dir / "config.json");
  ctx.out << "wrote " << (dir / "solvers.csv").string() << "\n";
}

int threads_from_env() {
  const char* v = std::getenv("DPOSER_THREADS");
  if (!v || !*v) return 0;
  try {
    std::size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used != std::string(v).size() || n < 0) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError(std::string("DPOSER_THREADS must be a non-negative integer, got '") + v + "'");
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion pose prior toolkit", "dposer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");
  app.fallthrough();

  std::string config_path;
  Overrides ov;
  Paths p;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option_function<int>("--threads", [&](int n) { threads = n; }, "Worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
  ov.bind<std::uint64_t>(&app, "--seed", "/seed", "Global seed");
  ov.bind<std::string>(&app, "--skeleton", "/skeleton", "Skeleton JSON (default: built-in 22-joint body)");

  auto data_flags = [&](CLI::App* c) {
    ov.bind<std::string>(c, "--family", "/data/family", "walk_cycle, reach, squat or mixture");
    ov.bind<int>(c, "--modes", "/data/modes", "Modes along the family curve");
    ov.bind<double>(c, "--std", "/data/std", "Within-mode jitter (rad)");
    ov.bind<std::uint64_t>(c, "--data-seed", "/data/seed", "Dataset seed");
  };
  auto schedule_flags = [&](CLI::App* c) {
    ov.bind<std::string>(c, "--strategy", "/schedule/strategy", "truncated, uniform, fixed or random");
    ov.bind<long>(c, "--iters", "/schedule/iters", "Optimization iterations");
    ov.bind<double>(c, "--t-max", "/schedule/t_max", "Truncated schedule start");
    ov.bind<double>(c, "--t-min", "/schedule/t_min", "Truncated schedule end");
    ov.bind<std::string>(c, "--weight-mode", "/prior/weight_mode", "constant or snr_scaled");
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic pose dataset");
  synth->add_option("--out", p.out, "Output file (.ppd or .csv)")->required();
  data_flags(synth);
  ov.bind<int>(synth, "--count", "/data/count", "Number of poses");

  auto* train = app.add_subcommand("train", "Train a denoiser");
  train->add_option("--data", p.data, "Training poses (.ppd or .csv)")->required();
  train->add_option("--out", p.out, "Checkpoint path")->required();
  train->add_option("--loss-csv", p.loss_csv, "Loss curve (default <out>.loss.csv)");
  ov.bind<int>(train, "--hidden", "/model/hidden", "Hidden width");
  ov.bind<int>(train, "--blocks", "/model/blocks", "Residual blocks");
  ov.bind<int>(train, "--time-embed", "/model/time_embed", "Time embedding width");
  ov.bind<std::string>(train, "--norm", "/model/norm", "zscore, minmax or none");
  ov.bind<double>(train, "--ema", "/model/ema_decay", "EMA decay");
  ov.bind<long>(train, "--iters", "/train/iters", "Training iterations");
  ov.bind<double>(train, "--lr", "/train/lr", "Learning rate");
  ov.bind<int>(train, "--batch", "/train/batch", "Batch size");
  ov.bind<long>(train, "--warmup", "/train/warmup", "Linear warmup iterations");
  ov.bind<double>(train, "--lr-final", "/train/lr_final_fraction", "Final learning rate as a fraction of --lr");
  ov.bind<std::string>(train, "--weighting", "/train/weighting", "sigma2 or unit");

  auto* gen = app.add_subcommand("generate", "Sample poses from a trained prior");
  gen->add_option("--model", p.model, "Checkpoint")->required();
  gen->add_option("--out-dir", p.out_dir, "Output directory")->required();
  gen->add_option("--num", p.num, "Number of samples");
  gen->add_option("--svg", p.svg, "Render this many samples");
  ov.bind<std::string>(gen, "--sampler", "/sampler/kind", "em or ddim");
  ov.bind<int>(gen, "--steps", "/sampler/steps", "Sampler steps");

  auto* complete = app.add_subcommand("complete", "Multi-hypothesis pose completion");
  complete->add_option("--model", p.model, "Checkpoint")->required();
  complete->add_option("--out-dir", p.out_dir, "Output directory")->required();
  complete->add_option("--input", p.input, "Ground-truth poses to occlude (default: synthetic cases)");
  complete->add_option("--svg", p.svg, "Render this many hypotheses per case");
  ov.bind<std::string>(complete, "--occlusion", "/complete/occlusion", "left_leg, legs, arms or trunk");
  ov.bind<int>(complete, "--hypotheses", "/complete/hypotheses", "Hypotheses per pose");
  ov.bind<int>(complete, "--cases", "/complete/cases", "Synthetic cases");
  ov.bind<double>(complete, "--lambda", "/complete/lambda", "Regularizer weight");
  ov.bind<double>(complete, "--lr", "/complete/lr", "Inner learning rate");
  schedule_flags(complete);
  data_flags(complete);

  auto* motion = app.add_subcommand("denoise-motion", "Denoise a 3D joint trajectory");
  motion->add_option("--model", p.model, "Checkpoint")->required();
  motion->add_option("--out-dir", p.out_dir, "Output directory")->required();
  motion->add_option("--input", p.input, "Trajectory CSV frame,joint,x,y,z (default: synthetic)");
  motion->add_option("--svg", p.svg, "Render this many frames");
  ov.bind<int>(motion, "--frames", "/motion/frames", "Synthetic sequence length");
  ov.bind<double>(motion, "--noise-std", "/motion/noise_std", "Synthetic corruption (mm)");
  ov.bind<double>(motion, "--lambda", "/motion/lambda", "Regularizer weight");
  ov.bind<double>(motion, "--w-temp", "/motion/w_temp", "Temporal weight");
  ov.bind<double>(motion, "--lr", "/motion/lr", "Inner learning rate");
  schedule_flags(motion);
  data_flags(motion);

  auto* fit = app.add_subcommand("fit2d", "Fit pose, shape and camera to 2D keypoints");
  fit->add_option("--model", p.model, "Checkpoint")->required();
  fit->add_option("--out-dir", p.out_dir, "Output directory")->required();
  fit->add_option("--keypoints", p.keypoints, "Keypoint CSV joint,x,y,confidence (default: synthetic)");
  fit->add_option("--svg", p.svg, "Render the fitted skeleton (any value > 0)");
  ov.bind<int>(fit, "--cases", "/fit2d/cases", "Synthetic cases");
  ov.bind<double>(fit, "--keypoint-noise", "/fit2d/keypoint_noise", "Synthetic keypoint noise (px)");
  ov.bind<double>(fit, "--w-alpha", "/fit2d/w_alpha", "Regularizer weight");
  ov.bind<double>(fit, "--lr", "/fit2d/lr", "Inner learning rate");
  schedule_flags(fit);
  data_flags(fit);

  auto* ablate = app.add_subcommand("ablate-schedule", "Compare timestep schedules on paired cases");
  ablate->add_option("--model", p.model, "Checkpoint")->required();
  ablate->add_option("--out-dir", p.out_dir, "Output directory")->required();
  ablate->add_option("--task", p.task, "complete, motion or fit2d")->required();
  ablate->add_option("--strategies", p.strategies, "Comma separated strategies");
  ov.bind<int>(ablate, "--cases", "/bench/cases", "Paired cases");
  ov.bind<int>(ablate, "--hypotheses", "/bench/hypotheses", "Hypotheses per completion case");
  ov.bind<long>(ablate, "--iters", "/schedule/iters", "Optimization iterations");
  data_flags(ablate);

  auto* bench = app.add_subcommand("bench-solvers", "Compare completion solvers on paired cases");
  bench->add_option("--model", p.model, "Checkpoint")->required();
  bench->add_option("--out-dir", p.out_dir, "Output directory")->required();
  bench->add_option("--solvers", p.solvers, "Comma separated methods");
  ov.bind<int>(bench, "--cases", "/bench/cases", "Paired cases");
  ov.bind<int>(bench, "--hypotheses", "/bench/hypotheses", "Hypotheses per case");
  ov.bind<int>(bench, "--steps", "/solver/steps", "Reverse sampling steps");
  ov.bind<double>(bench, "--guidance-scale", "/solver/guidance_scale", "Guidance scale for mcg and dps");
  data_flags(bench);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      std::ostringstream o, e2;
      const int code = app.exit(e, o, e2);
      out << o.str();
      err << e2.str();
      return code == 0 ? kExitOk : kExitUsage;
    }

    Context ctx{default_config(), out, err};
    if (!config_path.empty()) merge_config(ctx.cfg, load_config_file(config_path), "");
    ov.apply(ctx.cfg);
    const int n_threads = threads ? *threads : threads_from_env();
    ctx.cfg["threads"] = n_threads;
    set_max_threads(n_threads);

    if (*synth) cmd_synth(ctx, p);
    else if (*train) cmd_train(ctx, p);
    else if (*gen) cmd_generate(ctx, p);
    else if (*complete) cmd_complete(ctx, p);
    else if (*motion) cmd_denoise_motion(ctx, p);
    else if (*fit) cmd_fit2d(ctx, p);
    else if (*ablate) cmd_ablate(ctx, p);
    else if (*bench) cmd_bench(ctx, p);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const FittingError& e) {
    err << "fitting error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DomainError& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "invalid input shape: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace dposer::cli
