#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "dposer/checkpoint.hpp"
#include "dposer/data.hpp"
#include "dposer/toy.hpp"
#include "helpers.hpp"

using namespace dposer;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dposer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// A small untrained checkpoint is enough to exercise the plumbing.
const std::string& small_checkpoint() {
  static const std::string path = [] {
    const std::string p = testing::scratch_path("cli_small.dpsr");
    const auto r = run({"train", "--data", testing::data_path("toy_walk_cycle.ppd"), "--out", p, "--iters", "20",
                        "--hidden", "16", "--blocks", "1", "--time-embed", "8", "--batch", "32"});
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"train", "--out", testing::scratch_path("x.dpsr")}).code == cli::kExitUsage);
  CHECK(run({"dance"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("untrained checkpoint matches a fresh model") {
  const std::string p = testing::scratch_path("cli_init.dpsr");
  const auto r = run({"train", "--data", testing::data_path("toy_walk_cycle.ppd"), "--out", p, "--iters", "0"});
  REQUIRE(r.code == 0);
  const Denoiser loaded = load_checkpoint(p);
  const Denoiser fresh = make_denoiser(testing::toy_dataset().poses, DenoiserArch{}, NormMode::zscore, 0.9999);
  CHECK(loaded.weights() == fresh.weights());
  CHECK(fs::exists(p + ".config.json"));
  CHECK(slurp(p + ".loss.csv") == "iter,loss,dsm_loss\n");
}

TEST_CASE("synth writes the requested family") {
  const std::string p = testing::scratch_path("cli_synth.ppd");
  const auto r = run({"synth", "--out", p, "--family", "squat", "--modes", "3", "--count", "40", "--data-seed", "2"});
  REQUIRE(r.code == 0);
  CHECK(read_ppd(p).poses == generate_synthetic({PoseFamily::squat, 3, 0.05, 40, 2}).poses);
  const auto cfg = nlohmann::json::parse(slurp(p + ".config.json"));
  CHECK(cfg["data"]["family"] == "squat");
  CHECK(cfg["data"]["count"] == 40);
}

TEST_CASE("generate with zero samples") {
  const fs::path dir = testing::scratch_path("cli_gen0");
  const auto r = run({"generate", "--model", small_checkpoint(), "--out-dir", dir.string(), "--num", "0"});
  REQUIRE(r.code == 0);
  CHECK(read_ppd((dir / "samples.ppd").string()).count() == 0);
  CHECK(slurp(dir / "metrics.csv") == "count,apd_mm\n0,\n");
}

TEST_CASE("generate renders one line per bone") {
  const fs::path dir = testing::scratch_path("cli_gen");
  const auto r = run({"generate", "--model", small_checkpoint(), "--out-dir", dir.string(), "--num", "4", "--svg", "3",
                      "--steps", "20", "--seed", "5"});
  REQUIRE(r.code == 0);
  CHECK(read_ppd((dir / "samples.ppd").string()).count() == 4);
  CHECK(count(slurp(dir / "samples.svg"), "<line") == 3 * 21);
  const auto cfg = nlohmann::json::parse(slurp(dir / "config.json"));
  CHECK(cfg["seed"] == 5);
  CHECK(cfg["sampler"]["steps"] == 20);
}

TEST_CASE("complete writes per-case statistics and reruns identically") {
  const fs::path a = testing::scratch_path("cli_complete_a"), b = testing::scratch_path("cli_complete_b");
  const std::vector<std::string> common{"complete", "--model", small_checkpoint(), "--cases", "2", "--hypotheses", "3",
                                        "--iters", "10"};
  auto args = common;
  args.insert(args.end(), {"--out-dir", a.string()});
  REQUIRE(run(args).code == 0);
  args = common;
  args.insert(args.end(), {"--out-dir", b.string()});
  REQUIRE(run(args).code == 0);
  const std::string m = slurp(a / "metrics.csv");
  CHECK(m.rfind("min,mean,std\n", 0) == 0);
  CHECK(count(m, "\n") == 3);
  CHECK(m == slurp(b / "metrics.csv"));
  CHECK(read_ppd((a / "hypotheses.ppd").string()).poses == read_ppd((b / "hypotheses.ppd").string()).poses);

  args = common;
  args.insert(args.end(), {"--out-dir", a.string(), "--iters", "0"});
  CHECK(run(args).code == cli::kExitUsage);
  args = common;
  args.insert(args.end(), {"--out-dir", a.string(), "--occlusion", "tail"});
  CHECK(run(args).code == cli::kExitUsage);
}

TEST_CASE("config files") {
  const std::string good = testing::scratch_path("cli_cfg.json");
  std::ofstream(good) << R"({"seed": 11, "complete": {"hypotheses": 2, "cases": 1}, "schedule": {"iters": 5}})";
  const fs::path dir = testing::scratch_path("cli_cfg_out");
  REQUIRE(run({"--config", good, "complete", "--model", small_checkpoint(), "--out-dir", dir.string()}).code == 0);
  const auto echoed = nlohmann::json::parse(slurp(dir / "config.json"));
  CHECK(echoed["seed"] == 11);
  CHECK(echoed["complete"]["hypotheses"] == 2);
  CHECK(echoed["schedule"]["iters"] == 5);

  // flags win over the file
  REQUIRE(run({"--config", good, "complete", "--model", small_checkpoint(), "--out-dir", dir.string(), "--hypotheses",
               "3"})
              .code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "config.json"))["complete"]["hypotheses"] == 3);

  const std::string unknown = testing::scratch_path("cli_cfg_bad.json");
  std::ofstream(unknown) << R"({"complete": {"hypothesis": 2}})";
  CHECK(run({"--config", unknown, "complete", "--model", small_checkpoint(), "--out-dir", dir.string()}).code ==
        cli::kExitUsage);
  const std::string typed = testing::scratch_path("cli_cfg_type.json");
  std::ofstream(typed) << R"({"seed": "zero"})";
  CHECK(run({"--config", typed, "complete", "--model", small_checkpoint(), "--out-dir", dir.string()}).code ==
        cli::kExitUsage);
}

TEST_CASE("data errors") {
  const fs::path dir = testing::scratch_path("cli_err");
  const std::string bad = testing::scratch_path("cli_bad.dpsr");
  std::ofstream(bad) << "not a checkpoint";
  CHECK(run({"generate", "--model", bad, "--out-dir", dir.string()}).code == cli::kExitData);
  const std::string empty = testing::scratch_path("cli_empty.ppd");
  write_ppd({"empty", 0, PoseBatch(kPoseDim, 0)}, empty);
  CHECK(run({"train", "--data", empty, "--out", testing::scratch_path("cli_e.dpsr")}).code == cli::kExitData);
}

TEST_CASE("benchmark commands") {
  const fs::path dir = testing::scratch_path("cli_ablate");
  const auto r = run({"ablate-schedule", "--model", small_checkpoint(), "--out-dir", dir.string(), "--task", "complete",
                      "--cases", "2", "--hypotheses", "2", "--iters", "5"});
  REQUIRE(r.code == 0);
  const std::string text = slurp(dir / "ablation.csv");
  CHECK(text.rfind("task,strategy,cases,metric,value\n", 0) == 0);
  CHECK(count(text, "\n") == 5);
  CHECK(run({"ablate-schedule", "--model", small_checkpoint(), "--out-dir", dir.string(), "--task", "complete",
             "--strategies", "truncated,cosine"})
            .code == cli::kExitUsage);

  const fs::path bdir = testing::scratch_path("cli_bench");
  REQUIRE(run({"bench-solvers", "--model", small_checkpoint(), "--out-dir", bdir.string(), "--cases", "1",
               "--hypotheses", "2", "--steps", "10", "--solvers", "dposer,score_sde_bp"})
              .code == 0);
  CHECK(count(slurp(bdir / "solvers.csv"), "\n") == 3);
  CHECK(run({"bench-solvers", "--model", small_checkpoint(), "--out-dir", bdir.string(), "--solvers", "ddrm"}).code ==
        cli::kExitUsage);
}

TEST_CASE("motion and fitting commands") {
  const fs::path dir = testing::scratch_path("cli_motion");
  REQUIRE(run({"denoise-motion", "--model", small_checkpoint(), "--out-dir", dir.string(), "--frames", "4", "--iters",
               "5", "--svg", "2"})
              .code == 0);
  CHECK(slurp(dir / "report.csv").rfind("pre_mpjpe_mm,post_mpjpe_mm\n", 0) == 0);
  CHECK(count(slurp(dir / "motion.svg"), "<line") == 2 * 21);

  const fs::path fdir = testing::scratch_path("cli_fit");
  REQUIRE(run({"fit2d", "--model", small_checkpoint(), "--out-dir", fdir.string(), "--iters", "5"}).code == 0);
  CHECK(slurp(fdir / "metrics.csv").rfind("reprojection_px,pa_mpjpe_mm\n", 0) == 0);
  const auto fits = nlohmann::json::parse(slurp(fdir / "fit.json"));
  CHECK(fits.size() == 1);
  CHECK(fits[0]["pose"].size() == kPoseDim);
}

}
