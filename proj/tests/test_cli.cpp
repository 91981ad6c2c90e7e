#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "cpk/error.hpp"
#include "cpk/io.hpp"

using namespace cpk;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cpk_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int cpk_run(std::vector<std::string> args) {
  args.insert(args.begin(), "cpk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json changepoint_config() {
  return {{"data", "cp/data.csv"},
          {"inputs", {"x"}},
          {"kernel", "sw(x,A)*se(x) + swneg(x,A)*se(x)"},
          {"optimizer", {{"restarts", 2}, {"max_iterations", 60}}},
          {"train_frac", 0.5},
          {"synth", {{"generator", "changepoint"}, {"n", 80}}}};
}

}  // namespace

TEST_CASE("fixed seed reproduces every artifact byte for byte") {
  TempDir tmp;
  const fs::path cfg = write_config(tmp.path, "cp.json", changepoint_config());
  const auto c = cfg.string();
  const auto d = [&](const std::string& s) { return (tmp.path / s).string(); };

  for (const std::string run : {"a", "b"}) {
    REQUIRE(cpk_run({"synth", "--config", c, "--seed", "3", "--out", d("cp")}) == 0);
    REQUIRE(cpk_run({"fit", "--config", c, "--seed", "3", "--out", d("fit_" + run)}) == 0);
    REQUIRE(cpk_run({"predict", "--model", d("fit_" + run + "/model.json"), "--data", d("fit_" + run + "/test.csv"),
                     "--out", d("fit_" + run)}) == 0);
    REQUIRE(cpk_run({"evaluate", "--predictions", d("fit_" + run + "/predictions.csv"), "--model",
                     d("fit_" + run + "/model.json"), "--switch-curves", "--out", d("fit_" + run)}) == 0);
    fs::rename(d("cp"), d("cp_" + run));
  }
  for (const char* f : {"data.csv", "truth.csv", "truth.json"}) {
    INFO(f);
    CHECK(slurp(tmp.path / "cp_a" / f) == slurp(tmp.path / "cp_b" / f));
  }
  for (const char* f : {"model.json", "train.csv", "test.csv", "predictions.csv", "score_report.json", "switch_A.csv"}) {
    INFO(f);
    CHECK(slurp(tmp.path / "fit_a" / f) == slurp(tmp.path / "fit_b" / f));
  }
  // Timing lives only under "metadata".
  json ra = json::parse(slurp(tmp.path / "fit_a/fit_report.json"));
  json rb = json::parse(slurp(tmp.path / "fit_b/fit_report.json"));
  ra.erase("metadata");
  rb.erase("metadata");
  CHECK(ra == rb);

  REQUIRE(cpk_run({"synth", "--config", c, "--seed", "4", "--out", d("cp_c")}) == 0);
  CHECK(slurp(tmp.path / "cp_a/data.csv") != slurp(tmp.path / "cp_c/data.csv"));
}

TEST_CASE("evaluate gives zero MSLL for the trivial predictor") {
  TempDir tmp;
  std::ofstream(tmp.path / "train.csv") << "x,y\n0,1\n1,2\n2,4\n3,-1\n";
  // Train mean 1.5, population variance 3.25.
  std::ofstream pred(tmp.path / "pred.csv");
  pred << "x,y,mean,std_latent,std_total\n";
  const double sd = std::sqrt(3.25);
  const double ys[] = {0.3, 2.0, -4.0, 7.5, 1.5};
  for (int i = 0; i < 5; ++i) pred << i << "," << ys[i] << ",1.5,0," << format_double(sd) << "\n";
  pred.close();
  REQUIRE(cpk_run({"evaluate", "--predictions", (tmp.path / "pred.csv").string(), "--train",
                   (tmp.path / "train.csv").string(), "--out", tmp.path.string()}) == 0);
  const json r = json::parse(slurp(tmp.path / "score_report.json"));
  CHECK(std::abs(r["msll"].get<double>()) <= 1e-12);
  CHECK(r["train_mean"].get<double>() == 1.5);
}

TEST_CASE("sample reproduces the configured lengthscale ratio") {
  TempDir tmp;
  const json cfg = {{"kernel", "sw(x,A)*se(x) + swneg(x,A)*se(x)"},
                    {"sample",
                     {{"column", "x"},
                      {"lo", 0.0},
                      {"hi", 10.0},
                      {"n", 401},
                      {"draws", 400},
                      {"params",
                       {{"switch.A.a", 2.0},
                        {"switch.A.x0", 4.0},
                        {"se0.variance", 1.0},
                        {"se0.lengthscale[x]", 2.0},
                        {"se1.variance", 1.0},
                        {"se1.lengthscale[x]", 0.5}}}}}};
  const fs::path c = write_config(tmp.path, "fig1.json", cfg);
  REQUIRE(cpk_run({"sample", "--config", c.string(), "--seed", "11", "--out", tmp.path.string()}) == 0);
  const Table t = read_csv(tmp.path / "samples.csv");
  REQUIRE(t.values.cols() == 401);
  const Eigen::VectorXd x = t.values.col(0);
  const double dx = x[1] - x[0];
  // sqrt(E f^2 / E f'^2) equals the lengthscale of an SE process.
  auto empirical = [&](double lo, double hi) {
    double f2 = 0.0, d2 = 0.0;
    for (Eigen::Index i = 1; i + 1 < x.size(); ++i) {
      if (x[i] < lo || x[i] > hi) continue;
      for (Eigen::Index k = 1; k < t.values.cols(); ++k) {
        const double d = (t.values(i + 1, k) - t.values(i - 1, k)) / (2 * dx);
        f2 += t.values(i, k) * t.values(i, k);
        d2 += d * d;
      }
    }
    return std::sqrt(f2 / d2);
  };
  const double left = empirical(0.0, 2.0), right = empirical(6.5, 10.0);
  MESSAGE("left " << left << ", right " << right);
  CHECK(right / left == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("gradcheck passes on a change-point model") {
  TempDir tmp;
  json cfg = changepoint_config();
  cfg["data"] = "cp/data.csv";
  const fs::path c = write_config(tmp.path, "cp.json", cfg);
  REQUIRE(cpk_run({"synth", "--config", c.string(), "--out", (tmp.path / "cp").string()}) == 0);
  CHECK(cpk_run({"gradcheck", "--config", c.string(), "--out", tmp.path.string()}) == 0);
  const json r = json::parse(slurp(tmp.path / "gradcheck.json"));
  CHECK(r["max_relative_error"].get<double>() <= 1e-3);
  CHECK(r["entries"].size() == 7);

  cfg["noise"] = {{"model", "heteroscedastic"}};
  cfg["synth"]["n"] = 20;
  const fs::path h = write_config(tmp.path, "cph.json", cfg);
  REQUIRE(cpk_run({"synth", "--config", h.string(), "--out", (tmp.path / "cp").string()}) == 0);
  CHECK(cpk_run({"gradcheck", "--config", h.string(), "--out", tmp.path.string()}) == 0);
  // A step far too large for the curvature fails the check.
  CHECK(cpk_run({"gradcheck", "--config", c.string(), "--step", "0.5", "--out", tmp.path.string()}) ==
        cli::kExitNumerical);
}

TEST_CASE("exit codes") {
  TempDir tmp;
  const auto out = tmp.path.string();
  CHECK(cpk_run({}) == cli::kExitConfig);
  CHECK(cpk_run({"frobnicate"}) == cli::kExitConfig);
  CHECK(cpk_run({"fit", "--config", (tmp.path / "missing.json").string()}) == cli::kExitConfig);

  std::ofstream(tmp.path / "nan.csv") << "x,y\n0,1\n1,nan\n";
  json cfg = {{"data", "nan.csv"}, {"kernel", "se(x)"}};
  const fs::path c = write_config(tmp.path, "nan.json", cfg);
  CHECK(cpk_run({"fit", "--config", c.string(), "--out", out}) == cli::kExitData);

  std::ofstream(tmp.path / "ok.csv") << "x,y\n0,1\n1,2\n2,0\n";
  cfg["data"] = "ok.csv";
  cfg["kernel"] = "se(x";
  const fs::path bad = write_config(tmp.path, "bad.json", cfg);
  CHECK(cpk_run({"fit", "--config", bad.string(), "--out", out}) == cli::kExitConfig);
  cfg["kernel"] = "se(z)";
  const fs::path unknown = write_config(tmp.path, "unknown.json", cfg);
  CHECK(cpk_run({"fit", "--config", unknown.string(), "--out", out}) == cli::kExitConfig);
  cfg["kernel"] = "se(x)";
  cfg["params"] = {{"nope", 1.0}};
  const fs::path badp = write_config(tmp.path, "badp.json", cfg);
  CHECK(cpk_run({"fit", "--config", badp.string(), "--out", out}) == cli::kExitConfig);


  CHECK(cli::exit_code(ConfigError("x")) == cli::kExitConfig);
  CHECK(cli::exit_code(ParseError("x", 1, 1)) == cli::kExitConfig);
  CHECK(cli::exit_code(InvalidArgument("x")) == cli::kExitConfig);
  CHECK(cli::exit_code(DataError("x")) == cli::kExitData);
  CHECK(cli::exit_code(NumericalError("x")) == cli::kExitNumerical);
  CHECK(cli::exit_code(DomainError("x")) == cli::kExitNumerical);
  CHECK(cli::exit_code(OptimizationError("x")) == cli::kExitOptimization);
}
