#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "vblab/harness.hpp"

using namespace vblab;
using namespace vblab::harness;
namespace fs = std::filesystem;

namespace {

const fs::path kSchemaDir = fs::path(VBLAB_SOURCE_DIR) / "schemas";

void check_schema(const char* schema_file, const nlohmann::json& value) {
  const auto schema = oracles::load_json(kSchemaDir / schema_file);
  const std::string err = oracles::schema_violations(schema, value);
  INFO(err);
  CHECK(err.empty());
}

}  // namespace

TEST_CASE("format_double round-trips exactly") {
  for (double v : {1.0 / 3.0, 1e-300, -2.5e17, 0.1, 4.0}) {
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("dataset CSV round trip and parse errors") {
  const fs::path dir = oracles::scratch_dir("dataset_roundtrip");
  const std::vector<double> y{1.5, -2.25, 0.0, 1e-7};
  write_dataset_csv(dir / "d.csv", y);
  CHECK(read_dataset_csv(dir / "d.csv") == y);

  std::ofstream bad(dir / "bad.csv");
  bad << "index,y\n0,not_a_number\n";
  bad.close();
  CHECK_THROWS_AS(read_dataset_csv(dir / "bad.csv"), IoError);

  std::ofstream bad_header(dir / "bad_header.csv");
  bad_header << "idx,value\n0,1\n";
  bad_header.close();
  CHECK_THROWS_AS(read_dataset_csv(dir / "bad_header.csv"), IoError);

  CHECK_THROWS_AS(read_dataset_csv(dir / "missing.csv"), IoError);
}

TEST_CASE("config JSON merge and validation") {
  ExperimentConfig cfg;
  cfg.merge_json(nlohmann::json::parse(R"({
    "model": "C", "theta_star": [0.3], "n": 50, "seeds": [1, 2],
    "alpha0": 2.0, "beta0": [1.0], "tol": 1e-8, "init": "default"
  })"));
  CHECK(cfg.model == "C");
  CHECK(cfg.n == 50);
  CHECK(cfg.seeds.size() == 2);
  CHECK_FALSE(cfg.init.has_value());
  CHECK_NOTHROW(cfg.validate());

  CHECK_THROWS_AS(cfg.merge_json(nlohmann::json::parse(R"({"typo_field": 1})")),
                  ConfigError);

  ExperimentConfig bad;
  bad.model = "Z";
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ExperimentConfig bad_seeds;
  bad_seeds.seeds.clear();
  CHECK_THROWS_AS(bad_seeds.validate(), ConfigError);
}

TEST_CASE("cmd_simulate writes the dataset and sidecar") {
  const fs::path dir = oracles::scratch_dir("cmd_simulate");
  ExperimentConfig cfg;
  cfg.model = "B";
  cfg.theta_star = Vector::Constant(1, 1.0);
  cfg.n = 100;
  cfg.seeds = {7};
  cfg.out_dir = dir.string();
  const CommandResult res = cmd_simulate(cfg);
  check_schema("dataset_meta.schema.json", res.report);

  const auto y = read_dataset_csv(dir / "dataset.csv");
  CHECK(y.size() == 100);

  // n = 0 yields a header-only CSV
  cfg.n = 0;
  cfg.out_dir = (dir / "empty").string();
  cmd_simulate(cfg);
  CHECK(oracles::slurp(dir / "empty" / "dataset.csv") == "index,y\n");
  CHECK(read_dataset_csv(dir / "empty" / "dataset.csv").empty());
}

TEST_CASE("cmd_fit on the Model B fixture") {
  const fs::path dir = oracles::scratch_dir("cmd_fit");
  write_dataset_csv(dir / "fixture.csv", {1.0, 2.0, 2.0, 3.0});

  ExperimentConfig cfg;
  cfg.model = "B";
  cfg.alpha0 = 1.0;
  cfg.tol = 1e-10;
  cfg.data = (dir / "fixture.csv").string();
  cfg.out_dir = dir.string();
  const CommandResult res = cmd_fit(cfg);
  check_schema("run_report.schema.json", res.report);

  CHECK(res.report["converged"].get<bool>());
  CHECK(res.report["fixed_point"][0].get<double>() ==
        doctest::Approx(4.0 / 3.0).epsilon(1e-6));
  CHECK_FALSE(res.report.contains("timing_ms"));

  // free energy column of the trace is non-decreasing
  std::ifstream trace(dir / "trace.csv");
  std::string header;
  std::getline(trace, header);
  CHECK(header == "iter,theta_1,free_energy,step_norm");
  double prev = -1e300;
  std::string line;
  while (std::getline(trace, line)) {
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    const auto third = line.find(',', second + 1);
    const double fe = std::stod(line.substr(second + 1, third - second - 1));
    CHECK(fe >= prev - 1e-8 * (1.0 + std::abs(fe)));
    prev = fe;
  }
}

TEST_CASE("cmd_fit reports one-step convergence for Model C") {
  const fs::path dir = oracles::scratch_dir("cmd_fit_c");
  write_dataset_csv(dir / "c.csv", {2.0, 1.0, 0.0, 3.0});
  ExperimentConfig cfg;
  cfg.model = "C";
  cfg.alpha0 = 1.0;
  cfg.beta0 = Vector::Constant(1, 1.0);
  cfg.data = (dir / "c.csv").string();
  cfg.out_dir = dir.string();
  const CommandResult res = cmd_fit(cfg);
  CHECK(res.report["converged"].get<bool>());
  CHECK(res.report["iterations"].get<int>() == 1);
  CHECK(res.report["fixed_point"][0].get<double>() ==
        doctest::Approx(oracles::digamma(7.0) - std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("cmd_normality emits monotone TV for Model C") {
  const fs::path dir = oracles::scratch_dir("cmd_normality");
  ExperimentConfig cfg;
  cfg.model = "C";
  cfg.theta_star = Vector::Constant(1, 0.3);
  cfg.n_grid = {10, 100, 1000};
  cfg.seeds = {5};
  cfg.beta0 = Vector::Constant(1, 1.0);
  cfg.out_dir = dir.string();
  const CommandResult res = cmd_normality(cfg);
  check_schema("normality_report.schema.json", res.report);

  const auto& cells = res.report["cells"];
  REQUIRE(cells.size() == 3);
  CHECK(cells[0]["tv"].get<double>() > cells[1]["tv"].get<double>());
  CHECK(cells[1]["tv"].get<double>() > cells[2]["tv"].get<double>());
  for (const auto& cell : cells)
    CHECK(cell["c1_top_eig"].get<double>() > 0.0);
  CHECK(fs::exists(dir / "density_n1000.csv"));

  // density CSV has the documented header
  std::ifstream density(dir / "density_n1000.csv");
  std::string header;
  std::getline(density, header);
  CHECK(header == "theta,q_n,normal_limit");
}

TEST_CASE("cmd_sweep aggregates slopes and contraction") {
  const fs::path dir = oracles::scratch_dir("cmd_sweep");
  ExperimentConfig cfg;
  cfg.model = "B";
  cfg.theta_star = Vector::Constant(1, 1.0);
  cfg.n_grid = {100, 1000, 10000};
  cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  cfg.out_dir = dir.string();
  cfg.jobs = 2;
  const CommandResult res = cmd_sweep(cfg);
  check_schema("sweep_report.schema.json", res.report);

  REQUIRE(res.report["cells"].size() == 30);
  const double slope =
      res.report["aggregate"]["consistency_slope"].get<double>();
  CHECK(slope > -0.75);
  CHECK(slope < -0.25);

  // contraction approaches 1/2 at the larger n
  for (const auto& row : res.report["aggregate"]["by_n"])
    if (row["n"].get<int>() == 10000)
      CHECK(row["mean_contraction"].get<double>() ==
            doctest::Approx(0.5).epsilon(0.01));

  // duplicate seeds give identical cells
  ExperimentConfig dup = cfg;
  dup.n_grid = {100};
  dup.seeds = {3, 3};
  dup.out_dir = (dir / "dup").string();
  const CommandResult res_dup = cmd_sweep(dup);
  const auto& cells = res_dup.report["cells"];
  REQUIRE(cells.size() == 2);
  CHECK(cells[0]["error_norm"] == cells[1]["error_norm"]);
  CHECK(cells[0]["iterations"] == cells[1]["iterations"]);
}

TEST_CASE("cmd_diagnose produces the full diagnostic report") {
  const fs::path dir = oracles::scratch_dir("cmd_diagnose");
  ExperimentConfig sim;
  sim.model = "B";
  sim.theta_star = Vector::Constant(1, 1.0);
  sim.n = 1000;
  sim.seeds = {9};
  sim.out_dir = dir.string();
  cmd_simulate(sim);

  ExperimentConfig cfg = sim;
  cfg.data = (dir / "dataset.csv").string();
  cfg.mc_samples = 20000;
  const CommandResult res = cmd_diagnose(cfg);
  check_schema("diagnose_report.schema.json", res.report);

  CHECK(res.report["theta_ref_source"] == "config");
  CHECK(res.report["spectral_norm"].get<double>() ==
        doctest::Approx(500.0 / 1001.0).epsilon(1e-6));
  CHECK(res.report["psd"]["pass"].get<bool>());
  CHECK(res.report["estep_limits"]["growth_rate"]["pass"].get<bool>());
  CHECK(res.report["laplace_assumptions"]["det_positive"] == "pass");
  CHECK(res.report["laplace_assumptions"]["shell_negative"] == "pass");
}

TEST_CASE("cli round trip is byte identical across consecutive runs") {
  const fs::path dir = oracles::scratch_dir("cli_roundtrip");
  const fs::path out = dir / "out";
  const std::string base =
      "--model B --theta-star 1.0 --n 200 --seed 7 --alpha0 1.0";
  const std::string sim_cmd = "simulate " + base + " --out " + out.string();
  const std::string fit_cmd = "fit " + base + " --data " +
                              (out / "dataset.csv").string() + " --out " +
                              out.string();

  // first run, snapshot every artifact, then repeat with identical config
  REQUIRE(oracles::run_cli(sim_cmd) == 0);
  REQUIRE(oracles::run_cli(fit_cmd) == 0);
  const std::string csv1 = oracles::slurp(out / "dataset.csv");
  const std::string meta1 = oracles::slurp(out / "dataset.meta.json");
  const std::string report1 = oracles::slurp(out / "run_report.json");
  const std::string trace1 = oracles::slurp(out / "trace.csv");

  REQUIRE(oracles::run_cli(sim_cmd) == 0);
  REQUIRE(oracles::run_cli(fit_cmd) == 0);
  CHECK(oracles::slurp(out / "dataset.csv") == csv1);
  CHECK(oracles::slurp(out / "dataset.meta.json") == meta1);
  CHECK(oracles::slurp(out / "run_report.json") == report1);
  CHECK(oracles::slurp(out / "trace.csv") == trace1);
}

TEST_CASE("non-convergence is data with a zero exit code") {
  const fs::path dir = oracles::scratch_dir("cli_nonconvergence");
  write_dataset_csv(dir / "d.csv", {1.0, 2.0, 2.0, 3.0});
  CHECK(oracles::run_cli("fit --model B --data " + (dir / "d.csv").string() +
                         " --init 40.0 --max-iter 2 --tol 1e-14 --out " +
                         dir.string()) == 0);
  const auto report = oracles::load_json(dir / "run_report.json");
  CHECK_FALSE(report["converged"].get<bool>());
  CHECK(report["residual_norm"].get<double>() > 0.0);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = oracles::scratch_dir("cli_exit_codes");
  // config error: unknown model
  CHECK(oracles::run_cli("simulate --model Z --theta-star 1 --n 5 --seed 1 "
                         "--out " +
                         dir.string()) == 2);
  // io error: missing dataset
  CHECK(oracles::run_cli("fit --model B --data " +
                         (dir / "nope.csv").string() + " --out " +
                         dir.string()) == 3);
  // config error: dimension mismatch
  CHECK(oracles::run_cli("simulate --model A --theta-star 1.0 --n 5 --seed 1 "
                         "--out " +
                         dir.string()) == 2);
  // success
  CHECK(oracles::run_cli("simulate --model C --theta-star 0.0 --n 5 --seed 1 "
                         "--out " +
                         dir.string()) == 0);
}

TEST_CASE("cli config file with flag overrides") {
  const fs::path dir = oracles::scratch_dir("cli_config");
  nlohmann::json config{{"model", "B"},
                        {"theta_star", {1.0}},
                        {"n", 50},
                        {"seed", 3},
                        {"out", (dir / "from_config").string()}};
  write_json_file(dir / "config.json", config);

  REQUIRE(oracles::run_cli("simulate --config " +
                           (dir / "config.json").string()) == 0);
  CHECK(read_dataset_csv(dir / "from_config" / "dataset.csv").size() == 50);

  // --n on the command line wins over the config file
  REQUIRE(oracles::run_cli("simulate --config " +
                           (dir / "config.json").string() + " --n 20 --out " +
                           (dir / "override").string()) == 0);
  CHECK(read_dataset_csv(dir / "override" / "dataset.csv").size() == 20);
}

TEST_CASE("cmd_normality Gaussian columns: tiny TV and closed-form C1") {
  const fs::path dir = oracles::scratch_dir("cmd_normality_b");
  ExperimentConfig cfg;
  cfg.model = "B";
  cfg.theta_star = Vector::Constant(1, 1.0);
  cfg.n_grid = {50};
  cfg.seeds = {2};
  cfg.out_dir = dir.string();
  const CommandResult res = cmd_normality(cfg);
  const auto& cell = res.report["cells"][0];
  CHECK(cell["tv"].get<double>() <= 1e-6);
  CHECK(cell["c1_top_eig"].get<double>() ==
        doctest::Approx(1.0 / 51.0).epsilon(1e-10));
}

TEST_CASE("sweep records failing cells and still aggregates") {
  const fs::path dir = oracles::scratch_dir("cmd_sweep_partial");
  ExperimentConfig cfg;
  cfg.model = "C";
  cfg.theta_star = Vector::Constant(1, 0.3);
  cfg.n_grid = {20};
  cfg.seeds = {1, 2};
  cfg.beta0 = Vector::Zero(1);  // not integrable for Model C
  cfg.out_dir = dir.string();
  const CommandResult res = cmd_sweep(cfg);
  REQUIRE(res.report["cells"].size() == 2);
  for (const auto& cell : res.report["cells"]) {
    CHECK_FALSE(cell["ok"].get<bool>());
    CHECK(cell.contains("error"));
  }
  CHECK(res.report.contains("aggregate"));
  CHECK(fs::exists(dir / "sweep_report.json"));
}

TEST_CASE("VBLAB_JOBS seeds the default job count") {
  const fs::path dir = oracles::scratch_dir("cli_jobs_env");
  const std::string cmd =
      "VBLAB_JOBS=3 " + std::string(VBLAB_CLI_PATH) +
      " sweep --model B --theta-star 1.0 --n-grid 10,20 --seeds 1,2 --out " +
      dir.string() + " > /dev/null 2> /dev/null";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  const auto report = oracles::load_json(dir / "sweep_report.json");
  CHECK(report["config"]["jobs"].get<int>() == 3);
}

TEST_CASE("ols_slope and median helpers") {
  CHECK(ols_slope({0.0, 1.0, 2.0}, {1.0, 3.0, 5.0}) == doctest::Approx(2.0));
  CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
}
