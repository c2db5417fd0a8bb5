// vblab: simulate datasets, fit VB, and run fixed-point / normality
// diagnostics for the built-in exponential family models.
//
// Subcommands: simulate | fit | diagnose | normality | sweep.
// A JSON config may be supplied with --config; any flag given on the command
// line overrides the config file value.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "vblab/harness.hpp"

namespace {

using vblab::harness::ExperimentConfig;

struct CliOverrides {
  std::string config_path;
  std::string model;
  std::vector<double> theta_star;
  int n = -1;
  std::vector<int> n_grid;
  std::vector<std::uint64_t> seeds;
  double alpha0 = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> beta0;
  double tol = std::numeric_limits<double>::quiet_NaN();
  int max_iter = -1;
  std::string init;  // "default" or comma list handled by CLI11 as string
  std::string out;
  int jobs = -1;
  bool timing = false;
  int mc_samples = -1;
  double delta = std::numeric_limits<double>::quiet_NaN();
  double eps_ball = std::numeric_limits<double>::quiet_NaN();
  std::string data;
};

void add_common_options(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--model", o.model, "model name: A, B or C");
  cmd->add_option("--theta-star", o.theta_star, "true parameter vector")
      ->delimiter(',');
  cmd->add_option("--n", o.n, "sample size");
  cmd->add_option("--n-grid", o.n_grid, "sample sizes for grids/sweeps")
      ->delimiter(',');
  cmd->add_option("--seed,--seeds", o.seeds, "RNG seed(s)")->delimiter(',');
  cmd->add_option("--alpha0", o.alpha0, "prior pseudo-count");
  cmd->add_option("--beta0", o.beta0, "prior pseudo-statistic")
      ->delimiter(',');
  cmd->add_option("--tol", o.tol, "VB stopping threshold on the step norm");
  cmd->add_option("--max-iter", o.max_iter, "VB iteration cap");
  cmd->add_option("--init", o.init,
                  "starting point: comma list or 'default'");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "parallel sweep cells (env VBLAB_JOBS)");
  cmd->add_flag("--timing", o.timing, "record wall-clock timing in reports");
  cmd->add_option("--mc-samples", o.mc_samples, "Monte-Carlo sample count");
  cmd->add_option("--delta", o.delta, "concentration ball radius");
  cmd->add_option("--eps-ball", o.eps_ball, "smoothness ball radius");
  cmd->add_option("--data", o.data, "dataset CSV path");
}

ExperimentConfig resolve_config(const CLI::App* cmd, const CliOverrides& o) {
  ExperimentConfig cfg;
  if (const char* env_jobs = std::getenv("VBLAB_JOBS")) {
    try {
      cfg.jobs = std::max(1, std::stoi(env_jobs));
    } catch (const std::exception&) {
      throw vblab::ConfigError("environment variable VBLAB_JOBS is not an integer");
    }
  }
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in)
      throw vblab::IoError("cannot open config file " + o.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw vblab::ConfigError("config file " + o.config_path + ": " +
                               e.what());
    }
    cfg.merge_json(j);
  }
  const auto given = [&](const std::string& flag) {
    return cmd->count(flag) > 0;
  };
  if (given("--model")) cfg.model = o.model;
  if (given("--theta-star"))
    cfg.theta_star = Eigen::Map<const vblab::Vector>(
        o.theta_star.data(), static_cast<Eigen::Index>(o.theta_star.size()));
  if (given("--n")) cfg.n = o.n;
  if (given("--n-grid")) cfg.n_grid = o.n_grid;
  if (given("--seed")) cfg.seeds = o.seeds;
  if (given("--alpha0")) cfg.alpha0 = o.alpha0;
  if (given("--beta0"))
    cfg.beta0 = Eigen::Map<const vblab::Vector>(
        o.beta0.data(), static_cast<Eigen::Index>(o.beta0.size()));
  if (given("--tol")) cfg.tol = o.tol;
  if (given("--max-iter")) cfg.max_iter = o.max_iter;
  if (given("--init")) {
    if (o.init == "default") {
      cfg.init.reset();
    } else {
      std::vector<double> vals;
      std::stringstream ss(o.init);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          vals.push_back(std::stod(tok));
        } catch (const std::exception&) {
          throw vblab::ConfigError("--init: '" + tok + "' is not a number");
        }
      }
      if (vals.empty()) throw vblab::ConfigError("--init: empty value");
      cfg.init = Eigen::Map<const vblab::Vector>(
          vals.data(), static_cast<Eigen::Index>(vals.size()));
    }
  }
  if (given("--out")) cfg.out_dir = o.out;
  if (given("--jobs")) cfg.jobs = o.jobs;
  if (given("--timing")) cfg.timing = o.timing;
  if (given("--mc-samples")) cfg.mc_samples = o.mc_samples;
  if (given("--delta")) cfg.delta = o.delta;
  if (given("--eps-ball")) cfg.eps_ball = o.eps_ball;
  if (given("--data")) cfg.data = o.data;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational Bayes lab for exponential family models"};
  app.require_subcommand(1);

  CliOverrides o_sim, o_fit, o_diag, o_norm, o_sweep;
  CLI::App* c_sim = app.add_subcommand("simulate", "write a dataset CSV");
  CLI::App* c_fit = app.add_subcommand("fit", "run the VB fixed point");
  CLI::App* c_diag =
      app.add_subcommand("diagnose", "fixed-point and limit diagnostics");
  CLI::App* c_norm =
      app.add_subcommand("normality", "posterior normality checks");
  CLI::App* c_sweep = app.add_subcommand("sweep", "n x seed experiment grid");
  add_common_options(c_sim, o_sim);
  add_common_options(c_fit, o_fit);
  add_common_options(c_diag, o_diag);
  add_common_options(c_norm, o_norm);
  add_common_options(c_sweep, o_sweep);

  CLI11_PARSE(app, argc, argv);

  try {
    vblab::harness::CommandResult result;
    if (c_sim->parsed()) {
      result = vblab::harness::cmd_simulate(resolve_config(c_sim, o_sim));
    } else if (c_fit->parsed()) {
      result = vblab::harness::cmd_fit(resolve_config(c_fit, o_fit));
    } else if (c_diag->parsed()) {
      result = vblab::harness::cmd_diagnose(resolve_config(c_diag, o_diag));
    } else if (c_norm->parsed()) {
      result = vblab::harness::cmd_normality(resolve_config(c_norm, o_norm));
    } else {
      result = vblab::harness::cmd_sweep(resolve_config(c_sweep, o_sweep));
    }
    for (const auto& path : result.files)
      std::cout << "wrote " << path.string() << "\n";
    return 0;
  } catch (const vblab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vblab::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const vblab::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
