#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vblab/model.hpp"

namespace vblab::harness {

inline constexpr const char* kSchemaVersion = "1";

struct ExperimentConfig {
  std::string model = "B";
  Vector theta_star;
  int n = 100;
  std::vector<int> n_grid;
  std::vector<std::uint64_t> seeds{1};
  double alpha0 = 1.0;
  Vector beta0;  // empty means zeros(dim)
  double tol = 1e-9;
  int max_iter = 500;
  std::optional<Vector> init;  // nullopt = default initialization
  std::string out_dir = ".";
  int jobs = 1;
  bool timing = false;
  int mc_samples = 100000;
  double delta = 0.5;
  double eps_ball = 0.5;
  std::string data;  // dataset CSV for fit/diagnose

  // Resolved views (validated against the model).
  Vector resolved_beta0(int dim) const;
  Vector resolved_theta_star(int dim) const;
  std::vector<int> resolved_n_grid() const;

  void validate() const;
  nlohmann::json to_json() const;
  // Replaces fields present in j; unknown keys raise ConfigError.
  void merge_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// File formats

std::string format_double(double v);  // 17 significant digits

void write_dataset_csv(const std::filesystem::path& path,
                       const std::vector<double>& y);
std::vector<double> read_dataset_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path,
                     const std::string& content);
void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Subcommands. Each returns the JSON report it wrote (plus file paths).

struct CommandResult {
  nlohmann::json report;
  std::vector<std::filesystem::path> files;
};

CommandResult cmd_simulate(const ExperimentConfig& cfg);
CommandResult cmd_fit(const ExperimentConfig& cfg);
CommandResult cmd_diagnose(const ExperimentConfig& cfg);
CommandResult cmd_normality(const ExperimentConfig& cfg);
CommandResult cmd_sweep(const ExperimentConfig& cfg);

// Ordinary least squares slope of y on x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);
double median(std::vector<double> values);

}  // namespace vblab::harness
