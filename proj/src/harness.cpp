#include "vblab/harness.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "vblab/asymptotics.hpp"
#include "vblab/laplace.hpp"
#include "vblab/models.hpp"
#include "vblab/vb.hpp"

namespace vblab::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Vector json_to_vec(const json& j, const std::string& field) {
  if (!j.is_array())
    throw ConfigError("config field '" + field + "' must be an array");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ConfigError("config field '" + field + "' must hold numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json hyperparams_to_json(const Hyperparams& hp) {
  return json{{"alpha", hp.alpha}, {"beta", vec_to_json(hp.beta)}};
}

}  // namespace

Vector ExperimentConfig::resolved_beta0(int dim) const {
  if (beta0.size() == 0) return Vector::Zero(dim);
  if (beta0.size() != dim)
    throw ConfigError("beta0 has dimension " + std::to_string(beta0.size()) +
                      " but model " + model + " needs " + std::to_string(dim));
  return beta0;
}

Vector ExperimentConfig::resolved_theta_star(int dim) const {
  if (theta_star.size() != dim)
    throw ConfigError("theta_star has dimension " +
                      std::to_string(theta_star.size()) + " but model " +
                      model + " needs " + std::to_string(dim));
  return theta_star;
}

std::vector<int> ExperimentConfig::resolved_n_grid() const {
  if (!n_grid.empty()) return n_grid;
  return {n};
}

void ExperimentConfig::validate() const {
  if (model != "A" && model != "B" && model != "C")
    throw ConfigError("field 'model' must be one of A, B, C; got '" + model +
                      "'");
  if (n < 0) throw ConfigError("field 'n' must be non-negative");
  for (int v : n_grid)
    if (v < 0) throw ConfigError("field 'n_grid' entries must be non-negative");
  if (seeds.empty()) throw ConfigError("field 'seeds' must be non-empty");
  if (!(tol > 0.0)) throw ConfigError("field 'tol' must be positive");
  if (max_iter < 1) throw ConfigError("field 'max_iter' must be >= 1");
  if (jobs < 1) throw ConfigError("field 'jobs' must be >= 1");
  if (mc_samples < 1) throw ConfigError("field 'mc_samples' must be >= 1");
  if (!(alpha0 > 0.0)) throw ConfigError("field 'alpha0' must be positive");
}

json ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = model;
  j["theta_star"] = vec_to_json(theta_star);
  j["n"] = n;
  j["n_grid"] = n_grid;
  j["seeds"] = seeds;
  j["alpha0"] = alpha0;
  j["beta0"] = vec_to_json(beta0);
  j["tol"] = tol;
  j["max_iter"] = max_iter;
  if (init)
    j["init"] = vec_to_json(*init);
  else
    j["init"] = "default";
  j["out"] = out_dir;
  j["jobs"] = jobs;
  j["timing"] = timing;
  j["mc_samples"] = mc_samples;
  j["delta"] = delta;
  j["eps_ball"] = eps_ball;
  j["data"] = data;
  return j;
}

void ExperimentConfig::merge_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "schema_version") {
        if (value.get<std::string>() != kSchemaVersion)
          throw ConfigError("unsupported config schema_version");
      } else if (key == "model") {
        model = value.get<std::string>();
      } else if (key == "theta_star") {
        theta_star = json_to_vec(value, key);
      } else if (key == "n") {
        n = value.get<int>();
      } else if (key == "n_grid") {
        n_grid = value.get<std::vector<int>>();
      } else if (key == "seeds") {
        seeds = value.get<std::vector<std::uint64_t>>();
      } else if (key == "seed") {
        seeds = {value.get<std::uint64_t>()};
      } else if (key == "alpha0") {
        alpha0 = value.get<double>();
      } else if (key == "beta0") {
        if (value.is_number())
          beta0 = Vector::Constant(1, value.get<double>());
        else
          beta0 = json_to_vec(value, key);
      } else if (key == "tol") {
        tol = value.get<double>();
      } else if (key == "max_iter") {
        max_iter = value.get<int>();
      } else if (key == "init") {
        if (value.is_string() && value.get<std::string>() == "default")
          init.reset();
        else
          init = json_to_vec(value, key);
      } else if (key == "out") {
        out_dir = value.get<std::string>();
      } else if (key == "jobs") {
        jobs = value.get<int>();
      } else if (key == "timing") {
        timing = value.get<bool>();
      } else if (key == "mc_samples") {
        mc_samples = value.get<int>();
      } else if (key == "delta") {
        delta = value.get<double>();
      } else if (key == "eps_ball") {
        eps_ball = value.get<double>();
      } else if (key == "data") {
        data = value.get<std::string>();
      } else {
        throw ConfigError("unknown config field '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("config field '" + key + "': " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Formats

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("write to " + path.string() + " failed");
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_dataset_csv(const fs::path& path, const std::vector<double>& y) {
  std::string content = "index,y\n";
  for (size_t i = 0; i < y.size(); ++i)
    content += std::to_string(i) + "," + format_double(y[i]) + "\n";
  write_text_file(path, content);
}

std::vector<double> read_dataset_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset " + path.string());
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
    line.pop_back();
  if (line != "index,y")
    throw IoError("dataset " + path.string() +
                  ": expected header 'index,y', got '" + line + "'");
  std::vector<double> y;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("dataset " + path.string() + ": line " +
                    std::to_string(line_no) + " has no comma");
    const std::string value = line.substr(comma + 1);
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      throw IoError("dataset " + path.string() + ": line " +
                    std::to_string(line_no) + " has a non-numeric y");
    }
    if (used != value.size() || !std::isfinite(v))
      throw IoError("dataset " + path.string() + ": line " +
                    std::to_string(line_no) + " has a malformed y");
    y.push_back(v);
  }
  return y;
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("ols_slope: need matched series, length >= 2");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double median(std::vector<double> values) {
  if (values.empty())
    throw std::invalid_argument("median of an empty sequence");
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid]
                                : 0.5 * (values[mid - 1] + values[mid]);
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct FitContext {
  std::unique_ptr<Model> model;
  Hyperparams prior;
  std::vector<double> y;
  VBConfig vb_cfg;
};

FitContext make_fit_context(const ExperimentConfig& cfg,
                            const std::vector<double>& y) {
  FitContext ctx;
  ctx.model = make_model(cfg.model);
  ctx.prior.alpha = cfg.alpha0;
  ctx.prior.beta = cfg.resolved_beta0(ctx.model->dim());
  ctx.y = y;
  ctx.vb_cfg.prior = ctx.prior;
  ctx.vb_cfg.tol = cfg.tol;
  ctx.vb_cfg.max_iter = cfg.max_iter;
  if (cfg.init) {
    if (cfg.init->size() != ctx.model->dim())
      throw ConfigError("init has dimension " +
                        std::to_string(cfg.init->size()) + " but model " +
                        cfg.model + " needs " +
                        std::to_string(ctx.model->dim()));
    ctx.vb_cfg.init = *cfg.init;
  } else {
    ctx.vb_cfg.init = default_init(*ctx.model, ctx.prior, y);
  }
  return ctx;
}

std::string trace_csv(const VBTrace& trace) {
  const int m = static_cast<int>(trace.iterates.front().size());
  std::string out = "iter";
  for (int j = 0; j < m; ++j) out += ",theta_" + std::to_string(j + 1);
  out += ",free_energy,step_norm\n";
  for (size_t k = 0; k < trace.iterates.size(); ++k) {
    out += std::to_string(k);
    for (int j = 0; j < m; ++j)
      out += "," + format_double(trace.iterates[k][j]);
    out += "," + format_double(trace.free_energy[k]) + ",";
    if (k < trace.step_norms.size()) out += format_double(trace.step_norms[k]);
    out += "\n";
  }
  return out;
}

json fit_report_body(const FitContext& ctx, const VBTrace& trace) {
  const Vector residual =
      posterior_mean(*ctx.model, trace.final_hyperparams) -
      trace.final_iterate();
  const JacobianResult jac =
      jacobian_phi(*ctx.model, trace.final_iterate(), ctx.y, ctx.prior);
  json j;
  j["fixed_point"] = vec_to_json(trace.final_iterate());
  j["iterations"] = trace.iterations();
  j["converged"] = trace.converged;
  j["residual_norm"] = residual.norm();
  j["final_free_energy"] = trace.free_energy.back();
  j["final_hyperparams"] = hyperparams_to_json(trace.final_hyperparams);
  j["mean_method"] = to_string(trace.mean_method);
  j["jacobian"] = mat_to_json(jac.jacobian);
  j["spectral_norm"] = jac.spectral_norm;
  return j;
}

json assumption_report_json(const AssumptionReport& rep) {
  json j;
  j["max_abs_deriv"] = std::vector<double>(rep.max_abs_deriv.begin(),
                                           rep.max_abs_deriv.end());
  j["det_hess"] = rep.det_hess;
  j["shell_max"] = std::isfinite(rep.shell_max) ? json(rep.shell_max) : json();
  j["shell_points"] = rep.shell_points;
  j["derivatives_bounded"] = to_string(rep.derivatives_bounded);
  j["det_positive"] = to_string(rep.det_positive);
  j["shell_negative"] = to_string(rep.shell_negative);
  return j;
}

json limit_check_json(const LimitCheck& check) {
  json j;
  j["label"] = check.label;
  j["observed"] = mat_to_json(check.observed);
  j["expected"] = mat_to_json(check.expected);
  j["max_abs_dev"] = check.max_abs_dev;
  j["tolerance"] = check.tolerance;
  j["pass"] = check.pass;
  return j;
}

}  // namespace

CommandResult cmd_simulate(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto model = make_model(cfg.model);
  const Vector theta_star = cfg.resolved_theta_star(model->dim());
  validate_params(*model, theta_star);
  const std::uint64_t seed = cfg.seeds.front();
  const std::vector<double> y = model->simulate(theta_star, cfg.n, seed);

  fs::create_directories(cfg.out_dir);
  const fs::path csv_path = fs::path(cfg.out_dir) / "dataset.csv";
  const fs::path meta_path = fs::path(cfg.out_dir) / "dataset.meta.json";
  write_dataset_csv(csv_path, y);

  json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["kind"] = "dataset";
  meta["model"] = cfg.model;
  meta["theta_star"] = vec_to_json(theta_star);
  meta["n"] = cfg.n;
  meta["seed"] = seed;
  write_json_file(meta_path, meta);

  CommandResult res;
  res.report = meta;
  res.files = {csv_path, meta_path};
  return res;
}

CommandResult cmd_fit(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.data.empty()) throw ConfigError("fit requires field 'data'");
  FitContext ctx = make_fit_context(cfg, read_dataset_csv(cfg.data));

  const auto start = std::chrono::steady_clock::now();
  const VBTrace trace = run_vb(*ctx.model, ctx.y, ctx.vb_cfg);
  const auto stop = std::chrono::steady_clock::now();

  json report = fit_report_body(ctx, trace);
  report["schema_version"] = kSchemaVersion;
  report["kind"] = "fit";
  report["config"] = cfg.to_json();
  if (cfg.timing)
    report["timing_ms"] =
        std::chrono::duration<double, std::milli>(stop - start).count();

  fs::create_directories(cfg.out_dir);
  const fs::path report_path = fs::path(cfg.out_dir) / "run_report.json";
  const fs::path trace_path = fs::path(cfg.out_dir) / "trace.csv";
  write_json_file(report_path, report);
  write_text_file(trace_path, trace_csv(trace));

  CommandResult res;
  res.report = report;
  res.files = {report_path, trace_path};
  return res;
}

CommandResult cmd_diagnose(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.data.empty()) throw ConfigError("diagnose requires field 'data'");
  FitContext ctx = make_fit_context(cfg, read_dataset_csv(cfg.data));
  const VBTrace trace = run_vb(*ctx.model, ctx.y, ctx.vb_cfg);

  Vector theta_ref;
  std::string theta_ref_source;
  if (cfg.theta_star.size() == ctx.model->dim()) {
    theta_ref = cfg.theta_star;
    theta_ref_source = "config";
  } else {
    theta_ref = trace.final_iterate();
    theta_ref_source = "fitted";
  }

  json report = fit_report_body(ctx, trace);
  report["schema_version"] = kSchemaVersion;
  report["kind"] = "diagnose";
  report["config"] = cfg.to_json();
  report["theta_ref"] = vec_to_json(theta_ref);
  report["theta_ref_source"] = theta_ref_source;

  const std::uint64_t seed = cfg.seeds.front();
  const PsdReport psd =
      verify_psd_inequality(*ctx.model, theta_ref, cfg.mc_samples, seed);
  report["psd"] = {{"difference", mat_to_json(psd.difference)},
                   {"min_eigenvalue", psd.min_eigenvalue},
                   {"mc_standard_error", psd.mc_standard_error},
                   {"pass", psd.pass}};

  const int limits_n = std::max<int>(1000, static_cast<int>(ctx.y.size()));
  const EstepLimitReport limits = verify_estep_limits(
      *ctx.model, theta_ref, limits_n, seed + 1, cfg.mc_samples);
  report["estep_limits"] = {
      {"n", limits.n},
      {"growth_rate", limit_check_json(limits.growth_rate)},
      {"jacobian_limit", limit_check_json(limits.jacobian_limit)},
      {"complete_cov", limit_check_json(limits.complete_cov)}};

  std::vector<double> ratio_grid;
  for (int nv : cfg.resolved_n_grid())
    if (nv > 0) ratio_grid.push_back(nv);
  if (ratio_grid.empty() && !ctx.y.empty())
    ratio_grid.push_back(static_cast<double>(ctx.y.size()));
  const LimitRatioReport ratios = limit_ratio_experiment(
      *ctx.model, theta_ref, ratio_grid, cfg.seeds, ctx.prior);
  json ratio_cells = json::array();
  for (const auto& cell : ratios.cells)
    ratio_cells.push_back({{"n", cell.n},
                           {"seed", cell.seed},
                           {"n_cov", mat_to_json(cell.n_cov)},
                           {"ratio_spectrum", vec_to_json(cell.ratio_spectrum)},
                           {"ratio_to_inv_hess", cell.ratio_to_inv_hess},
                           {"ratio_to_half_inv_hess",
                            cell.ratio_to_half_inv_hess}});
  report["cov_ratio"] = {{"cells", ratio_cells}};

  const double delta = cfg.delta;
  const double eps = cfg.eps_ball > delta ? cfg.eps_ball : 2.0 * delta;
  const TiltedObjective tilt =
      TiltedObjective::from_hyperparams(*ctx.model, trace.final_hyperparams);
  report["laplace_assumptions"] =
      assumption_report_json(check_assumptions(tilt, eps, delta));

  fs::create_directories(cfg.out_dir);
  const fs::path report_path = fs::path(cfg.out_dir) / "diagnose_report.json";
  write_json_file(report_path, report);

  CommandResult res;
  res.report = report;
  res.files = {report_path};
  return res;
}

CommandResult cmd_normality(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto model = make_model(cfg.model);
  if (model->dim() > 2)
    throw ConfigError("normality requires a model with m <= 2");
  const Vector theta_star = cfg.resolved_theta_star(model->dim());
  validate_params(*model, theta_star);

  const std::vector<int> grid = cfg.resolved_n_grid();
  const int n_max = *std::max_element(grid.begin(), grid.end());
  const std::uint64_t seed = cfg.seeds.front();
  const std::vector<double> y_full = model->simulate(theta_star, n_max, seed);

  fs::create_directories(cfg.out_dir);
  CommandResult res;

  json cells = json::array();
  for (int nv : grid) {
    ExperimentConfig sub = cfg;
    const std::vector<double> y(y_full.begin(), y_full.begin() + nv);
    FitContext ctx = make_fit_context(sub, y);
    const VBTrace trace = run_vb(*ctx.model, y, ctx.vb_cfg);
    const NormalLimit limit =
        normal_limit(*ctx.model, trace.final_hyperparams);
    const NormalityReport rep =
        check_c1_c2_c3(*ctx.model, trace.final_hyperparams, limit, cfg.delta,
                       cfg.eps_ball);
    cells.push_back({{"n", nv},
                     {"tv", rep.tv_distance},
                     {"kl", rep.kl_divergence},
                     {"c1_top_eig", rep.c1_top_eig},
                     {"c2_ratio_bounds",
                      {rep.c2_ratio_bounds.first, rep.c2_ratio_bounds.second}},
                     {"c3_mass", rep.c3_mass},
                     {"grid_spec", rep.grid_spec}});

    // Plot-ready densities; thinner grid than the TV quadrature.
    GridPlan plot_plan;
    plot_plan.points_per_axis = 513;
    const auto rows =
        density_grid(*ctx.model, trace.final_hyperparams, limit, plot_plan);
    std::string csv;
    if (model->dim() == 1) {
      csv = "theta,q_n,normal_limit\n";
      for (const auto& row : rows)
        csv += format_double(row.theta[0]) + "," + format_double(row.q_n) +
               "," + format_double(row.normal_limit) + "\n";
    } else {
      csv = "theta_1,theta_2,q_n,normal_limit\n";
      for (const auto& row : rows)
        csv += format_double(row.theta[0]) + "," + format_double(row.theta[1]) +
               "," + format_double(row.q_n) + "," +
               format_double(row.normal_limit) + "\n";
    }
    const fs::path density_path =
        fs::path(cfg.out_dir) / ("density_n" + std::to_string(nv) + ".csv");
    write_text_file(density_path, csv);
    res.files.push_back(density_path);
  }

  json report;
  report["schema_version"] = kSchemaVersion;
  report["kind"] = "normality";
  report["config"] = cfg.to_json();
  report["cells"] = cells;

  const fs::path report_path = fs::path(cfg.out_dir) / "normality_report.json";
  write_json_file(report_path, report);
  res.report = report;
  res.files.insert(res.files.begin(), report_path);
  return res;
}

namespace {

struct SweepCell {
  int n = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  bool converged = false;
  int iterations = 0;
  double error_norm = 0.0;
  double error_identifiable = 0.0;
  double error_orthogonal = 0.0;
  double contraction = std::numeric_limits<double>::quiet_NaN();
  double ratio_to_inv_hess = 0.0;
};

SweepCell run_sweep_cell(const ExperimentConfig& cfg, const Model& model,
                         const Vector& theta_star, int nv,
                         std::uint64_t seed) {
  SweepCell cell;
  cell.n = nv;
  cell.seed = seed;
  try {
    const std::vector<double> y = model.simulate(theta_star, nv, seed);
    ExperimentConfig sub = cfg;
    FitContext ctx = make_fit_context(sub, y);
    const VBTrace trace = run_vb(model, y, ctx.vb_cfg);
    cell.converged = trace.converged;
    cell.iterations = trace.iterations();

    const Vector err = trace.final_iterate() - theta_star;
    cell.error_norm = err.norm();
    if (model.dim() == 2) {
      cell.error_identifiable = std::abs(err[0] + err[1]) / std::sqrt(2.0);
      cell.error_orthogonal = std::abs(err[0] - err[1]) / std::sqrt(2.0);
    } else {
      cell.error_identifiable = cell.error_norm;
      cell.error_orthogonal = 0.0;
    }

    // Per-step error ratio near the fixed point, from the trailing steps of
    // the trace (steps small enough to be in the linear regime but above
    // rounding noise).
    std::vector<double> ratios;
    for (size_t k = 0; k + 1 < trace.step_norms.size(); ++k) {
      const double a = trace.step_norms[k], b = trace.step_norms[k + 1];
      if (a > 1e-12 && b > 1e-14) ratios.push_back(b / a);
    }
    if (ratios.size() > 5) ratios.erase(ratios.begin(), ratios.end() - 5);
    if (!ratios.empty()) cell.contraction = median(ratios);

    const Matrix cov = posterior_cov(model, trace.final_hyperparams);
    const Matrix product = nv * cov * model.hess_psi(theta_star);
    Eigen::SelfAdjointEigenSolver<Matrix> es(
        0.5 * (product + product.transpose()));
    cell.ratio_to_inv_hess = es.eigenvalues().maxCoeff();
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

}  // namespace

CommandResult cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto model = make_model(cfg.model);
  const Vector theta_star = cfg.resolved_theta_star(model->dim());
  validate_params(*model, theta_star);

  const std::vector<int> grid = cfg.resolved_n_grid();
  struct CellSpec {
    int n;
    std::uint64_t seed;
  };
  std::vector<CellSpec> specs;
  for (int nv : grid)
    for (std::uint64_t seed : cfg.seeds) specs.push_back({nv, seed});

  std::vector<SweepCell> cells(specs.size());
  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < specs.size(); ++i)
      cells[i] =
          run_sweep_cell(cfg, *model, theta_star, specs[i].n, specs[i].seed);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < specs.size();
             i = next.fetch_add(1))
          cells[i] = run_sweep_cell(cfg, *model, theta_star, specs[i].n,
                                    specs[i].seed);
      });
    for (auto& t : workers) t.join();
  }

  // Aggregates in deterministic (n, seed) order (specs are built that way).
  json cell_rows = json::array();
  std::string cells_csv =
      "n,seed,ok,converged,iterations,error_norm,error_identifiable,"
      "error_orthogonal,contraction,ratio_to_inv_hess\n";
  for (const SweepCell& c : cells) {
    json row{{"n", c.n},
             {"seed", c.seed},
             {"ok", c.ok},
             {"converged", c.converged},
             {"iterations", c.iterations},
             {"error_norm", c.error_norm},
             {"error_identifiable", c.error_identifiable},
             {"error_orthogonal", c.error_orthogonal},
             {"ratio_to_inv_hess", c.ratio_to_inv_hess}};
    if (std::isfinite(c.contraction)) row["contraction"] = c.contraction;
    if (!c.ok) row["error"] = c.error;
    cell_rows.push_back(row);
    cells_csv += std::to_string(c.n) + "," + std::to_string(c.seed) + "," +
                 (c.ok ? "1" : "0") + "," + (c.converged ? "1" : "0") + "," +
                 std::to_string(c.iterations) + "," +
                 format_double(c.error_norm) + "," +
                 format_double(c.error_identifiable) + "," +
                 format_double(c.error_orthogonal) + "," +
                 (std::isfinite(c.contraction) ? format_double(c.contraction)
                                               : std::string()) +
                 "," + format_double(c.ratio_to_inv_hess) + "\n";
  }

  json by_n = json::array();
  std::vector<double> log_n, log_median_err;
  for (int nv : grid) {
    std::vector<double> errs, contractions, ratios;
    for (const SweepCell& c : cells)
      if (c.ok && c.n == nv) {
        errs.push_back(c.error_identifiable);
        ratios.push_back(c.ratio_to_inv_hess);
        if (std::isfinite(c.contraction))
          contractions.push_back(c.contraction);
      }
    if (errs.empty()) continue;
    const double med = median(errs);
    json row{{"n", nv}, {"median_error_identifiable", med}};
    double ratio_mean = 0.0;
    for (double r : ratios) ratio_mean += r;
    row["mean_ratio_to_inv_hess"] = ratio_mean / ratios.size();
    if (!contractions.empty()) {
      double cmean = 0.0;
      for (double c : contractions) cmean += c;
      row["mean_contraction"] = cmean / contractions.size();
    }
    by_n.push_back(row);
    if (med > 0.0 && nv > 0) {
      log_n.push_back(std::log(static_cast<double>(nv)));
      log_median_err.push_back(std::log(med));
    }
  }

  json aggregate;
  aggregate["by_n"] = by_n;
  if (log_n.size() >= 2)
    aggregate["consistency_slope"] = ols_slope(log_n, log_median_err);

  json report;
  report["schema_version"] = kSchemaVersion;
  report["kind"] = "sweep";
  report["config"] = cfg.to_json();
  report["cells"] = cell_rows;
  report["aggregate"] = aggregate;

  fs::create_directories(cfg.out_dir);
  const fs::path report_path = fs::path(cfg.out_dir) / "sweep_report.json";
  const fs::path cells_path = fs::path(cfg.out_dir) / "sweep_cells.csv";
  write_json_file(report_path, report);
  write_text_file(cells_path, cells_csv);

  CommandResult res;
  res.report = report;
  res.files = {report_path, cells_path};
  return res;
}

}  // namespace vblab::harness
