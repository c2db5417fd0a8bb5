// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Expected values come from closed forms, adaptive quadrature
// oracles (boost.math Gauss-Kronrod) and Monte-Carlo with reported errors.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vblab/asymptotics.hpp"
#include "vblab/expfam.hpp"
#include "vblab/harness.hpp"
#include "vblab/laplace.hpp"
#include "vblab/models.hpp"
#include "vblab/rng.hpp"
#include "vblab/vb.hpp"

using namespace vblab;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& label, bool pass,
            const std::string& detail) {
  std::printf("[%s] criterion %2d: %-34s %s\n", pass ? "PASS" : "FAIL",
              criterion, label.c_str(), detail.c_str());
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double gk_integrate(const std::function<double(double)>& f, double lo,
                    double hi) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, lo, hi, 12, 1e-12);
}

// --------------------------------------------------------------------------

void criterion_1_fixed_point() {
  bool pass = true;
  std::string detail;

  ModelB b;
  VBConfig cfg;
  cfg.init = Vector::Zero(1);
  cfg.tol = 1e-12;
  cfg.prior = Hyperparams{1.0, Vector::Zero(1)};
  const VBTrace tb = run_vb(b, {1.0, 2.0, 2.0, 3.0}, cfg);
  const double err_b = std::abs(tb.final_iterate()[0] - 4.0 / 3.0);
  pass = pass && tb.converged && err_b <= 1e-8;
  detail += "B |theta-4/3|=" + fmt(err_b);

  ModelC c;
  const std::vector<double> yc{2.0, 1.0, 0.0, 3.0};
  VBConfig cfg_c;
  cfg_c.init = Vector::Constant(1, -1.0);
  cfg_c.prior = Hyperparams{1.0, Vector::Constant(1, 1.0)};
  const VBTrace tc = run_vb(c, yc, cfg_c);
  // quadrature oracle for E[theta] under the Gamma(7, 5) posterior
  const auto w = [](double t) { return std::exp(7.0 * t - 5.0 * std::exp(t)); };
  const double z = gk_integrate(w, -30.0, 6.0);
  const double oracle =
      gk_integrate([&](double t) { return t * w(t); }, -30.0, 6.0) / z;
  const double err_c = std::abs(tc.final_iterate()[0] - oracle);
  pass = pass && tc.converged && tc.iterations() == 1 && err_c <= 1e-6;
  detail += ", C one-step err=" + fmt(err_c);

  report(1, "fixed-point correctness", pass, detail);
}

void criterion_2_contraction() {
  bool pass = true;
  std::string detail;

  ModelB b;
  const int n = 1000;
  const auto y = b.simulate(Vector::Constant(1, 1.0), n, 11);
  const Hyperparams prior{1.0, Vector::Zero(1)};
  const double expected = (n / 2.0) / (n + 1.0);  // 0.49950...

  VBConfig cfg;
  cfg.prior = prior;
  cfg.init = Vector::Constant(1, (*b.exact_vb_fixed_point(y, prior))[0] + 0.05);
  cfg.tol = 1e-12;
  const VBTrace trace = run_vb(b, y, cfg);
  double worst = 0.0;
  for (size_t k = 0; k + 1 < trace.step_norms.size(); ++k) {
    if (trace.step_norms[k] < 1e-9) continue;
    const double ratio = trace.step_norms[k + 1] / trace.step_norms[k];
    worst = std::max(worst, std::abs(ratio - expected) / expected);
    pass = pass && std::abs(ratio - 0.4995) <= 0.005;
  }
  pass = pass && worst <= 0.01;
  detail += "B ratio dev=" + fmt(worst);

  // Model A: the suite asserts the exact closed form n/(n+alpha0), not the
  // 1/2 bound (flagged discrepancy along the unidentifiable direction).
  ModelA a;
  const int na = 10000;
  Vector theta_star(2);
  theta_star << 0.5, 0.5;
  const auto ya = a.simulate(theta_star, na, 12);
  const Hyperparams prior_a{1.0, Vector::Zero(2)};
  const Vector fp = *a.exact_vb_fixed_point(ya, prior_a);
  const JacobianResult jac = jacobian_phi(a, fp, ya, prior_a);
  const double closed = na / (na + 1.0);
  const double dev_a = std::abs(jac.spectral_norm - closed);
  pass = pass && dev_a <= 1e-6;
  detail += ", A |specnorm-" + fmt(closed) + "|=" + fmt(dev_a) +
            " (exceeds the 1/2 bound along theta1-theta2)";

  report(2, "contraction constants", pass, detail);
}

void criterion_3_consistency_sweep() {
  const auto start = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;

  for (const char* name : {"B", "C"}) {
    const auto model = make_model(name);
    const int m = model->dim();
    const Hyperparams prior{
        1.0, Vector::Constant(m, name == std::string("C") ? 1.0 : 0.0)};
    const Vector theta_star = Vector::Constant(m, 0.5);

    std::vector<double> log_n, log_med;
    for (double n : {100.0, 1000.0, 10000.0, 100000.0}) {
      std::vector<double> errs;
      for (int seed = 1; seed <= 20; ++seed) {
        const auto y = model->simulate(theta_star, static_cast<int>(n), seed);
        VBConfig cfg;
        cfg.prior = prior;
        cfg.init = default_init(*model, prior, y);
        const VBTrace trace = run_vb(*model, y, cfg);
        errs.push_back((trace.final_iterate() - theta_star).norm());
      }
      log_n.push_back(std::log(n));
      log_med.push_back(std::log(harness::median(errs)));
    }
    const double slope = harness::ols_slope(log_n, log_med);
    pass = pass && slope >= -0.65 && slope <= -0.35;
    detail += std::string(name) + " slope=" + fmt(slope) + " ";
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  pass = pass && secs <= 120.0;
  detail += "runtime=" + fmt(secs) + "s";
  report(3, "consistency sweep", pass, detail);
}

void criterion_4_free_energy_monotone() {
  int violations = 0;
  int sequences = 0;
  for (const char* name : {"A", "B", "C"}) {
    const auto model = make_model(name);
    const int m = model->dim();
    const Hyperparams prior{
        1.0, Vector::Constant(m, name == std::string("C") ? 1.0 : 0.0)};
    for (int n : {0, 5, 50, 500}) {
      for (int seed : {1, 2, 3}) {
        const auto y =
            model->simulate(Vector::Constant(m, 0.5), n, seed);
        for (double offset : {-1.0, 0.7}) {
          VBConfig cfg;
          cfg.prior = prior;
          cfg.init = Vector::Constant(m, offset);
          cfg.tol = 1e-10;
          const VBTrace trace = run_vb(*model, y, cfg);
          ++sequences;
          for (size_t k = 0; k + 1 < trace.free_energy.size(); ++k) {
            const double slack =
                1e-8 * (1.0 + std::abs(trace.free_energy[k + 1]));
            if (trace.free_energy[k] > trace.free_energy[k + 1] + slack)
              ++violations;
          }
        }
      }
    }
  }
  report(4, "free-energy monotonicity", violations == 0,
         std::to_string(sequences) + " traces, " +
             std::to_string(violations) + " violations");
}

void criterion_5_laplace_engine() {
  bool pass = true;
  std::string detail;
  ModelC c;

  {
    const Hyperparams hp{11.0, Vector::Constant(1, 11.0)};
    const double mean =
        posterior_mean_laplace(TiltedObjective::from_hyperparams(c, hp))[0];
    const double err =
        std::abs(mean - (boost::math::digamma(11.0) - std::log(11.0)));
    pass = pass && err <= 5e-3;
    detail += "mean err@11=" + fmt(err);
  }
  {
    const Hyperparams hp{101.0, Vector::Constant(1, 201.0)};
    const double mean =
        posterior_mean_laplace(TiltedObjective::from_hyperparams(c, hp))[0];
    const double err =
        std::abs(mean - (boost::math::digamma(201.0) - std::log(101.0)));
    pass = pass && err <= 1e-5;
    detail += ", @101=" + fmt(err);
  }
  {
    const auto log_err = [&](double n) {
      const Hyperparams hp{n + 1.0, Vector::Constant(1, 2.0 * n + 1.0)};
      const TiltedObjective tilt = TiltedObjective::from_hyperparams(c, hp);
      const double approx =
          laplace_integral(laplace_expand(tilt, BFunction::one(1)), tilt.n)
              .log_value();
      const double exact =
          std::lgamma(hp.beta[0]) - hp.beta[0] * std::log(hp.alpha);
      return std::abs(approx - exact);
    };
    const double ratio = log_err(100.0) / log_err(200.0);
    pass = pass && ratio >= 2.5 && ratio <= 6.0;
    detail += ", err(100)/err(200)=" + fmt(ratio);
  }
  {
    ModelB b;
    const Hyperparams hp{7.0, Vector::Constant(1, 3.0)};
    const TiltedObjective tilt = TiltedObjective::from_hyperparams(b, hp);
    const double approx =
        laplace_integral(laplace_expand(tilt, BFunction::one(1)), tilt.n)
            .log_value();
    const double exact = 0.5 * std::log(2.0 * M_PI / hp.alpha) +
                         hp.beta[0] * hp.beta[0] / (2.0 * hp.alpha) -
                         hp.alpha * kLog2Pi;
    const double err = std::abs(approx - exact) / std::abs(exact);
    pass = pass && err <= 1e-12;
    detail += ", quadratic rel err=" + fmt(err);
  }
  report(5, "laplace engine", pass, detail);
}

void criterion_6_moment_assemblies() {
  bool pass = true;
  std::string detail;

  // Monte-Carlo comparison on three random PD covariances (m = 2).
  Rng gen(271828);
  double worst_sigmas = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    Matrix a(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) a(i, j) = gen.uniform() - 0.5;
    const Matrix sigma = a * a.transpose() + 0.5 * Matrix::Identity(2, 2);
    const Eigen::LLT<Matrix> llt(sigma);
    const Matrix chol = llt.matrixL();

    const int n = 1000000;
    Rng rng(513 + rep);
    const std::vector<std::vector<int>> idx4{{0, 0, 1, 1}, {0, 0, 0, 1}};
    const std::vector<std::vector<int>> idx6{{0, 0, 0, 0, 1, 1},
                                             {0, 0, 0, 1, 1, 1}};
    std::vector<double> acc(idx4.size() + idx6.size(), 0.0);
    std::vector<double> acc_sq(acc.size(), 0.0);
    Vector z(2);
    for (int s = 0; s < n; ++s) {
      z[0] = rng.normal();
      z[1] = rng.normal();
      const Vector x = chol * z;
      size_t slot = 0;
      for (const auto& idx : idx4) {
        double term = 1.0;
        for (int k : idx) term *= x[k];
        acc[slot] += term;
        acc_sq[slot] += term * term;
        ++slot;
      }
      for (const auto& idx : idx6) {
        double term = 1.0;
        for (int k : idx) term *= x[k];
        acc[slot] += term;
        acc_sq[slot] += term * term;
        ++slot;
      }
    }
    size_t slot = 0;
    const auto check = [&](double analytic) {
      const double mean = acc[slot] / n;
      const double se = std::sqrt(
          std::max(0.0, acc_sq[slot] / n - mean * mean) / n);
      const double sigmas = std::abs(analytic - mean) / se;
      worst_sigmas = std::max(worst_sigmas, sigmas);
      pass = pass && sigmas <= 3.0;
      ++slot;
    };
    check(moment4(sigma, 0, 0, 1, 1));
    check(moment4(sigma, 0, 0, 0, 1));
    check(moment6(sigma, 0, 0, 0, 0, 1, 1));
    check(moment6(sigma, 0, 0, 0, 1, 1, 1));
  }
  detail += "worst MC dev=" + fmt(worst_sigmas) + " se";

  // Exact symmetry over all 24 / 720 permutations with distinct indices.
  {
    Rng rng(99);
    Matrix a4(4, 4), a6(6, 6);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a4(i, j) = rng.uniform() - 0.5;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) a6(i, j) = rng.uniform() - 0.5;
    const Matrix s4 = a4 * a4.transpose() + Matrix::Identity(4, 4);
    const Matrix s6 = a6 * a6.transpose() + Matrix::Identity(6, 6);

    std::array<int, 4> p4{0, 1, 2, 3};
    const double ref4 = moment4(s4, 0, 1, 2, 3);
    int count4 = 0;
    do {
      ++count4;
      pass = pass && moment4(s4, p4[0], p4[1], p4[2], p4[3]) == ref4;
    } while (std::next_permutation(p4.begin(), p4.end()));

    std::array<int, 6> p6{0, 1, 2, 3, 4, 5};
    const double ref6 = moment6(s6, 0, 1, 2, 3, 4, 5);
    int count6 = 0;
    do {
      ++count6;
      pass = pass &&
             moment6(s6, p6[0], p6[1], p6[2], p6[3], p6[4], p6[5]) == ref6;
    } while (std::next_permutation(p6.begin(), p6.end()));
    detail += ", symmetry over " + std::to_string(count4) + "+" +
              std::to_string(count6) + " perms exact";
  }
  report(6, "moment assemblies", pass, detail);
}

void criterion_7_asymptotic_normality() {
  bool pass = true;
  std::string detail;

  ModelC c;
  const Vector theta_star = Vector::Constant(1, 0.3);
  const Hyperparams prior{1.0, Vector::Constant(1, 1.0)};
  const auto y_full = c.simulate(theta_star, 1000, 7);

  std::vector<double> tvs;
  Hyperparams hp_1000;
  NormalLimit limit_1000;
  for (int n : {10, 100, 1000}) {
    const std::vector<double> y(y_full.begin(), y_full.begin() + n);
    VBConfig cfg;
    cfg.init = Vector::Zero(1);
    cfg.prior = prior;
    const VBTrace trace = run_vb(c, y, cfg);
    const NormalLimit limit = normal_limit(c, trace.final_hyperparams);
    tvs.push_back(normality_distance(c, trace.final_hyperparams, limit));
    if (n == 1000) {
      hp_1000 = trace.final_hyperparams;
      limit_1000 = limit;
    }
  }
  pass = pass && tvs[0] > tvs[1] && tvs[1] > tvs[2];
  detail += "TV " + fmt(tvs[0]) + ">" + fmt(tvs[1]) + ">" + fmt(tvs[2]);

  // golden value from the independent adaptive-quadrature oracle
  {
    const double log_h = hp_1000.beta[0] * std::log(hp_1000.alpha) -
                         std::lgamma(hp_1000.beta[0]);
    const double mu = limit_1000.mean[0];
    const double sd = std::sqrt(limit_1000.cov(0, 0));
    const double oracle =
        0.5 * gk_integrate(
                  [&](double t) {
                    const double qn = std::exp(log_h + hp_1000.beta[0] * t -
                                               hp_1000.alpha * std::exp(t));
                    const double ph =
                        std::exp(-0.5 * (t - mu) * (t - mu) / (sd * sd)) /
                        (sd * std::sqrt(2.0 * M_PI));
                    return std::abs(qn - ph);
                  },
                  mu - 10.0 * sd, mu + 10.0 * sd);
    pass = pass && std::abs(tvs[2] - oracle) <= 0.1 * oracle;
    detail += " (oracle " + fmt(oracle) + ")";
  }

  // C1 closed form for the Gaussian models, within 1e-10
  {
    ModelB b;
    const int n = 100;
    const Hyperparams hp{n + 1.0, Vector::Constant(1, 40.0)};
    const NormalLimit limit = normal_limit(b, hp);
    const NormalityReport rep = check_c1_c2_c3(b, hp, limit, 0.5, 0.5);
    pass = pass && std::abs(rep.c1_top_eig - 1.0 / (n + 1.0)) <= 1e-10;

    ModelA a;
    Vector beta(2);
    beta << 10.0, -4.0;
    const Hyperparams hp_a{n + 1.0, beta};
    const NormalLimit limit_a = normal_limit(a, hp_a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(limit_a.cov);
    pass = pass &&
           std::abs(es.eigenvalues().maxCoeff() - 1.0 / (n + 1.0)) <= 1e-10;
    detail += ", C1 closed form ok";
  }

  // C3 mass at delta = 0.5, n = 1000
  {
    const NormalityReport rep =
        check_c1_c2_c3(c, hp_1000, limit_1000, 0.5, 0.25);
    pass = pass && rep.c3_mass > 0.999;
    detail += ", C3=" + fmt(rep.c3_mass);
  }

  report(7, "asymptotic normality", pass, detail);
}

void criterion_8_proof_objects() {
  bool pass = true;
  std::string detail;
  const int mc = 100000;

  int psd_pass = 0;
  {
    ModelA a;
    if (verify_psd_inequality(a, Vector::Zero(2), mc, 31).pass) ++psd_pass;
    ModelB b;
    if (verify_psd_inequality(b, Vector::Zero(1), mc, 32).pass) ++psd_pass;
    ModelC c;
    if (verify_psd_inequality(c, Vector::Constant(1, 0.4), mc, 33).pass)
      ++psd_pass;
  }
  pass = pass && psd_pass == 3;
  detail += "PSD pass " + std::to_string(psd_pass) + "/3";

  int limits_pass = 0;
  for (const char* name : {"A", "B", "C"}) {
    const auto model = make_model(name);
    const Vector theta_star = Vector::Constant(model->dim(), 0.4);
    const EstepLimitReport rep =
        verify_estep_limits(*model, theta_star, 10000, 41, mc);
    if (rep.growth_rate.pass && rep.jacobian_limit.pass &&
        rep.complete_cov.pass)
      ++limits_pass;
  }
  pass = pass && limits_pass == 3;
  detail += ", limit checks pass " + std::to_string(limits_pass) + "/3";

  report(8, "proof-object checks", pass, detail);
}

void criterion_9_vb_vs_exact() {
  bool pass = true;
  std::string detail;
  ModelB b;
  const Hyperparams prior{1.0, Vector::Constant(1, 0.3)};

  double ratio_large_n = 0.0;
  for (int n : {10, 100, 10000}) {
    const auto y = b.simulate(Vector::Constant(1, 1.0), n, 51);
    VBConfig cfg;
    cfg.prior = prior;
    cfg.init = default_init(b, prior, y);
    cfg.tol = 1e-13;
    const VBTrace trace = run_vb(b, y, cfg);
    const auto exact = b.exact_posterior(y, prior);

    const double var_precision =
        1.0 / posterior_cov(b, trace.final_hyperparams)(0, 0);
    const double exact_precision = exact->precision(0, 0);
    const double ratio = var_precision / exact_precision;
    const double expected = (n + prior.alpha) / (n / 2.0 + prior.alpha);
    if (std::abs(ratio - expected) > 1e-10) pass = false;
    ratio_large_n = ratio;

    const double mean_dev =
        std::abs(trace.final_iterate()[0] - exact->mean[0]);
    if (mean_dev > 1e-8) pass = false;
  }
  pass = pass && std::abs(ratio_large_n - 2.0) < 0.01;
  detail += "precision ratio@1e4=" + fmt(ratio_large_n) + " (-> 2)";
  report(9, "VB-vs-exact oracle", pass, detail);
}

void criterion_10_reproducibility() {
  bool pass = true;
  std::string detail;

  const fs::path dir =
      fs::temp_directory_path() / "vblab_acceptance" / "reproducibility";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  };
  const auto run = [](const std::string& args) {
    const std::string cmd =
        std::string(VBLAB_CLI_PATH) + " " + args + " > /dev/null 2> /dev/null";
    const int status = std::system(cmd.c_str());
    return status < 0 ? -1 : WEXITSTATUS(status);
  };

  const fs::path out = dir / "out";
  const std::string base =
      "--model C --theta-star 0.3 --n 500 --seed 13 --alpha0 1.0 --beta0 1.0";
  const std::string sim_cmd = "simulate " + base + " --out " + out.string();
  const std::string fit_cmd = "fit " + base + " --data " +
                              (out / "dataset.csv").string() + " --out " +
                              out.string();
  if (run(sim_cmd) != 0 || run(fit_cmd) != 0) pass = false;
  const std::string csv1 = slurp(out / "dataset.csv");
  const std::string meta1 = slurp(out / "dataset.meta.json");
  const std::string report1 = slurp(out / "run_report.json");
  const std::string trace1 = slurp(out / "trace.csv");
  if (run(sim_cmd) != 0 || run(fit_cmd) != 0) pass = false;

  const bool csv_same = slurp(out / "dataset.csv") == csv1;
  const bool meta_same = slurp(out / "dataset.meta.json") == meta1;
  const bool report_same = slurp(out / "run_report.json") == report1;
  const bool trace_same = slurp(out / "trace.csv") == trace1;
  pass = pass && csv_same && meta_same && report_same && trace_same;
  detail += std::string("dataset ") + (csv_same ? "ok" : "DIFF") +
            ", reports " + (meta_same && report_same && trace_same ? "ok" : "DIFF");
  report(10, "byte-identical reproducibility", pass, detail);
}

}  // namespace

int main() {
  std::printf("vblab acceptance suite\n");
  try {
    criterion_1_fixed_point();
    criterion_2_contraction();
    criterion_3_consistency_sweep();
    criterion_4_free_energy_monotone();
    criterion_5_laplace_engine();
    criterion_6_moment_assemblies();
    criterion_7_asymptotic_normality();
    criterion_8_proof_objects();
    criterion_9_vb_vs_exact();
    criterion_10_reproducibility();
  } catch (const std::exception& e) {
    std::printf("[FAIL] suite aborted: %s\n", e.what());
    return 99;
  }
  std::printf("%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
