#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "cureuq/calibrate.hpp"
#include "cureuq/constitutive.hpp"
#include "cureuq/stats.hpp"

using namespace cureuq;
using namespace cureuq::calibrate;

namespace {

Dataset linear_data(const Eigen::VectorXd& x, const Eigen::VectorXd& d) {
  Dataset ds;
  ds.predictor_names = {"x"};
  ds.predictors = x;
  ds.observations = d;
  ds.label = "linear";
  return ds;
}

ResidualModel linear_model() {
  ResidualModel m;
  m.free_names = {"kappa"};
  m.predict = [](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& ds) {
    return (k[0] * ds.predictors.col(0)).eval();
  };
  return m;
}

ResidualModel glass_model() {
  ResidualModel m;
  m.free_names = {"r_f", "theta_g0", "theta_g1"};
  m.predict = [](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& ds) {
    const constitutive::GlassTransitionParams gp{k[0], k[1], k[2]};
    Eigen::VectorXd out(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i)
      out[i] = constitutive::glass_transition(ds.predictors(i, 0), gp);
    return out;
  };
  m.jacobian = [](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& ds) {
    const constitutive::GlassTransitionParams gp{k[0], k[1], k[2]};
    Eigen::MatrixXd jac(ds.size(), 3);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      const auto g = constitutive::glass_transition_param_grad(ds.predictors(i, 0), gp);
      jac(i, 0) = g[0];
      jac(i, 1) = g[1];
      jac(i, 2) = g[2];
    }
    return jac;
  };
  return m;
}

Dataset glass_data(int n, const constitutive::GlassTransitionParams& truth) {
  Dataset ds;
  ds.predictor_names = {"c"};
  ds.predictors = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  ds.observations.resize(n);
  for (int i = 0; i < n; ++i)
    ds.observations[i] = constitutive::glass_transition(ds.predictors(i, 0), truth);
  ds.label = "theta_g";
  return ds;
}

}  // namespace

TEST_CASE("linear model converges to the normal-equation solution") {
  stats::RngStream rng(8, 0);
  const int n = 30;
  Eigen::VectorXd x(n), d(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.1 + rng.uniform01() * 5.0;
    d[i] = 2.5 * x[i] + 0.3 * rng.normal();
  }
  const double kappa_exact = x.dot(d) / x.dot(x);

  const auto fit = solve_nls(linear_model(), linear_data(x, d), Eigen::VectorXd::Ones(1));
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.kappa[0] - kappa_exact) / std::abs(kappa_exact) < 1e-12);
}

TEST_CASE("hand-computable one-parameter covariance") {
  Eigen::VectorXd x(2), d(2);
  x << 1.0, 1.0;
  d << 0.0, 2.0;
  const auto fit = solve_nls(linear_model(), linear_data(x, d), Eigen::VectorXd::Ones(1));
  REQUIRE(fit.converged);
  CHECK(fit.kappa[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.sigma2_hat == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.covariance(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("duplicating a dataset shrinks the covariance by the factor") {
  stats::RngStream rng(9, 0);
  const int n = 20;
  Eigen::VectorXd x(n), d(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 1.0 + rng.uniform01();
    d[i] = 1.7 * x[i] + 0.1 * rng.normal();
  }
  const auto fit1 = solve_nls(linear_model(), linear_data(x, d), Eigen::VectorXd::Ones(1));

  const int k = 4;
  Eigen::VectorXd xk(n * k), dk(n * k);
  for (int r = 0; r < k; ++r) {
    xk.segment(r * n, n) = x;
    dk.segment(r * n, n) = d;
  }
  const auto fitk = solve_nls(linear_model(), linear_data(xk, dk), Eigen::VectorXd::Ones(1));
  REQUIRE(fit1.converged);
  REQUIRE(fitk.converged);
  CHECK(fitk.covariance(0, 0) ==
        doctest::Approx(fit1.covariance(0, 0) / k).epsilon(0.08));
}

TEST_CASE("zero-noise glass transition recovery from perturbed start") {
  const auto truth = constitutive::reference_params().glass;
  const auto data = glass_data(12, truth);
  Eigen::VectorXd init(3);
  init << truth.r_f * 1.2, truth.theta_g0 * 1.2, truth.theta_g1 * 1.2;
  const auto fit = solve_nls(glass_model(), data, init);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.kappa[0] - truth.r_f) / truth.r_f < 1e-6);
  CHECK(std::abs(fit.kappa[1] - truth.theta_g0) / std::abs(truth.theta_g0) < 1e-6);
  CHECK(std::abs(fit.kappa[2] - truth.theta_g1) / truth.theta_g1 < 1e-6);
  CHECK(fit.ssr < 1e-16);
}

TEST_CASE("data exactly on the model with init at truth stays put") {
  const auto truth = constitutive::reference_params().glass;
  const auto data = glass_data(8, truth);
  Eigen::VectorXd init(3);
  init << truth.r_f, truth.theta_g0, truth.theta_g1;
  const auto fit = solve_nls(glass_model(), data, init);
  REQUIRE(fit.converged);
  CHECK(fit.ssr == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(fit.kappa[0] == doctest::Approx(truth.r_f).epsilon(1e-12));
  CHECK(fit.kappa[1] == doctest::Approx(truth.theta_g0).epsilon(1e-12));
  CHECK(fit.kappa[2] == doctest::Approx(truth.theta_g1).epsilon(1e-12));
}

TEST_CASE("analytic and finite-difference runs agree") {
  const auto truth = constitutive::reference_params().glass;
  stats::RngStream rng(4, 0);
  auto data = glass_data(25, truth);
  for (Eigen::Index i = 0; i < data.size(); ++i) data.observations[i] += 2.0 * rng.normal();
  Eigen::VectorXd init(3);
  init << truth.r_f * 1.1, truth.theta_g0 * 0.9, truth.theta_g1 * 1.1;

  SolveOptions with_fd;
  with_fd.use_analytic_jacobian = false;
  const auto fit_an = solve_nls(glass_model(), data, init);
  const auto fit_fd = solve_nls(glass_model(), data, init, with_fd);
  REQUIRE(fit_an.converged);
  REQUIRE(fit_fd.converged);
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(fit_an.kappa[j] - fit_fd.kappa[j]) /
              std::max(1.0, std::abs(fit_an.kappa[j])) <
          1e-8);
}

TEST_CASE("row reordering leaves the fit unchanged") {
  const auto truth = constitutive::reference_params().glass;
  stats::RngStream rng(14, 0);
  auto data = glass_data(20, truth);
  for (Eigen::Index i = 0; i < data.size(); ++i) data.observations[i] += 3.0 * rng.normal();

  Dataset reversed = data;
  reversed.predictors = data.predictors.colwise().reverse().eval();
  reversed.observations = data.observations.reverse().eval();

  Eigen::VectorXd init(3);
  init << 0.5, -50.0, 150.0;
  const auto fit_a = solve_nls(glass_model(), data, init);
  const auto fit_b = solve_nls(glass_model(), reversed, init);
  REQUIRE(fit_a.converged);
  REQUIRE(fit_b.converged);
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(fit_a.kappa[j] - fit_b.kappa[j]) /
              std::max(std::abs(fit_a.kappa[j]), 1e-12) <
          1e-12);
  CHECK((fit_a.covariance - fit_b.covariance).norm() / fit_a.covariance.norm() < 1e-10);
}

TEST_CASE("output scaling invariance") {
  // Scaling observations and model output together changes neither kappa*
  // nor C; scaling observations alone on a linear model scales kappa* by
  // the factor and C by its square.
  stats::RngStream rng(5, 0);
  const int n = 15;
  Eigen::VectorXd x(n), d(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.5 + rng.uniform01();
    d[i] = 3.0 * x[i] + 0.2 * rng.normal();
  }
  const double lam = 7.0;
  const auto fit = solve_nls(linear_model(), linear_data(x, d), Eigen::VectorXd::Ones(1));

  ResidualModel scaled = linear_model();
  scaled.predict = [lam](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& ds) {
    return (lam * k[0] * ds.predictors.col(0)).eval();
  };
  const auto fit_both = solve_nls(scaled, linear_data(x, (lam * d).eval()),
                                  Eigen::VectorXd::Ones(1));
  CHECK(fit_both.kappa[0] == doctest::Approx(fit.kappa[0]).epsilon(1e-10));
  CHECK(fit_both.covariance(0, 0) == doctest::Approx(fit.covariance(0, 0)).epsilon(1e-8));

  const auto fit_obs = solve_nls(linear_model(), linear_data(x, (lam * d).eval()),
                                 Eigen::VectorXd::Ones(1));
  CHECK(fit_obs.kappa[0] == doctest::Approx(lam * fit.kappa[0]).epsilon(1e-10));
  CHECK(fit_obs.covariance(0, 0) ==
        doctest::Approx(lam * lam * fit.covariance(0, 0)).epsilon(1e-8));
}

TEST_CASE("unidentifiable parameter is named") {
  ResidualModel m;
  m.free_names = {"used", "unused"};
  m.predict = [](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& ds) {
    return (k[0] * ds.predictors.col(0)).eval();
  };
  stats::RngStream rng(2, 0);
  Eigen::VectorXd x(6), d(6);
  for (int i = 0; i < 6; ++i) {
    x[i] = 1.0 + i;
    d[i] = 2.0 * x[i] + 0.01 * rng.normal();
  }
  const auto fit = solve_nls(m, linear_data(x, d), Eigen::Vector2d(1.0, 1.0));
  CHECK(fit.converged);
  CHECK(!fit.has_covariance());
  CHECK_THROWS_WITH_AS(asymptotic_covariance(fit),
                       doctest::Contains("unused"), std::runtime_error);
}

TEST_CASE("confidence intervals use the right critical values") {
  Eigen::VectorXd x(5), d(5);
  x << 1, 2, 3, 4, 5;
  d << 1.1, 1.9, 3.2, 3.9, 5.1;
  ResidualModel m3;
  m3.free_names = {"a", "b", "c"};
  m3.predict = [](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& ds) {
    const auto& t = ds.predictors.col(0);
    return (k[0] * t.array() * t.array() + k[1] * t.array() + k[2]).matrix().eval();
  };
  const auto fit = solve_nls(m3, linear_data(x, d), Eigen::Vector3d(0.1, 1.0, 0.1));
  REQUIRE(fit.converged);
  REQUIRE(fit.has_covariance());

  // n_D = 5, n_kappa = 3 -> dof 2, t crit about 4.30 vs normal 1.96
  const auto ci_n = confidence_interval(fit, 0.95, IntervalFamily::normal_dist);
  const auto ci_t = confidence_interval(fit, 0.95, IntervalFamily::student_t);
  for (int j = 0; j < 3; ++j) {
    const double half_n = 0.5 * (ci_n[j].second - ci_n[j].first);
    const double half_t = 0.5 * (ci_t[j].second - ci_t[j].first);
    CHECK(half_t / half_n == doctest::Approx(4.302652729696142 / 1.959963984540054).epsilon(1e-6));
  }

  // zero covariance -> degenerate interval
  FitResult degenerate = fit;
  degenerate.covariance.setZero();
  const auto ci0 = confidence_interval(degenerate, 0.95, IntervalFamily::student_t);
  for (int j = 0; j < 3; ++j) {
    CHECK(ci0[j].first == degenerate.kappa[j]);
    CHECK(ci0[j].second == degenerate.kappa[j]);
  }
}

TEST_CASE("log-scaled parameters stay positive and reach the same optimum") {
  // Exponential decay with a positivity-constrained rate.
  stats::RngStream rng(77, 0);
  const int n = 40;
  Eigen::VectorXd t(n), d(n);
  for (int i = 0; i < n; ++i) {
    t[i] = 0.1 * i;
    d[i] = 5.0 * std::exp(-0.8 * t[i]) + 0.01 * rng.normal();
  }
  Dataset ds;
  ds.predictor_names = {"t"};
  ds.predictors = t;
  ds.observations = d;
  ds.label = "decay";

  ResidualModel m;
  m.free_names = {"amp", "rate"};
  m.predict = [](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& q) {
    return (k[0] * (-k[1] * q.predictors.col(0).array()).exp()).matrix().eval();
  };
  ResidualModel mlog = m;
  mlog.log_scale = {true, true};

  const auto fit_plain = solve_nls(m, ds, Eigen::Vector2d(1.0, 0.2));
  const auto fit_log = solve_nls(mlog, ds, Eigen::Vector2d(1.0, 0.2));
  REQUIRE(fit_plain.converged);
  REQUIRE(fit_log.converged);
  CHECK(fit_log.kappa[0] == doctest::Approx(fit_plain.kappa[0]).epsilon(1e-7));
  CHECK(fit_log.kappa[1] == doctest::Approx(fit_plain.kappa[1]).epsilon(1e-7));
  CHECK((fit_log.covariance - fit_plain.covariance).norm() / fit_plain.covariance.norm() < 1e-4);
}

TEST_CASE("non-finite residual at init is rejected") {
  ResidualModel m;
  m.free_names = {"k"};
  m.predict = [](const Eigen::VectorXd& k, const Eigen::VectorXd&, const Dataset& ds) {
    return (std::log(k[0]) * ds.predictors.col(0)).eval();
  };
  Eigen::VectorXd x(3), d(3);
  x << 1, 2, 3;
  d << 1, 2, 3;
  CHECK_THROWS_AS(solve_nls(m, linear_data(x, d), Eigen::VectorXd::Constant(1, -1.0)),
                  std::invalid_argument);
}

TEST_CASE("csv round trip preserves a dataset") {
  const auto truth = constitutive::reference_params().glass;
  auto data = glass_data(9, truth);
  const auto path = std::filesystem::temp_directory_path() / "cureuq_test_dataset.csv";
  write_dataset_csv(path.string(), data, "theta_g");
  const auto back = read_dataset_csv(path.string());
  CHECK(back.predictor_names == data.predictor_names);
  CHECK((back.predictors - data.predictors).norm() == 0.0);
  CHECK((back.observations - data.observations).norm() == 0.0);
  std::filesystem::remove(path);
}
