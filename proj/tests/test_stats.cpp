#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>

#include "cureuq/parallel.hpp"
#include "cureuq/stats.hpp"

using namespace cureuq::stats;

TEST_CASE("rng streams are reproducible and schedule independent") {
  RngStream a(123, 7), b(123, 7), c(123, 8);
  for (int i = 0; i < 100; ++i) {
    const double va = a.uniform01();
    CHECK(va == b.uniform01());
    CHECK(va >= 0.0);
    CHECK(va < 1.0);
  }
  // a different task index gives a different sequence
  RngStream a2(123, 7);
  bool any_diff = false;
  for (int i = 0; i < 20; ++i) any_diff |= (a2.normal() != c.normal());
  CHECK(any_diff);

  // parallel draws equal serial draws, independent of scheduling
  std::vector<double> serial(64), parallel(64);
  for (std::size_t i = 0; i < 64; ++i) {
    RngStream s(99, i);
    serial[i] = s.normal();
  }
  cureuq::parallel_for(64, 4, [&](std::size_t i) {
    RngStream s(99, i);
    parallel[i] = s.normal();
  });
  CHECK(serial == parallel);
}

TEST_CASE("lognormal from moments hits the reference values and round-trips") {
  const auto d = lognormal_from_moments(40.0, 4.0);
  CHECK(d.sigma_ln == doctest::Approx(std::sqrt(std::log(1.01))).epsilon(1e-14));
  CHECK(d.mu_ln == doctest::Approx(std::log(40.0) - 0.5 * std::log(1.01)).epsilon(1e-14));
  // analytic moment round trip
  CHECK(lognormal_mean(d) == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(lognormal_stddev(d) == doctest::Approx(4.0).epsilon(1e-12));
  // sigma -> 0 limit
  const auto tight = lognormal_from_moments(40.0, 1e-9);
  CHECK(tight.sigma_ln == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(tight.mu_ln == doctest::Approx(std::log(40.0)).epsilon(1e-12));
  CHECK_THROWS_AS(lognormal_from_moments(-1.0, 1.0), std::domain_error);

  RngStream rng(5, 0);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample(Distribution{d}, rng);
  CHECK(sum / n == doctest::Approx(40.0).epsilon(0.01));
}

TEST_CASE("beta from moments hits the reference values and round-trips") {
  const auto d = beta_from_moments(0.8, 0.08);
  CHECK(d.alpha == doctest::Approx(19.2).epsilon(1e-12));
  CHECK(d.beta == doctest::Approx(4.8).epsilon(1e-12));
  CHECK(beta_mean(d) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(beta_stddev(d) == doctest::Approx(0.08).epsilon(1e-12));
  const auto sym = beta_from_moments(0.5, 0.1);
  CHECK(sym.alpha == doctest::Approx(sym.beta).epsilon(1e-14));
  CHECK_THROWS_AS(beta_from_moments(0.5, 0.6), std::domain_error);

  RngStream rng(17, 0);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample(Distribution{d}, rng);
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
  CHECK(mean == doctest::Approx(0.8).epsilon(0.01));
  CHECK(sd == doctest::Approx(0.08).epsilon(0.02));
}

TEST_CASE("t critical values quoted in the tables") {
  CHECK(t_critical(2, 0.95) == doctest::Approx(4.30).epsilon(0.01 / 4.30));
  CHECK(t_critical(47, 0.95) == doctest::Approx(2.01).epsilon(0.01 / 2.01));
  CHECK(t_critical(1000000, 0.95) == doctest::Approx(1.96).epsilon(0.005 / 1.96));
  CHECK(normal_critical(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  // high-precision references
  CHECK(t_critical(2, 0.95) == doctest::Approx(4.302652729696142).epsilon(1e-9));
  CHECK(t_critical(47, 0.95) == doctest::Approx(2.0117405137297655).epsilon(1e-9));
}

TEST_CASE("t critical decreases with dof") {
  double prev = t_critical(1, 0.95);
  for (const int dof : {2, 3, 5, 10, 30, 100, 1000}) {
    const double t = t_critical(dof, 0.95);
    CHECK(t < prev);
    prev = t;
  }
}

TEST_CASE("incomplete beta basic identities") {
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1,1) = x
  for (const double x : {0.1, 0.5, 0.9})
    CHECK(incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
  // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
  CHECK(incomplete_beta(2.5, 1.5, 0.3) ==
        doctest::Approx(1.0 - incomplete_beta(1.5, 2.5, 0.7)).epsilon(1e-12));
}

TEST_CASE("mvn sampling: zero covariance returns the mean") {
  Eigen::VectorXd mean(3);
  mean << 1.0, -2.0, 3.0;
  MvnSampler sampler(mean, Eigen::MatrixXd::Zero(3, 3));
  RngStream rng(1, 0);
  CHECK((sampler.sample(rng) - mean).norm() == 0.0);
}

TEST_CASE("mvn sampling: diagonal covariance matches univariate draws") {
  Eigen::VectorXd mean(2);
  mean << 5.0, -1.0;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
  cov(0, 0) = 4.0;
  cov(1, 1) = 0.25;
  MvnSampler sampler(mean, cov);
  RngStream rng_a(33, 4), rng_b(33, 4);
  const Eigen::VectorXd draw = sampler.sample(rng_a);
  const double z0 = rng_b.normal();
  const double z1 = rng_b.normal();
  CHECK(draw[0] == doctest::Approx(5.0 + 2.0 * z0).epsilon(1e-14));
  CHECK(draw[1] == doctest::Approx(-1.0 + 0.5 * z1).epsilon(1e-14));
}

TEST_CASE("mvn sample covariance converges to the target") {
  Eigen::MatrixXd cov(3, 3);
  cov << 2.0, 0.5, 0.2,
         0.5, 1.0, -0.3,
         0.2, -0.3, 1.5;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  MvnSampler sampler(mean, cov);
  const int n = 100000;
  Eigen::MatrixXd draws(n, 3);
  RngStream rng(71, 0);
  for (int i = 0; i < n; ++i) draws.row(i) = sampler.sample(rng).transpose();
  const auto [m, c] = sample_moments(draws);
  CHECK((c - cov).norm() / cov.norm() < 0.05);

  // 1/sqrt(n) convergence of the covariance estimate
  double prev_err = -1.0;
  for (const int nn : {100, 1000, 10000, 100000}) {
    const auto [mm, cc] = sample_moments(draws.topRows(nn));
    const double err = (cc - cov).norm() / cov.norm();
    if (prev_err > 0.0) CHECK(err < prev_err * 1.2);  // allow noise, demand the trend
    prev_err = err;
  }
}

TEST_CASE("mvn near-singular covariance is rescued by the jitter ladder") {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 1.0, 1.0, 1.0;  // rank one
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  MvnSampler sampler(mean, cov);
  RngStream rng(3, 0);
  const Eigen::VectorXd d = sampler.sample(rng);
  CHECK(std::abs(d[0] - d[1]) < 1e-5);  // draws stay on the degenerate direction
}

TEST_CASE("sample moments: frozen cases and dual implementation") {
  Eigen::MatrixXd two_rows(2, 2);
  two_rows << 1.0, 2.0, 1.0, 2.0;
  const auto [m0, c0] = sample_moments(two_rows);
  CHECK(c0.norm() == 0.0);

  Eigen::MatrixXd binary(2, 1);
  binary << 0.0, 1.0;
  const auto [m1, c1] = sample_moments(binary);
  CHECK(m1[0] == doctest::Approx(0.5));
  CHECK(c1(0, 0) == doctest::Approx(0.5));  // (0.25 + 0.25)/(2-1)

  // independently coded two-pass estimator
  RngStream rng(11, 0);
  Eigen::MatrixXd x(1000, 2);
  for (int i = 0; i < 1000; ++i) {
    x(i, 0) = rng.normal() * 2.0 + 1.0;
    x(i, 1) = rng.uniform01();
  }
  const auto [m, c] = sample_moments(x);
  Eigen::Vector2d mean2 = Eigen::Vector2d::Zero();
  for (int i = 0; i < 1000; ++i) mean2 += x.row(i).transpose();
  mean2 /= 1000.0;
  Eigen::Matrix2d cov2 = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d d = x.row(i).transpose() - mean2;
    cov2 += d * d.transpose();
  }
  cov2 /= 999.0;
  CHECK((m - mean2).norm() < 1e-12);
  CHECK((c - cov2).norm() / cov2.norm() < 1e-12);

  Eigen::MatrixXd one_row(1, 2);
  CHECK_THROWS_AS(sample_moments(one_row), std::invalid_argument);
}

TEST_CASE("skewness of symmetric and asymmetric samples") {
  RngStream rng(13, 0);
  Eigen::VectorXd sym(20000), skewed(20000);
  for (int i = 0; i < 20000; ++i) {
    sym[i] = rng.normal();
    const double u = rng.normal();
    skewed[i] = std::exp(u);  // lognormal, strongly right skewed
  }
  CHECK(std::abs(sample_skewness(sym)) < 0.1);
  CHECK(sample_skewness(skewed) > 1.0);
}

TEST_CASE("uniform sym and empirical sampling") {
  RngStream rng(21, 0);
  const UniformSym u{2.0};
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 10000; ++i) {
    const double x = sample(Distribution{u}, rng);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo >= -2.0);
  CHECK(hi <= 2.0);
  CHECK(lo < -1.8);
  CHECK(hi > 1.8);

  const Empirical e{{1.0, 2.0, 3.0}};
  for (int i = 0; i < 100; ++i) {
    const double x = sample(Distribution{e}, rng);
    CHECK((x == 1.0 || x == 2.0 || x == 3.0));
  }
}
