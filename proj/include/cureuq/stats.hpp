#pragma once

// Probability distributions, reproducible sampling streams, critical
// values, and sample-moment estimators for calibration, coverage testing,
// and forward uncertainty propagation.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

namespace cureuq::stats {

// Reproducible stream of random draws. Streams are derived from
// (base_seed, task_index) so that parallel tasks see independent,
// schedule-invariant sequences. All samplers consume a fixed number of
// engine draws per call; no hidden state is cached between calls.
class RngStream {
 public:
  explicit RngStream(std::uint64_t base_seed, std::uint64_t task_index = 0);

  // Uniform on [0,1).
  double uniform01();
  // Uniform on (0,1] (never zero; safe under log).
  double uniform01_open_low();
  // Standard normal via Box-Muller, two uniforms per draw.
  double normal();
  // Gamma(shape alpha, scale 1), Marsaglia-Tsang.
  double gamma(double alpha);
  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 eng_;
};

// --- distribution types --------------------------------------------------

struct Normal {
  double mu = 0.0;
  double sigma = 0.0;
};

// Symmetric uniform noise on [-half_width, half_width].
struct UniformSym {
  double half_width = 0.0;
};

struct LogNormal {
  double mu_ln = 0.0;
  double sigma_ln = 0.0;
};

struct Beta {
  double alpha = 0.0;
  double beta = 0.0;
};

struct Empirical {
  std::vector<double> sample;
};

struct MultivariateNormal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

using Distribution =
    std::variant<Normal, UniformSym, LogNormal, Beta, Empirical, MultivariateNormal>;

// Scalar draw; MultivariateNormal is rejected here (use MvnSampler).
double sample(const Distribution& d, RngStream& rng);

// Lognormal with prescribed mean and standard deviation of the variable
// itself (not of its logarithm).
LogNormal lognormal_from_moments(double mu, double sigma);

// Beta on [0,1] with prescribed mean and standard deviation; requires
// sigma^2 < mu (1 - mu).
Beta beta_from_moments(double mu, double sigma);

// Analytic moments, used by the round-trip property tests.
double lognormal_mean(const LogNormal& d);
double lognormal_stddev(const LogNormal& d);
double beta_mean(const Beta& d);
double beta_stddev(const Beta& d);

// --- critical values ------------------------------------------------------

// Two-sided critical value of the t-distribution: t with
// CDF(t) = (1 + level)/2, by bisection+Newton on the regularized
// incomplete beta function (tolerance 1e-10).
double t_critical(int dof, double level);

// Two-sided normal critical value (1.96 at level 0.95).
double normal_critical(double level);

// Regularized incomplete beta I_x(a,b); exposed for tests.
double incomplete_beta(double a, double b, double x);

// Student-t CDF with dof degrees of freedom.
double student_t_cdf(double t, double dof);

// --- multivariate sampling --------------------------------------------------

// Cholesky-based sampler with a jitter ladder: if the factorization fails,
// a diagonal of 1e-12 trace/k is added and escalated tenfold up to
// 1e-6 trace/k before giving up (asymptotic covariances can be
// near-singular for correlated parameters).
class MvnSampler {
 public:
  MvnSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& cov);

  Eigen::VectorXd sample(RngStream& rng) const;
  const Eigen::VectorXd& mean() const { return mean_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_;  // lower-triangular factor, zero for zero covariance
};

Eigen::VectorXd mvn_sample(const MultivariateNormal& d, RngStream& rng);

// --- sample moments -------------------------------------------------------

// Row-wise samples (n x k); returns mean vector and unbiased covariance
// (divisor n-1). Requires n >= 2.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> sample_moments(const Eigen::MatrixXd& samples);

// Bias-corrected sample skewness of a scalar sample.
double sample_skewness(const Eigen::VectorXd& x);

}  // namespace cureuq::stats
