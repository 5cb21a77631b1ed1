#include "cureuq/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace cureuq::stats {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t base_seed, std::uint64_t task_index) {
  // Mix seed and task index so neighbouring indices give unrelated streams.
  std::uint64_t s = base_seed ^ (0xD1B54A32D192ED03ULL * (task_index + 1));
  std::seed_seq seq{static_cast<unsigned>(splitmix64(s)), static_cast<unsigned>(splitmix64(s)),
                    static_cast<unsigned>(splitmix64(s)), static_cast<unsigned>(splitmix64(s))};
  eng_.seed(seq);
}

double RngStream::uniform01() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform01_open_low() {
  return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
}

double RngStream::normal() {
  const double u1 = uniform01_open_low();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::gamma(double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha must be > 0");
  if (alpha < 1.0) {
    // Boost to shape alpha+1 and correct with a uniform power.
    const double u = uniform01_open_low();
    return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / (3.0 * std::sqrt(d));
  while (true) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01_open_low();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::uint64_t RngStream::index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("index: n must be > 0");
  // Rejection to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
  std::uint64_t v;
  do {
    v = eng_();
  } while (v >= limit);
  return v % n;
}

double sample(const Distribution& d, RngStream& rng) {
  return std::visit(
      [&rng](const auto& dist) -> double {
        using T = std::decay_t<decltype(dist)>;
        if constexpr (std::is_same_v<T, Normal>) {
          return dist.mu + dist.sigma * rng.normal();
        } else if constexpr (std::is_same_v<T, UniformSym>) {
          return dist.half_width * (2.0 * rng.uniform01() - 1.0);
        } else if constexpr (std::is_same_v<T, LogNormal>) {
          return std::exp(dist.mu_ln + dist.sigma_ln * rng.normal());
        } else if constexpr (std::is_same_v<T, Beta>) {
          const double x = rng.gamma(dist.alpha);
          const double y = rng.gamma(dist.beta);
          return x / (x + y);
        } else if constexpr (std::is_same_v<T, Empirical>) {
          if (dist.sample.empty()) throw std::invalid_argument("empirical sample is empty");
          return dist.sample[rng.index(dist.sample.size())];
        } else {
          throw std::invalid_argument("sample: multivariate draw needs MvnSampler");
        }
      },
      d);
}

LogNormal lognormal_from_moments(double mu, double sigma) {
  if (mu <= 0.0) throw std::domain_error("lognormal_from_moments: mean must be > 0");
  if (sigma <= 0.0) throw std::domain_error("lognormal_from_moments: sigma must be > 0");
  const double s2 = std::log(sigma * sigma / (mu * mu) + 1.0);
  return {std::log(mu) - 0.5 * s2, std::sqrt(s2)};
}

Beta beta_from_moments(double mu, double sigma) {
  if (mu <= 0.0 || mu >= 1.0) throw std::domain_error("beta_from_moments: mean must be in (0,1)");
  const double var = sigma * sigma;
  if (var >= mu * (1.0 - mu))
    throw std::domain_error("beta_from_moments: variance too large for [0,1] support");
  const double f = mu * (1.0 - mu) / var - 1.0;
  return {f * mu, f * (1.0 - mu)};
}

double lognormal_mean(const LogNormal& d) {
  return std::exp(d.mu_ln + 0.5 * d.sigma_ln * d.sigma_ln);
}

double lognormal_stddev(const LogNormal& d) {
  const double m = lognormal_mean(d);
  return m * std::sqrt(std::exp(d.sigma_ln * d.sigma_ln) - 1.0);
}

double beta_mean(const Beta& d) { return d.alpha / (d.alpha + d.beta); }

double beta_stddev(const Beta& d) {
  const double s = d.alpha + d.beta;
  return std::sqrt(d.alpha * d.beta / (s * s * (s + 1.0)));
}

namespace {

// Continued fraction for I_x(a,b) (modified Lentz).
double incbeta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * incbeta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(ln_front) * incbeta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  const double x = dof / (dof + t * t);
  const double p = 0.5 * incomplete_beta(0.5 * dof, 0.5, x);
  return t >= 0.0 ? 1.0 - p : p;
}

namespace {

double student_t_pdf(double t, double dof) {
  const double ln = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                    0.5 * std::log(dof * std::numbers::pi) -
                    0.5 * (dof + 1.0) * std::log1p(t * t / dof);
  return std::exp(ln);
}

}  // namespace

double t_critical(int dof, double level) {
  if (dof < 1) throw std::invalid_argument("t_critical: dof must be >= 1");
  if (level <= 0.0 || level >= 1.0)
    throw std::invalid_argument("t_critical: level must be in (0,1)");
  const double p = 0.5 * (1.0 + level);
  const double nu = static_cast<double>(dof);
  // Bracket the root, then bisection tightened by Newton steps.
  double lo = 0.0, hi = 2.0;
  while (student_t_cdf(hi, nu) < p) hi *= 2.0;
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = student_t_cdf(t, nu) - p;
    if (f > 0.0) hi = t; else lo = t;
    const double dens = student_t_pdf(t, nu);
    double t_new = t - f / dens;
    if (!(t_new > lo && t_new < hi)) t_new = 0.5 * (lo + hi);
    if (std::fabs(t_new - t) < 1e-10 * (1.0 + std::fabs(t))) return t_new;
    t = t_new;
  }
  return t;
}

double normal_critical(double level) {
  if (level <= 0.0 || level >= 1.0)
    throw std::invalid_argument("normal_critical: level must be in (0,1)");
  const double p = 0.5 * (1.0 + level);
  auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
  double lo = 0.0, hi = 2.0;
  while (cdf(hi) < p) hi *= 2.0;
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = cdf(z) - p;
    if (f > 0.0) hi = z; else lo = z;
    const double dens = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    double z_new = z - f / dens;
    if (!(z_new > lo && z_new < hi)) z_new = 0.5 * (lo + hi);
    if (std::fabs(z_new - z) < 1e-12 * (1.0 + std::fabs(z))) return z_new;
    z = z_new;
  }
  return z;
}

MvnSampler::MvnSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& cov)
    : mean_(std::move(mean)) {
  const auto k = mean_.size();
  if (cov.rows() != k || cov.cols() != k)
    throw std::invalid_argument("MvnSampler: covariance size mismatch");
  if (cov.isZero(0.0)) {
    chol_ = Eigen::MatrixXd::Zero(k, k);
    return;
  }
  const double scale = cov.trace() / static_cast<double>(k);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd c = cov;
    if (jitter > 0.0) c.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() == Eigen::Success) {
      chol_ = llt.matrixL();
      return;
    }
    jitter = (jitter == 0.0) ? 1e-12 * scale : 10.0 * jitter;
    if (jitter > 1e-6 * scale) break;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  throw std::runtime_error(
      "MvnSampler: covariance not factorizable after jitter escalation; smallest eigenvalue " +
      std::to_string(es.eigenvalues().minCoeff()));
}

Eigen::VectorXd MvnSampler::sample(RngStream& rng) const {
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean_ + chol_ * z;
}

Eigen::VectorXd mvn_sample(const MultivariateNormal& d, RngStream& rng) {
  return MvnSampler(d.mean, d.cov).sample(rng);
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> sample_moments(const Eigen::MatrixXd& samples) {
  const auto n = samples.rows();
  if (n < 2) throw std::invalid_argument("sample_moments: need at least two samples");
  const Eigen::VectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  return {mean, cov};
}

double sample_skewness(const Eigen::VectorXd& x) {
  const auto n = static_cast<double>(x.size());
  if (n < 3) throw std::invalid_argument("sample_skewness: need at least three values");
  const double mean = x.mean();
  const Eigen::ArrayXd d = x.array() - mean;
  const double m2 = d.square().sum() / n;
  const double m3 = d.cube().sum() / n;
  const double g1 = m3 / std::pow(m2, 1.5);
  return g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0);
}

}  // namespace cureuq::stats
