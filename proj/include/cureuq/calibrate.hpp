#pragma once

// Ordinary nonlinear least squares for a single calibration step:
// Levenberg-Marquardt point estimate, Jacobian-based asymptotic covariance
// C = sigma^2 (J^T J)^-1 with sigma^2 = SSR/(n_D - n_kappa), and normal- or
// t-based confidence intervals.

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "cureuq/dataset.hpp"

namespace cureuq::calibrate {

// Model response for one step. `predict` maps (free parameters, fixed
// upstream parameters, data predictors) to the model response vector; the
// optional `jacobian` supplies analytic d s / d kappa (n_D x n_kappa).
struct ResidualModel {
  std::vector<std::string> free_names;
  std::vector<std::string> fixed_names;
  Eigen::VectorXd fixed;

  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                const Dataset&)>
      predict;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                const Dataset&)>
      jacobian;

  // Per-parameter positivity handled by optimizing ln(kappa); empty means
  // no transform. Covariance is always reported in the external space.
  std::vector<bool> log_scale;

  // Optional box bounds (empty = unbounded); iterates are projected onto
  // the box. A fit pinned at a bound keeps its local Jacobian.
  Eigen::VectorXd lower_bounds;
  Eigen::VectorXd upper_bounds;
};

struct SolveOptions {
  int max_iterations = 200;
  double step_rel_tol = 1e-9;     // max |dkappa| / (|kappa| + eps)
  double ssr_rel_tol = 1e-12;     // relative SSR change
  double fd_rel_step = 1e-6;      // central-difference Jacobian step
  double lambda_init_factor = 1e-3;
  bool use_analytic_jacobian = true;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd kappa;
  Eigen::MatrixXd covariance;  // empty when unavailable
  double sigma2_hat = 0.0;
  double ssr = 0.0;
  Eigen::Index n_data = 0;
  Eigen::MatrixXd jacobian;  // at kappa*, external parameter space
  bool converged = false;
  int iterations = 0;

  bool has_covariance() const { return covariance.size() > 0; }
};

FitResult solve_nls(const ResidualModel& model, const Dataset& data,
                    const Eigen::VectorXd& init, const SolveOptions& options = {});

// Recomputes C = sigma^2 (J^T J)^-1 from a converged fit; throws naming the
// least identifiable parameter direction when J^T J is singular.
Eigen::MatrixXd asymptotic_covariance(const FitResult& fit);

enum class IntervalFamily { normal_dist, student_t };

// Per-parameter (low, high) at the given two-sided confidence level.
std::vector<std::pair<double, double>> confidence_interval(const FitResult& fit, double level,
                                                           IntervalFamily family);

}  // namespace cureuq::calibrate
