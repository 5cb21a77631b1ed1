#pragma once

// Forward uncertainty propagation through the transient curing simulation:
// FOSM with central-difference sensitivities and Monte Carlo over repeated
// runs, for uncertain material parameters (with variance inflation) and
// uncertain boundary conditions.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cureuq/pipeline.hpp"
#include "cureuq/simulate.hpp"
#include "cureuq/stats.hpp"

namespace cureuq::forward_uq {

// A model evaluation maps a parameter vector to outputs sampled on a fixed
// grid: one column per output quantity.
using ModelFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct UQResult {
  enum class Method { fosm, mc };
  Eigen::VectorXd grid;
  Eigen::MatrixXd mean;    // grid x outputs
  Eigen::MatrixXd stddev;  // grid x outputs
  std::vector<std::string> output_names;
  Method method = Method::fosm;
  int evaluations = 0;
  int dropped = 0;
};

struct ForwardFosmOptions {
  double step_rel_std = 0.1;    // h_i = 0.1 * sqrt(cov_ii)
  double step_floor_rel = 1e-6;
  unsigned workers = 1;
};

// Mean output is the deterministic run at the input mean; the variance is
// the double sum over central-difference sensitivities and the covariance.
UQResult fosm_forward(const ModelFn& model, const Eigen::VectorXd& mean,
                      const Eigen::MatrixXd& cov, const Eigen::VectorXd& grid,
                      const ForwardFosmOptions& options = {});

using SamplerFn = std::function<Eigen::VectorXd(stats::RngStream&)>;

struct ForwardMcOptions {
  double max_failure_fraction = 0.05;
  unsigned workers = 1;
};

UQResult mc_forward(const ModelFn& model, const SamplerFn& sampler, int n_mc, std::uint64_t seed,
                    const Eigen::VectorXd& grid, const ForwardMcOptions& options = {});

// --- uncertain material parameters (cases I and II) -----------------------

// The seventeen uncertain parameters: glass transition (3), chemical
// kinetics (4), diffusion width (1), heat capacity (5), conductivity (4).
// Shrinkage parameters stay at their calibrated values; their effect enters
// the thermal problem only through the calibrated conductivity.
struct MaterialInputs {
  struct Block {
    std::string step;
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
    Eigen::VectorXd values;
    Eigen::MatrixXd cov_sample;               // draw covariance when no empirical
    Eigen::MatrixXd empirical;                // n_mc x size, may be empty
    std::vector<Eigen::MatrixXd> empirical_noise;
  };
  std::vector<std::string> names;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // block-diagonal total covariance for FOSM
  std::vector<Block> blocks;
};

MaterialInputs material_inputs_from_pipeline(const pipeline::SetMap& sets);

// Draw per the calibration-consistent rule: blocks with Monte Carlo
// artifacts pick an empirical row and add its own noise covariance;
// deterministic-input blocks draw from N(values, noise covariance).
Eigen::VectorXd sample_material_inputs(const MaterialInputs& inputs, stats::RngStream& rng);

// Variance inflation: center the empirical deviations, scale them by
// sqrt(k), re-add the mean; noise covariances scale by k. Mean is
// preserved, every variance gains the factor k.
MaterialInputs inflate_variance(const MaterialInputs& inputs, double k);

// --- uncertain boundary conditions (case III) ------------------------------

struct BoundaryInputSpec {
  std::vector<double> path_temps_c = {20.0, 60.0, 60.0, 120.0, 120.0, 20.0, 20.0};
  double temp_rel_sigma = 0.1;  // sigma = 0.1 |mean| per path node
  double h_mean = 40.0;
  double h_sigma = 4.0;
  double eps_mean = 0.8;
  double eps_sigma = 0.08;
  bool include_dirichlet = true;  // false: only (h, eps) vary
};

// parameter vector layout: [theta_1..7][h][eps] or [h][eps]
std::vector<std::string> boundary_names(const BoundaryInputSpec& spec);
Eigen::VectorXd boundary_mean(const BoundaryInputSpec& spec);
Eigen::MatrixXd boundary_cov(const BoundaryInputSpec& spec);
Eigen::VectorXd sample_boundary_inputs(const BoundaryInputSpec& spec, stats::RngStream& rng);

// --- simulator bindings ----------------------------------------------------

struct StudyOptions {
  simulate::ScenarioOptions scenario;
  Eigen::Index grid_points = 2000;
  unsigned workers = 1;
};

Eigen::VectorXd output_grid(const StudyOptions& options);

// Probe outputs (theta [degC], c) on the common grid as a function of the
// seventeen material parameters.
ModelFn material_model(const StudyOptions& options);

// Probe outputs as a function of the boundary parameter vector.
ModelFn boundary_model(const StudyOptions& options, const BoundaryInputSpec& spec);

}  // namespace cureuq::forward_uq
