#pragma once

// Transient one-dimensional layered thermo-chemical solver: heat conduction
// with an exothermic curing source, semidiscretized with a cell-centered
// finite-volume scheme (harmonic-mean interface conductivities), integrated
// by the two-stage stiffly accurate SDIRK pair of order 2(1) with a
// PI-controlled adaptive step size. Supports Dirichlet temperature paths,
// adiabatic faces, and mixed convective-radiative boundaries.

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "cureuq/constitutive.hpp"

namespace cureuq::simulate {

inline constexpr double stefan_boltzmann = 5.67e-8;  // W/(m^2 K^4)

// Piecewise-linear temperature path; times in seconds, values in degC.
struct TemperaturePath {
  std::vector<double> times;
  std::vector<double> theta_c;

  double operator()(double t) const;
  void validate() const;
};

struct EpoxyMaterial {
  constitutive::AllParams params;
  double rho_ref = 1100.0;  // kg/m^3
  double h_c = 0.0;         // J/kg specific reaction enthalpy; set by scenario
};

struct InertMaterial {
  double rho = 0.0;    // kg/m^3
  double cp = 0.0;     // J/(kg K)
  double kappa = 0.0;  // W/(m K)
};

// Aluminum container material.
InertMaterial aluminum();

struct Layer {
  std::variant<EpoxyMaterial, InertMaterial> material;
  double thickness = 0.0;  // m
  int cells = 0;
};

struct DirichletBC {
  TemperaturePath path;
};
struct AdiabaticBC {};
struct MixedBC {
  double h_conv = 40.0;     // W/(K m^2)
  double emissivity = 0.8;  // in [0,1]
  TemperaturePath ambient;
};
using BoundaryCondition = std::variant<DirichletBC, AdiabaticBC, MixedBC>;

struct SimDomain {
  std::vector<Layer> layers;
  BoundaryCondition bc_low;   // x = 0 face
  BoundaryCondition bc_high;  // x = L face
  double theta_init_c = 20.0;
  double c_init = 0.0;

  void validate() const;
};

struct SolverOptions {
  double rel_tol = 1e-5;
  double abs_tol_theta = 1e-3;  // K
  double abs_tol_c = 1e-6;
  double dt_init = 0.1;
  double dt_min = 1e-7;
  double dt_max = 1e4;
  double newton_tol = 1e-8;
  int newton_max_iter = 8;
  // order-scaled PI gains and step-size limiter
  double k_i = 0.15;
  double k_p = 0.2;
  double safety = 0.9;
  double growth_min = 0.2;
  double growth_max = 5.0;
  // > 0 disables the controller and marches with this constant step
  double fixed_dt = 0.0;
};

struct SimResult {
  std::vector<double> times;  // accepted times, starting at 0
  std::vector<double> dts;    // accepted step sizes
  std::vector<int> probe_cells;
  std::vector<std::vector<double>> probe_theta_k;  // [probe][time]
  std::vector<std::vector<double>> probe_c;        // [probe][time]
  std::vector<Eigen::VectorXd> theta_fields;       // filled if store_fields
  std::vector<Eigen::VectorXd> c_fields;
  bool store_fields = false;
  long clamp_events = 0;
  long monotonicity_events = 0;
  long newton_iterations = 0;
  long steps_accepted = 0;
  long steps_rejected = 0;
};

// 2x2 blocks of the tridiagonal state Jacobian; row order (theta, c).
struct JacobianBlocks {
  std::vector<Eigen::Matrix2d> diag;   // d f_i / d y_i
  std::vector<Eigen::Matrix2d> lower;  // d f_i / d y_{i-1}
  std::vector<Eigen::Matrix2d> upper;  // d f_i / d y_{i+1}
};

// Method-of-lines form y = (theta_0..theta_{N-1} [K], c_0..c_{N-1}).
class Semidiscretization {
 public:
  explicit Semidiscretization(SimDomain domain);

  Eigen::Index cells() const { return n_; }
  const SimDomain& domain() const { return domain_; }
  bool cell_is_epoxy(Eigen::Index i) const { return epoxy_[static_cast<std::size_t>(i)]; }
  double cell_width(Eigen::Index i) const { return dx_[static_cast<std::size_t>(i)]; }
  double cell_center(Eigen::Index i) const { return x_[static_cast<std::size_t>(i)]; }

  Eigen::VectorXd initial_state() const;
  void rhs(double t, const Eigen::VectorXd& y, Eigen::VectorXd& f) const;
  void jacobian(double t, const Eigen::VectorXd& y, JacobianBlocks& jac) const;

  // Path node times of both boundaries, ascending and unique.
  std::vector<double> breakpoints() const;

  // Heat capacity * density * width per cell (enthalpy weights).
  Eigen::VectorXd enthalpy_weights(const Eigen::VectorXd& y) const;

 private:
  SimDomain domain_;
  Eigen::Index n_ = 0;
  std::vector<double> dx_, x_;
  std::vector<bool> epoxy_;
  std::vector<std::size_t> layer_of_cell_;
};

struct DirkTableau {
  double gamma, a21, b1, b2, bhat1, bhat2, c1, c2;
};

// Two-stage stiffly accurate SDIRK of order 2 with embedded order-1 weights.
DirkTableau ellsiepen_tableau();

struct StepOutcome {
  Eigen::VectorXd y_new;
  double error = 0.0;  // weighted RMS embedded estimate
  bool newton_ok = false;
  int newton_iterations = 0;
};

StepOutcome step_dirk(const Semidiscretization& system, const Eigen::VectorXd& y, double t,
                      double dt, const SolverOptions& options);

SimResult integrate_adaptive(const Semidiscretization& system, const SolverOptions& options,
                             double t_end, const std::vector<int>& probe_cells,
                             bool store_fields = false);

// --- default curing scenario -------------------------------------------

// Oven temperature path: pre-cure hold 8 h at 60 degC, post-cure 4 h at
// 120 degC, cool-down 2 h at 20 degC, joined by 10-minute linear ramps.
TemperaturePath default_curing_path();

struct ScenarioOptions {
  double h_c = 0.0;  // J/kg, required (no physical default exists)
  constitutive::AllParams epoxy = constitutive::reference_params();
  double rho_ref = 1100.0;
  double epoxy_thickness = 0.03;  // m
  double base_thickness = 0.005;  // m
  int epoxy_cells = 40;
  int base_cells = 8;
  double h_conv = 40.0;
  double emissivity = 0.8;
  TemperaturePath oven = default_curing_path();
  SolverOptions solver;
  bool store_fields = false;
};

// Aluminum base on a Dirichlet oven path below, epoxy layer with a mixed
// convective-radiative boundary above; probe at the top epoxy cell.
SimDomain default_domain(const ScenarioOptions& options);

SimResult run_default_scenario(const ScenarioOptions& options);

}  // namespace cureuq::simulate
