#pragma once

// Constitutive relations for thermo-chemical epoxy curing:
// glass transition temperature, curing kinetics, thermo-chemical
// deformation, specific heat capacity, and thermal conductivity,
// together with their analytic derivatives with respect to state
// (temperature, degree of cure) and material parameters.
//
// Unit conventions: temperatures are carried in Kelvin inside CuringState
// (the Arrhenius factor needs an absolute scale); the relations themselves
// and all parameter tables are expressed in degrees Celsius. Conversion
// happens exactly once, at the CuringState boundary.

#include <stdexcept>
#include <string>
#include <vector>

namespace cureuq::constitutive {

inline constexpr double kelvin_offset = 273.15;
inline constexpr double gas_constant = 8.314;  // J/(mol K)

inline double to_kelvin(double theta_c) { return theta_c + kelvin_offset; }
inline double to_celsius(double theta_k) { return theta_k - kelvin_offset; }

// DiBenedetto glass transition model: r_f curvature, endpoints in degC.
struct GlassTransitionParams {
  double r_f = 0.0;
  double theta_g0 = 0.0;  // degC, uncured
  double theta_g1 = 0.0;  // degC, fully cured

  void validate() const {
    if (r_f <= 0.0) throw std::invalid_argument("glass transition: r_f must be > 0");
    if (theta_g1 <= theta_g0)
      throw std::invalid_argument("glass transition: theta_g1 must exceed theta_g0");
  }
};

// Simplified Kamal-Sourour kinetics with Arrhenius prefactor and tanh
// diffusion cutoff.
struct CuringKineticsParams {
  double a_pre = 0.0;  // 1/s
  double e_act = 0.0;  // J/mol
  double g_fac = 0.0;  // dimensionless, in (0,1)
  double n_exp = 0.0;  // dimensionless order
  double b_d = 0.0;    // K, diffusion width

  void validate() const {
    if (a_pre <= 0.0) throw std::invalid_argument("kinetics: a_pre must be > 0");
    if (e_act <= 0.0) throw std::invalid_argument("kinetics: e_act must be > 0");
    if (g_fac <= 0.0 || g_fac >= 1.0)
      throw std::invalid_argument("kinetics: g_fac must be in (0,1)");
    if (n_exp <= 0.0) throw std::invalid_argument("kinetics: n_exp must be > 0");
    if (b_d <= 0.0) throw std::invalid_argument("kinetics: b_d must be > 0");
  }
};

// Thermo-chemical deformation J = rho_ref/rho. The glassy/rubbery branch
// switch is a smooth maximum with curvature d_smooth; exponents reach
// magnitude ~1e3 at d_smooth = 1e-4, so evaluation must stay in
// log-sum-exp form.
struct ShrinkageParams {
  double alpha_theta = 0.0;    // 1/K, rubbery thermal expansion
  double alpha_c = 0.0;        // -, chemical shrinkage
  double alpha_theta_c = 0.0;  // 1/K, coupling
  double alpha_theta_g = 0.0;  // 1/K, glassy thermal expansion
  double d_smooth = 1e-4;      // -, smooth-max curvature
  double theta_ref = 20.0;     // degC

  void validate() const {
    if (d_smooth <= 0.0) throw std::invalid_argument("shrinkage: d_smooth must be > 0");
    if (!(alpha_theta > alpha_theta_g && alpha_theta_g > 0.0))
      throw std::invalid_argument("shrinkage: need alpha_theta > alpha_theta_g > 0");
  }
};

// Specific heat: two linear branches joined by tanh at theta_g.
struct HeatCapacityParams {
  double a1 = 0.0;  // J/(kg K)
  double a2 = 0.0;  // J/(kg K^2)
  double a3 = 0.0;  // J/(kg K)
  double a4 = 0.0;  // J/(kg K^2)
  double a5 = 0.0;  // 1/K, transition slope

  void validate() const {
    if (a5 <= 0.0) throw std::invalid_argument("heat capacity: a5 must be > 0");
  }
};

// Thermal conductivity: rule of mixture between cured (b1) and uncured
// smooth-max branch pair (b2 | b3 (theta-theta_ref)/theta_ref + b4).
struct ConductivityParams {
  double b1 = 0.0;  // W/(m K)
  double b2 = 0.0;  // W/(m K)
  double b3 = 0.0;  // W/(m K)
  double b4 = 0.0;  // W/(m K)
  double d_tilde = 0.01;   // W/(m K), smooth-max curvature
  double theta_ref = 20.0; // degC

  void validate() const {
    if (d_tilde <= 0.0) throw std::invalid_argument("conductivity: d_tilde must be > 0");
    if (b1 <= 0.0 || b2 <= 0.0 || b4 <= 0.0)
      throw std::invalid_argument("conductivity: b1, b2, b4 must be > 0");
  }
};

// Material point state. theta_k in Kelvin, c in [0,1].
struct CuringState {
  double theta_k = kelvin_offset;
  double c = 0.0;

  static CuringState from_celsius(double theta_c, double c) {
    return CuringState{to_kelvin(theta_c), c};
  }
  double theta_c() const { return to_celsius(theta_k); }

  void validate() const {
    if (theta_k <= 0.0) throw std::invalid_argument("state: theta must be > 0 K");
    if (c < 0.0 || c > 1.0) throw std::invalid_argument("state: c must be in [0,1]");
  }
};

// Value together with partial derivatives with respect to the state.
// d_theta is per Kelvin (identical to per degC for differences).
struct StateGrad {
  double value = 0.0;
  double d_theta = 0.0;
  double d_c = 0.0;
};

// --- glass transition -------------------------------------------------

// Theta_G(c) in degC.
double glass_transition(double c, const GlassTransitionParams& p);

// dTheta_G/dc at fixed parameters.
double glass_transition_dc(double c, const GlassTransitionParams& p);

// Partials wrt (r_f, theta_g0, theta_g1).
std::vector<double> glass_transition_param_grad(double c, const GlassTransitionParams& p);

// --- curing kinetics ---------------------------------------------------

// Chemically-driven factor f_c [1/s]; autocatalytic base clamped at zero
// before the non-integer power so the rate vanishes at full cure instead
// of producing NaN.
double chemical_factor(const CuringState& s, const CuringKineticsParams& kp);

// Partials of f_c with respect to (a_pre, e_act, g_fac, n_exp); b_d does
// not enter the chemically-driven factor.
std::vector<double> chemical_factor_param_grad(const CuringState& s,
                                               const CuringKineticsParams& kp);

// Diffusion cutoff f_d in (0,1); equals 1/2 exactly at theta == theta_g(c).
double diffusion_factor(const CuringState& s, const CuringKineticsParams& kp,
                        const GlassTransitionParams& gp);

// cdot = f_c * f_d >= 0.
double curing_rate(const CuringState& s, const CuringKineticsParams& kp,
                   const GlassTransitionParams& gp);

StateGrad curing_rate_grad(const CuringState& s, const CuringKineticsParams& kp,
                           const GlassTransitionParams& gp);

// --- deformation -------------------------------------------------------

// Volume ratio J_thetac = rho_ref / rho.
double deformation(const CuringState& s, const ShrinkageParams& sp,
                   const GlassTransitionParams& gp);

StateGrad deformation_grad(const CuringState& s, const ShrinkageParams& sp,
                           const GlassTransitionParams& gp);

// --- specific heat -----------------------------------------------------

double specific_heat(const CuringState& s, const HeatCapacityParams& hp,
                     const GlassTransitionParams& gp);

StateGrad specific_heat_grad(const CuringState& s, const HeatCapacityParams& hp,
                             const GlassTransitionParams& gp);

// --- conductivity ------------------------------------------------------

double conductivity(const CuringState& s, const ConductivityParams& cp);

StateGrad conductivity_grad(const CuringState& s, const ConductivityParams& cp);

// --- parameter gradients -----------------------------------------------

enum class Relation { glass_transition, curing_rate, deformation, specific_heat, conductivity };

struct AllParams {
  GlassTransitionParams glass;
  CuringKineticsParams kinetics;
  ShrinkageParams shrinkage;
  HeatCapacityParams heat;
  ConductivityParams cond;
};

// Names of the partials returned by param_gradient, in order: the
// relation's own parameters first, then the glass transition parameters
// where theta_g(c) enters the relation.
std::vector<std::string> param_gradient_names(Relation r);

// Analytic partials of the relation output with respect to its parameters,
// chain rule applied through theta_g(c).
std::vector<double> param_gradient(Relation r, const CuringState& s, const AllParams& p);

// Identified parameter values of the reference epoxy; used as defaults
// by the in-silico generators and the simulation scenario.
AllParams reference_params();

}  // namespace cureuq::constitutive
