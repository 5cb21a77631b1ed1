#include "cureuq/constitutive.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cureuq::constitutive {

namespace {

// Smooth maximum d*ln(exp(x1/d) + exp(x2/d)) in max-shifted form, with the
// softmax weights needed by the derivatives. Never overflows: the shifted
// exponent is <= 0.
struct SmoothMax {
  double value;
  double w1;  // d(value)/dx1
  double w2;  // d(value)/dx2
};

SmoothMax smooth_max(double x1, double x2, double d) {
  const double m = std::max(x1, x2);
  const double e1 = std::exp((x1 - m) / d);
  const double e2 = std::exp((x2 - m) / d);
  const double s = e1 + e2;
  return {m + d * std::log(s), e1 / s, e2 / s};
}

}  // namespace

// The interpolation weight phi = r_f c / (1 - (1 - r_f) c) is evaluated
// with the denominator arranged as (1 - c) + r_f c and the result as a
// convex combination, so both endpoint identities hold bit-exactly.
double glass_transition(double c, const GlassTransitionParams& p) {
  const double denom = (1.0 - c) + p.r_f * c;
  if (denom <= 0.0)
    throw std::domain_error("glass_transition: denominator 1-(1-r_f)c <= 0");
  const double phi = p.r_f * c / denom;
  return (1.0 - phi) * p.theta_g0 + phi * p.theta_g1;
}

double glass_transition_dc(double c, const GlassTransitionParams& p) {
  const double denom = (1.0 - c) + p.r_f * c;
  // dphi/dc = r_f / denom^2
  return p.r_f / (denom * denom) * (p.theta_g1 - p.theta_g0);
}

std::vector<double> glass_transition_param_grad(double c, const GlassTransitionParams& p) {
  const double denom = (1.0 - c) + p.r_f * c;
  const double phi = p.r_f * c / denom;
  const double dphi_drf = c * (1.0 - c) / (denom * denom);
  return {dphi_drf * (p.theta_g1 - p.theta_g0),  // d/dr_f
          1.0 - phi,                             // d/dtheta_g0
          phi};                                  // d/dtheta_g1
}

double chemical_factor(const CuringState& s, const CuringKineticsParams& kp) {
  const double base = std::max(kp.g_fac + (1.0 - kp.g_fac) * s.c - s.c * s.c, 0.0);
  if (base == 0.0) return 0.0;
  return kp.a_pre * std::exp(-kp.e_act / (gas_constant * s.theta_k)) *
         std::pow(base, kp.n_exp);
}

std::vector<double> chemical_factor_param_grad(const CuringState& s,
                                               const CuringKineticsParams& kp) {
  const double base = kp.g_fac + (1.0 - kp.g_fac) * s.c - s.c * s.c;
  const double arr = kp.a_pre * std::exp(-kp.e_act / (gas_constant * s.theta_k));
  std::vector<double> g(4, 0.0);
  if (base <= 0.0) return g;
  const double bpow = std::pow(base, kp.n_exp);
  const double fc = arr * bpow;
  g[0] = fc / kp.a_pre;
  g[1] = -fc / (gas_constant * s.theta_k);
  g[2] = arr * kp.n_exp * std::pow(base, kp.n_exp - 1.0) * (1.0 - s.c);
  g[3] = fc * std::log(base);
  return g;
}

double diffusion_factor(const CuringState& s, const CuringKineticsParams& kp,
                        const GlassTransitionParams& gp) {
  const double u = (glass_transition(s.c, gp) - s.theta_c()) / kp.b_d;
  return 0.5 * (1.0 - std::tanh(u));
}

double curing_rate(const CuringState& s, const CuringKineticsParams& kp,
                   const GlassTransitionParams& gp) {
  return chemical_factor(s, kp) * diffusion_factor(s, kp, gp);
}

StateGrad curing_rate_grad(const CuringState& s, const CuringKineticsParams& kp,
                           const GlassTransitionParams& gp) {
  const double base = kp.g_fac + (1.0 - kp.g_fac) * s.c - s.c * s.c;
  const double arr = kp.a_pre * std::exp(-kp.e_act / (gas_constant * s.theta_k));
  double fc = 0.0, dfc_dth = 0.0, dfc_dc = 0.0;
  if (base > 0.0) {
    fc = arr * std::pow(base, kp.n_exp);
    dfc_dth = fc * kp.e_act / (gas_constant * s.theta_k * s.theta_k);
    dfc_dc = arr * kp.n_exp * std::pow(base, kp.n_exp - 1.0) *
             (1.0 - kp.g_fac - 2.0 * s.c);
  }
  const double u = (glass_transition(s.c, gp) - s.theta_c()) / kp.b_d;
  const double t = std::tanh(u);
  const double fd = 0.5 * (1.0 - t);
  const double sech2 = 1.0 - t * t;
  const double dfd_du = -0.5 * sech2;
  const double dfd_dth = dfd_du * (-1.0 / kp.b_d);
  const double dfd_dc = dfd_du * glass_transition_dc(s.c, gp) / kp.b_d;
  return {fc * fd, dfc_dth * fd + fc * dfd_dth, dfc_dc * fd + fc * dfd_dc};
}

namespace {

// Branch arguments of the deformation smooth maximum.
struct DeformBranches {
  double x1, x2;       // rubbery / glassy branch
  double theta_g;      // degC
  double vartheta;     // theta - theta_ref, degC
};

DeformBranches deform_branches(const CuringState& s, const ShrinkageParams& sp,
                               const GlassTransitionParams& gp) {
  const double vth = s.theta_c() - sp.theta_ref;
  const double tg = glass_transition(s.c, gp);
  const double x1 = sp.alpha_theta * vth;
  const double x2 = sp.alpha_theta_g * vth +
                    (sp.alpha_theta - sp.alpha_theta_g) * (tg - sp.theta_ref);
  return {x1, x2, tg, vth};
}

}  // namespace

double deformation(const CuringState& s, const ShrinkageParams& sp,
                   const GlassTransitionParams& gp) {
  const auto b = deform_branches(s, sp, gp);
  const auto sm = smooth_max(b.x1, b.x2, sp.d_smooth);
  return sm.value - sp.alpha_c * s.c - sp.alpha_theta_c * b.vartheta * s.c + 1.0;
}

StateGrad deformation_grad(const CuringState& s, const ShrinkageParams& sp,
                           const GlassTransitionParams& gp) {
  const auto b = deform_branches(s, sp, gp);
  const auto sm = smooth_max(b.x1, b.x2, sp.d_smooth);
  const double dtg_dc = glass_transition_dc(s.c, gp);
  const double dx1_dth = sp.alpha_theta;
  const double dx2_dth = sp.alpha_theta_g;
  const double dx2_dc = (sp.alpha_theta - sp.alpha_theta_g) * dtg_dc;
  StateGrad g;
  g.value = sm.value - sp.alpha_c * s.c - sp.alpha_theta_c * b.vartheta * s.c + 1.0;
  g.d_theta = sm.w1 * dx1_dth + sm.w2 * dx2_dth - sp.alpha_theta_c * s.c;
  g.d_c = sm.w2 * dx2_dc - sp.alpha_c - sp.alpha_theta_c * b.vartheta;
  return g;
}

double specific_heat(const CuringState& s, const HeatCapacityParams& hp,
                     const GlassTransitionParams& gp) {
  const double th = s.theta_c();
  const double t = std::tanh(hp.a5 * (th - glass_transition(s.c, gp)));
  return hp.a1 + hp.a2 * th + (hp.a3 + hp.a4 * th) * t;
}

StateGrad specific_heat_grad(const CuringState& s, const HeatCapacityParams& hp,
                             const GlassTransitionParams& gp) {
  const double th = s.theta_c();
  const double tg = glass_transition(s.c, gp);
  const double t = std::tanh(hp.a5 * (th - tg));
  const double sech2 = 1.0 - t * t;
  StateGrad g;
  g.value = hp.a1 + hp.a2 * th + (hp.a3 + hp.a4 * th) * t;
  g.d_theta = hp.a2 + hp.a4 * t + (hp.a3 + hp.a4 * th) * sech2 * hp.a5;
  g.d_c = -(hp.a3 + hp.a4 * th) * sech2 * hp.a5 * glass_transition_dc(s.c, gp);
  return g;
}

double conductivity(const CuringState& s, const ConductivityParams& cp) {
  const double th = s.theta_c();
  const double kb = cp.b3 * (th - cp.theta_ref) / cp.theta_ref + cp.b4;
  // ln(1/2 (e^{x1/d} + e^{x2/d})) = smooth_max(x1,x2)/d - ln 2
  const auto sm = smooth_max(cp.b2, kb, cp.d_tilde);
  const double uncured = sm.value - cp.d_tilde * std::numbers::ln2;
  return cp.b1 * s.c + uncured * (1.0 - s.c);
}

StateGrad conductivity_grad(const CuringState& s, const ConductivityParams& cp) {
  const double th = s.theta_c();
  const double kb = cp.b3 * (th - cp.theta_ref) / cp.theta_ref + cp.b4;
  const auto sm = smooth_max(cp.b2, kb, cp.d_tilde);
  const double uncured = sm.value - cp.d_tilde * std::numbers::ln2;
  StateGrad g;
  g.value = cp.b1 * s.c + uncured * (1.0 - s.c);
  g.d_theta = sm.w2 * cp.b3 / cp.theta_ref * (1.0 - s.c);
  g.d_c = cp.b1 - uncured;
  return g;
}

std::vector<std::string> param_gradient_names(Relation r) {
  const std::vector<std::string> tg = {"r_f", "theta_g0", "theta_g1"};
  switch (r) {
    case Relation::glass_transition:
      return tg;
    case Relation::curing_rate: {
      std::vector<std::string> n = {"a_pre", "e_act", "g_fac", "n_exp", "b_d"};
      n.insert(n.end(), tg.begin(), tg.end());
      return n;
    }
    case Relation::deformation: {
      std::vector<std::string> n = {"alpha_theta", "alpha_c", "alpha_theta_c",
                                    "alpha_theta_g"};
      n.insert(n.end(), tg.begin(), tg.end());
      return n;
    }
    case Relation::specific_heat: {
      std::vector<std::string> n = {"a1", "a2", "a3", "a4", "a5"};
      n.insert(n.end(), tg.begin(), tg.end());
      return n;
    }
    case Relation::conductivity:
      return {"b1", "b2", "b3", "b4"};
  }
  throw std::invalid_argument("param_gradient_names: unknown relation");
}

std::vector<double> param_gradient(Relation r, const CuringState& s, const AllParams& p) {
  switch (r) {
    case Relation::glass_transition:
      return glass_transition_param_grad(s.c, p.glass);

    case Relation::curing_rate: {
      const auto& kp = p.kinetics;
      const double base = kp.g_fac + (1.0 - kp.g_fac) * s.c - s.c * s.c;
      const double arr = kp.a_pre * std::exp(-kp.e_act / (gas_constant * s.theta_k));
      const double bpow = base > 0.0 ? std::pow(base, kp.n_exp) : 0.0;
      const double fc = arr * bpow;
      const double u = (glass_transition(s.c, p.glass) - s.theta_c()) / kp.b_d;
      const double t = std::tanh(u);
      const double fd = 0.5 * (1.0 - t);
      const double dfd_du = -0.5 * (1.0 - t * t);
      std::vector<double> g(8, 0.0);
      g[0] = fc / kp.a_pre * fd;                                     // a_pre
      g[1] = -fc / (gas_constant * s.theta_k) * fd;                  // e_act
      if (base > 0.0) {
        g[2] = arr * kp.n_exp * std::pow(base, kp.n_exp - 1.0) * (1.0 - s.c) * fd;  // g_fac
        g[3] = fc * std::log(base) * fd;                             // n_exp
      }
      g[4] = fc * dfd_du * (-u / kp.b_d);                            // b_d
      const auto tg_grad = glass_transition_param_grad(s.c, p.glass);
      for (int i = 0; i < 3; ++i) g[5 + i] = fc * dfd_du / kp.b_d * tg_grad[i];
      return g;
    }

    case Relation::deformation: {
      const auto& sp = p.shrinkage;
      const auto b = deform_branches(s, sp, p.glass);
      const auto sm = smooth_max(b.x1, b.x2, sp.d_smooth);
      std::vector<double> g(7, 0.0);
      g[0] = sm.w1 * b.vartheta + sm.w2 * (b.theta_g - sp.theta_ref);  // alpha_theta
      g[1] = -s.c;                                                    // alpha_c
      g[2] = -b.vartheta * s.c;                                       // alpha_theta_c
      g[3] = sm.w2 * (b.vartheta - (b.theta_g - sp.theta_ref));       // alpha_theta_g
      const double dJ_dtg = sm.w2 * (sp.alpha_theta - sp.alpha_theta_g);
      const auto tg_grad = glass_transition_param_grad(s.c, p.glass);
      for (int i = 0; i < 3; ++i) g[4 + i] = dJ_dtg * tg_grad[i];
      return g;
    }

    case Relation::specific_heat: {
      const auto& hp = p.heat;
      const double th = s.theta_c();
      const double tg = glass_transition(s.c, p.glass);
      const double t = std::tanh(hp.a5 * (th - tg));
      const double sech2 = 1.0 - t * t;
      std::vector<double> g(8, 0.0);
      g[0] = 1.0;
      g[1] = th;
      g[2] = t;
      g[3] = th * t;
      g[4] = (hp.a3 + hp.a4 * th) * sech2 * (th - tg);
      const double dcp_dtg = -(hp.a3 + hp.a4 * th) * sech2 * hp.a5;
      const auto tg_grad = glass_transition_param_grad(s.c, p.glass);
      for (int i = 0; i < 3; ++i) g[5 + i] = dcp_dtg * tg_grad[i];
      return g;
    }

    case Relation::conductivity: {
      const auto& cp = p.cond;
      const double th = s.theta_c();
      const double kb = cp.b3 * (th - cp.theta_ref) / cp.theta_ref + cp.b4;
      const auto sm = smooth_max(cp.b2, kb, cp.d_tilde);
      std::vector<double> g(4, 0.0);
      g[0] = s.c;
      g[1] = sm.w1 * (1.0 - s.c);
      g[2] = sm.w2 * (th - cp.theta_ref) / cp.theta_ref * (1.0 - s.c);
      g[3] = sm.w2 * (1.0 - s.c);
      return g;
    }
  }
  throw std::invalid_argument("param_gradient: unknown relation");
}

AllParams reference_params() {
  AllParams p;
  p.glass = {4.4103e-01, -4.1895966e+01, 1.403569e+02};
  p.kinetics = {5.01265e+07, 7.6594406e+04, 3.517027e-01, 1.4075975, 4.83759159};
  p.shrinkage.alpha_theta = 7.5878502e-04;
  p.shrinkage.alpha_c = 5.413657e-02;
  p.shrinkage.alpha_theta_c = 2.462367e-04;
  p.shrinkage.alpha_theta_g = 6.96241016e-04;
  p.heat = {1.52039194e+03, 3.18668457, 2.91465105e+02, -1.0017558, 6.688759e-02};
  p.cond.b1 = 1.8581859821e-01;
  p.cond.b2 = 2.7102864e-01;
  p.cond.b3 = 2.15493632e-02;
  p.cond.b4 = 1.94998300e-01;
  return p;
}

}  // namespace cureuq::constitutive
