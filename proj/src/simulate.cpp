#include "cureuq/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace cureuq::simulate {

using constitutive::CuringState;

double TemperaturePath::operator()(double t) const {
  if (times.empty()) throw std::invalid_argument("temperature path is empty");
  if (t <= times.front()) return theta_c.front();
  if (t >= times.back()) return theta_c.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto j = static_cast<std::size_t>(it - times.begin());
  const double w = (t - times[j - 1]) / (times[j] - times[j - 1]);
  return theta_c[j - 1] + w * (theta_c[j] - theta_c[j - 1]);
}

void TemperaturePath::validate() const {
  if (times.size() != theta_c.size() || times.empty())
    throw std::invalid_argument("temperature path: size mismatch or empty");
  for (std::size_t j = 1; j < times.size(); ++j)
    if (times[j] <= times[j - 1])
      throw std::invalid_argument("temperature path: node times must increase strictly");
}

InertMaterial aluminum() { return {2700.0, 897.0, 235.0}; }

void SimDomain::validate() const {
  if (layers.empty()) throw std::invalid_argument("domain: no layers");
  int total = 0;
  for (const auto& layer : layers) {
    if (layer.thickness <= 0.0) throw std::invalid_argument("domain: layer thickness <= 0");
    if (layer.cells < 1) throw std::invalid_argument("domain: layer needs >= 1 cell");
    total += layer.cells;
    if (const auto* inert = std::get_if<InertMaterial>(&layer.material)) {
      if (inert->rho <= 0.0 || inert->cp <= 0.0 || inert->kappa <= 0.0)
        throw std::invalid_argument("domain: inert material constants must be > 0");
    } else {
      const auto& ep = std::get<EpoxyMaterial>(layer.material);
      if (ep.rho_ref <= 0.0) throw std::invalid_argument("domain: rho_ref must be > 0");
    }
  }
  if (total < 3) throw std::invalid_argument("domain: needs >= 3 cells");
  auto check_bc = [](const BoundaryCondition& bc) {
    if (const auto* d = std::get_if<DirichletBC>(&bc)) d->path.validate();
    if (const auto* m = std::get_if<MixedBC>(&bc)) {
      m->ambient.validate();
      if (m->emissivity < 0.0 || m->emissivity > 1.0)
        throw std::invalid_argument("domain: emissivity must be in [0,1]");
    }
  };
  check_bc(bc_low);
  check_bc(bc_high);
}

Semidiscretization::Semidiscretization(SimDomain domain) : domain_(std::move(domain)) {
  domain_.validate();
  double x = 0.0;
  for (std::size_t l = 0; l < domain_.layers.size(); ++l) {
    const auto& layer = domain_.layers[l];
    const double dx = layer.thickness / layer.cells;
    for (int j = 0; j < layer.cells; ++j) {
      dx_.push_back(dx);
      x_.push_back(x + (j + 0.5) * dx);
      epoxy_.push_back(std::holds_alternative<EpoxyMaterial>(layer.material));
      layer_of_cell_.push_back(l);
    }
    x += layer.thickness;
  }
  n_ = static_cast<Eigen::Index>(dx_.size());
}

Eigen::VectorXd Semidiscretization::initial_state() const {
  Eigen::VectorXd y(2 * n_);
  y.head(n_).setConstant(constitutive::to_kelvin(domain_.theta_init_c));
  for (Eigen::Index i = 0; i < n_; ++i)
    y[n_ + i] = epoxy_[static_cast<std::size_t>(i)] ? domain_.c_init : 0.0;
  return y;
}

namespace {

// Per-cell evaluated properties and their state derivatives.
struct CellProps {
  double rho, cp, kappa, rate, src;     // src = h_c/cp * rate (epoxy)
  double drho_dT, drho_dc;
  double dcp_dT, dcp_dc;
  double dk_dT, dk_dc;
  double drate_dT, drate_dc;
};

CellProps eval_cell(const EpoxyMaterial& m, double theta_k, double c) {
  const CuringState s{theta_k, std::clamp(c, 0.0, 1.0)};
  const auto cp = constitutive::specific_heat_grad(s, m.params.heat, m.params.glass);
  const auto kap = constitutive::conductivity_grad(s, m.params.cond);
  const auto jj = constitutive::deformation_grad(s, m.params.shrinkage, m.params.glass);
  const auto rate = constitutive::curing_rate_grad(s, m.params.kinetics, m.params.glass);
  CellProps p{};
  p.cp = cp.value;
  p.dcp_dT = cp.d_theta;
  p.dcp_dc = cp.d_c;
  p.kappa = kap.value;
  p.dk_dT = kap.d_theta;
  p.dk_dc = kap.d_c;
  p.rho = m.rho_ref / jj.value;
  p.drho_dT = -m.rho_ref / (jj.value * jj.value) * jj.d_theta;
  p.drho_dc = -m.rho_ref / (jj.value * jj.value) * jj.d_c;
  // full cure: the autocatalytic base is zero and stays zero
  const bool saturated = c >= 1.0;
  p.rate = saturated ? 0.0 : rate.value;
  p.drate_dT = saturated ? 0.0 : rate.d_theta;
  p.drate_dc = saturated ? 0.0 : rate.d_c;
  return p;
}

CellProps eval_cell(const InertMaterial& m) {
  CellProps p{};
  p.rho = m.rho;
  p.cp = m.cp;
  p.kappa = m.kappa;
  return p;
}

struct FaceFlux {
  double g = 0.0;          // kappa dT/dx at the face, +x orientation
  double dg_dTm = 0.0;     // wrt the cell on the minus side
  double dg_dTp = 0.0;     // plus side
  double dg_dkm = 0.0;     // wrt kappa of minus cell
  double dg_dkp = 0.0;
};

FaceFlux interior_flux(double theta_m, double theta_p, double kappa_m, double kappa_p,
                       double dx_m, double dx_p) {
  const double denom = dx_m / kappa_m + dx_p / kappa_p;
  const double span = dx_m + dx_p;
  const double kf = span / denom;
  const double delta = 0.5 * span;
  FaceFlux f;
  f.g = kf * (theta_p - theta_m) / delta;
  f.dg_dTm = -kf / delta;
  f.dg_dTp = kf / delta;
  const double dkf_dkm = span * dx_m / (denom * denom * kappa_m * kappa_m);
  const double dkf_dkp = span * dx_p / (denom * denom * kappa_p * kappa_p);
  f.dg_dkm = dkf_dkm * (theta_p - theta_m) / delta;
  f.dg_dkp = dkf_dkp * (theta_p - theta_m) / delta;
  return f;
}

// Boundary flux at a face; low = true for the x = 0 face. Returns G (+x
// oriented) and its derivative with respect to the adjacent cell state.
struct BoundaryFlux {
  double g = 0.0;
  double dg_dT = 0.0;  // wrt the boundary cell temperature
  double dg_dk = 0.0;  // wrt the boundary cell conductivity
};

BoundaryFlux boundary_flux(const BoundaryCondition& bc, bool low, double t, double theta_cell,
                           double kappa_cell, double dx_cell) {
  BoundaryFlux out;
  if (std::holds_alternative<AdiabaticBC>(bc)) return out;
  if (const auto* d = std::get_if<DirichletBC>(&bc)) {
    const double theta_b = constitutive::to_kelvin((d->path)(t));
    const double half = 0.5 * dx_cell;
    if (low) {
      // G approximates kappa dT/dx between boundary value and cell center
      out.g = kappa_cell * (theta_cell - theta_b) / half;
      out.dg_dT = kappa_cell / half;
      out.dg_dk = (theta_cell - theta_b) / half;
    } else {
      out.g = kappa_cell * (theta_b - theta_cell) / half;
      out.dg_dT = -kappa_cell / half;
      out.dg_dk = (theta_b - theta_cell) / half;
    }
    return out;
  }
  const auto& m = std::get<MixedBC>(bc);
  const double theta_inf = constitutive::to_kelvin(m.ambient(t));
  const double q_out = m.h_conv * (theta_cell - theta_inf) +
                       stefan_boltzmann * m.emissivity *
                           (std::pow(theta_cell, 4) - std::pow(theta_inf, 4));
  const double dq_dT = m.h_conv + 4.0 * stefan_boltzmann * m.emissivity * std::pow(theta_cell, 3);
  // heat loss leaves in -x at the low face and +x at the high face
  out.g = low ? q_out : -q_out;
  out.dg_dT = low ? dq_dT : -dq_dT;
  return out;
}

}  // namespace

void Semidiscretization::rhs(double t, const Eigen::VectorXd& y, Eigen::VectorXd& f) const {
  const auto n = n_;
  f.resize(2 * n);
  std::vector<CellProps> props(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& layer = domain_.layers[layer_of_cell_[static_cast<std::size_t>(i)]];
    props[static_cast<std::size_t>(i)] =
        epoxy_[static_cast<std::size_t>(i)]
            ? eval_cell(std::get<EpoxyMaterial>(layer.material), y[i], y[n + i])
            : eval_cell(std::get<InertMaterial>(layer.material));
  }

  // face fluxes G (+x orientation), n+1 faces
  std::vector<double> g(static_cast<std::size_t>(n) + 1);
  {
    const auto& p0 = props.front();
    g[0] = boundary_flux(domain_.bc_low, true, t, y[0], p0.kappa, dx_.front()).g;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      const auto& pm = props[static_cast<std::size_t>(i)];
      const auto& pp = props[static_cast<std::size_t>(i) + 1];
      g[static_cast<std::size_t>(i) + 1] =
          interior_flux(y[i], y[i + 1], pm.kappa, pp.kappa, dx_[static_cast<std::size_t>(i)],
                        dx_[static_cast<std::size_t>(i) + 1])
              .g;
    }
    const auto& pn = props.back();
    g[static_cast<std::size_t>(n)] =
        boundary_flux(domain_.bc_high, false, t, y[n - 1], pn.kappa, dx_.back()).g;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = props[static_cast<std::size_t>(i)];
    const double m = p.rho * p.cp * dx_[static_cast<std::size_t>(i)];
    double dtheta = (g[static_cast<std::size_t>(i) + 1] - g[static_cast<std::size_t>(i)]) / m;
    if (epoxy_[static_cast<std::size_t>(i)]) {
      const auto& layer = domain_.layers[layer_of_cell_[static_cast<std::size_t>(i)]];
      const double h_c = std::get<EpoxyMaterial>(layer.material).h_c;
      dtheta += h_c / p.cp * p.rate;
      f[n + i] = p.rate;
    } else {
      f[n + i] = 0.0;
    }
    f[i] = dtheta;
  }
}

void Semidiscretization::jacobian(double t, const Eigen::VectorXd& y, JacobianBlocks& jac) const {
  const auto n = n_;
  jac.diag.assign(static_cast<std::size_t>(n), Eigen::Matrix2d::Zero());
  jac.lower.assign(static_cast<std::size_t>(n), Eigen::Matrix2d::Zero());
  jac.upper.assign(static_cast<std::size_t>(n), Eigen::Matrix2d::Zero());

  std::vector<CellProps> props(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& layer = domain_.layers[layer_of_cell_[static_cast<std::size_t>(i)]];
    props[static_cast<std::size_t>(i)] =
        epoxy_[static_cast<std::size_t>(i)]
            ? eval_cell(std::get<EpoxyMaterial>(layer.material), y[i], y[n + i])
            : eval_cell(std::get<InertMaterial>(layer.material));
  }

  // face fluxes and their derivatives wrt adjacent (theta, kappa)
  std::vector<FaceFlux> face(static_cast<std::size_t>(n) + 1);
  {
    const auto b0 = boundary_flux(domain_.bc_low, true, t, y[0], props.front().kappa, dx_.front());
    face[0].g = b0.g;
    face[0].dg_dTp = b0.dg_dT;  // "plus" side is cell 0
    face[0].dg_dkp = b0.dg_dk;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      face[static_cast<std::size_t>(i) + 1] = interior_flux(
          y[i], y[i + 1], props[static_cast<std::size_t>(i)].kappa,
          props[static_cast<std::size_t>(i) + 1].kappa, dx_[static_cast<std::size_t>(i)],
          dx_[static_cast<std::size_t>(i) + 1]);
    }
    const auto bn = boundary_flux(domain_.bc_high, false, t, y[n - 1], props.back().kappa,
                                  dx_.back());
    face[static_cast<std::size_t>(n)].g = bn.g;
    face[static_cast<std::size_t>(n)].dg_dTm = bn.dg_dT;  // "minus" side is cell n-1
    face[static_cast<std::size_t>(n)].dg_dkm = bn.dg_dk;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const auto& p = props[si];
    const double m = p.rho * p.cp * dx_[si];
    const double gdiff = face[si + 1].g - face[si].g;

    const bool is_ep = epoxy_[si];
    double h_c = 0.0;
    if (is_ep) {
      const auto& layer = domain_.layers[layer_of_cell_[si]];
      h_c = std::get<EpoxyMaterial>(layer.material).h_c;
    }

    // d(theta_dot_i)/d(own theta, own c): flux derivatives through theta_i
    // and kappa_i, mass derivatives through rho and cp, source through rate
    // and cp.
    const double dgdiff_dTi = face[si + 1].dg_dTm + face[si + 1].dg_dkm * p.dk_dT -
                              (face[si].dg_dTp + face[si].dg_dkp * p.dk_dT);
    const double dgdiff_dci = face[si + 1].dg_dkm * p.dk_dc - face[si].dg_dkp * p.dk_dc;
    const double dm_dTi = (p.drho_dT * p.cp + p.rho * p.dcp_dT) * dx_[si];
    const double dm_dci = (p.drho_dc * p.cp + p.rho * p.dcp_dc) * dx_[si];

    Eigen::Matrix2d d = Eigen::Matrix2d::Zero();
    d(0, 0) = dgdiff_dTi / m - gdiff * dm_dTi / (m * m);
    d(0, 1) = dgdiff_dci / m - gdiff * dm_dci / (m * m);
    if (is_ep) {
      d(0, 0) += h_c * (p.drate_dT * p.cp - p.rate * p.dcp_dT) / (p.cp * p.cp);
      d(0, 1) += h_c * (p.drate_dc * p.cp - p.rate * p.dcp_dc) / (p.cp * p.cp);
      d(1, 0) = p.drate_dT;
      d(1, 1) = p.drate_dc;
    }
    jac.diag[si] = d;

    if (i > 0) {
      const auto& pm = props[si - 1];
      Eigen::Matrix2d lo = Eigen::Matrix2d::Zero();
      lo(0, 0) = -(face[si].dg_dTm + face[si].dg_dkm * pm.dk_dT) / m;
      lo(0, 1) = -(face[si].dg_dkm * pm.dk_dc) / m;
      jac.lower[si] = lo;
    }
    if (i + 1 < n) {
      const auto& pp = props[si + 1];
      Eigen::Matrix2d up = Eigen::Matrix2d::Zero();
      up(0, 0) = (face[si + 1].dg_dTp + face[si + 1].dg_dkp * pp.dk_dT) / m;
      up(0, 1) = (face[si + 1].dg_dkp * pp.dk_dc) / m;
      jac.upper[si] = up;
    }
  }
}

std::vector<double> Semidiscretization::breakpoints() const {
  std::set<double> pts;
  auto add = [&pts](const BoundaryCondition& bc) {
    if (const auto* d = std::get_if<DirichletBC>(&bc))
      pts.insert(d->path.times.begin(), d->path.times.end());
    if (const auto* m = std::get_if<MixedBC>(&bc))
      pts.insert(m->ambient.times.begin(), m->ambient.times.end());
  };
  add(domain_.bc_low);
  add(domain_.bc_high);
  return {pts.begin(), pts.end()};
}

Eigen::VectorXd Semidiscretization::enthalpy_weights(const Eigen::VectorXd& y) const {
  Eigen::VectorXd w(n_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const auto& layer = domain_.layers[layer_of_cell_[si]];
    const CellProps p = epoxy_[si]
                            ? eval_cell(std::get<EpoxyMaterial>(layer.material), y[i], y[n_ + i])
                            : eval_cell(std::get<InertMaterial>(layer.material));
    w[i] = p.rho * p.cp * dx_[si];
  }
  return w;
}

DirkTableau ellsiepen_tableau() {
  const double gamma = 1.0 - std::numbers::sqrt2 / 2.0;
  const double alpha_hat = 2.0 - 1.25 * std::numbers::sqrt2;
  DirkTableau t;
  t.gamma = gamma;
  t.a21 = 1.0 - gamma;
  t.b1 = 1.0 - gamma;
  t.b2 = gamma;
  t.bhat1 = 1.0 - alpha_hat;
  t.bhat2 = alpha_hat;
  t.c1 = gamma;
  t.c2 = 1.0;
  return t;
}

namespace {

// Solves (I - gamma dt J) dy = -residual with the block-tridiagonal state
// Jacobian, by block Thomas elimination.
class StageMatrix {
 public:
  StageMatrix(const JacobianBlocks& jac, double factor) {
    const auto n = jac.diag.size();
    diag_.resize(n);
    lower_.resize(n);
    upper_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      diag_[i] = Eigen::Matrix2d::Identity() - factor * jac.diag[i];
      lower_[i] = -factor * jac.lower[i];
      upper_[i] = -factor * jac.upper[i];
    }
  }

  // In-place factorization + solve; rhs holds interleaved (theta_i, c_i).
  bool solve(std::vector<Eigen::Vector2d>& rhs) {
    const auto n = diag_.size();
    std::vector<Eigen::Matrix2d> dinv(n);
    // forward elimination: rhs entries are updated in place
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Matrix2d d = diag_[i];
      if (i > 0) {
        d -= lower_[i] * dinv[i - 1] * upper_[i - 1];
        rhs[i] -= lower_[i] * (dinv[i - 1] * rhs[i - 1]);
      }
      const double det = d.determinant();
      if (!std::isfinite(det) || std::abs(det) < 1e-300) return false;
      dinv[i] = d.inverse();
    }
    // back substitution
    std::vector<Eigen::Vector2d> x(n);
    x[n - 1] = dinv[n - 1] * rhs[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
      x[i] = dinv[i] * (rhs[i] - upper_[i] * x[i + 1]);
    }
    rhs = std::move(x);
    return true;
  }

 private:
  std::vector<Eigen::Matrix2d> diag_, lower_, upper_;
};

// weighted RMS norm of a vector against the tolerance weights
double weighted_rms(const Eigen::VectorXd& v, const Eigen::VectorXd& weights) {
  return std::sqrt((v.array() / weights.array()).square().mean());
}

Eigen::VectorXd tolerance_weights(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                  Eigen::Index n, const SolverOptions& opt) {
  Eigen::VectorXd w(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w[i] = opt.abs_tol_theta + opt.rel_tol * std::max(std::abs(a[i]), std::abs(b[i]));
    w[n + i] = opt.abs_tol_c + opt.rel_tol * std::max(std::abs(a[n + i]), std::abs(b[n + i]));
  }
  return w;
}

// One implicit stage: y_s = rhs_const + gamma dt f(t_s, y_s) by Newton.
struct StageSolve {
  Eigen::VectorXd y;
  Eigen::VectorXd f;  // f(t_s, y_s)
  bool ok = false;
  int iterations = 0;
};

StageSolve solve_stage(const Semidiscretization& system, const Eigen::VectorXd& rhs_const,
                       const Eigen::VectorXd& y_guess, double t_stage, double gdt,
                       const Eigen::VectorXd& weights, const SolverOptions& opt) {
  const auto n = system.cells();
  StageSolve out;
  out.y = y_guess;
  Eigen::VectorXd f(2 * n);
  JacobianBlocks jac;
  for (int it = 0; it < opt.newton_max_iter; ++it) {
    ++out.iterations;
    system.rhs(t_stage, out.y, f);
    const Eigen::VectorXd residual = out.y - gdt * f - rhs_const;
    system.jacobian(t_stage, out.y, jac);
    StageMatrix mat(jac, gdt);
    std::vector<Eigen::Vector2d> rhs(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      rhs[static_cast<std::size_t>(i)] = Eigen::Vector2d(-residual[i], -residual[n + i]);
    if (!mat.solve(rhs)) return out;
    Eigen::VectorXd dy(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      dy[i] = rhs[static_cast<std::size_t>(i)][0];
      dy[n + i] = rhs[static_cast<std::size_t>(i)][1];
    }
    out.y += dy;
    if (!out.y.allFinite()) return out;
    if (weighted_rms(dy, weights) < opt.newton_tol) {
      system.rhs(t_stage, out.y, f);
      out.f = f;
      out.ok = true;
      return out;
    }
  }
  return out;
}

}  // namespace

StepOutcome step_dirk(const Semidiscretization& system, const Eigen::VectorXd& y, double t,
                      double dt, const SolverOptions& opt) {
  const auto tab = ellsiepen_tableau();
  const auto n = system.cells();
  const Eigen::VectorXd weights = tolerance_weights(y, y, n, opt);
  StepOutcome out;

  // stage 1
  const double gdt = tab.gamma * dt;
  const auto s1 = solve_stage(system, y, y, t + tab.c1 * dt, gdt, weights, opt);
  out.newton_iterations += s1.iterations;
  if (!s1.ok) return out;

  // stage 2 (stiffly accurate: y_new = y2)
  const Eigen::VectorXd rhs2 = y + dt * tab.a21 * s1.f;
  const auto s2 = solve_stage(system, rhs2, s1.y, t + tab.c2 * dt, gdt, weights, opt);
  out.newton_iterations += s2.iterations;
  if (!s2.ok) return out;

  out.y_new = s2.y;
  const Eigen::VectorXd err_vec =
      dt * ((tab.b1 - tab.bhat1) * s1.f + (tab.b2 - tab.bhat2) * s2.f);
  const Eigen::VectorXd w = tolerance_weights(y, out.y_new, n, opt);
  out.error = weighted_rms(err_vec, w);
  out.newton_ok = true;
  return out;
}

SimResult integrate_adaptive(const Semidiscretization& system, const SolverOptions& opt,
                             double t_end, const std::vector<int>& probe_cells,
                             bool store_fields) {
  if (t_end <= 0.0) throw std::invalid_argument("integrate_adaptive: t_end must be > 0");
  const auto n = system.cells();
  SimResult result;
  result.probe_cells = probe_cells;
  result.probe_theta_k.resize(probe_cells.size());
  result.probe_c.resize(probe_cells.size());
  result.store_fields = store_fields;

  Eigen::VectorXd y = system.initial_state();
  double t = 0.0;

  auto record = [&](double time, double dt_used) {
    result.times.push_back(time);
    if (!result.times.empty() && result.times.size() > 1) result.dts.push_back(dt_used);
    for (std::size_t p = 0; p < probe_cells.size(); ++p) {
      result.probe_theta_k[p].push_back(y[probe_cells[p]]);
      result.probe_c[p].push_back(y[n + probe_cells[p]]);
    }
    if (store_fields) {
      result.theta_fields.push_back(y.head(n));
      result.c_fields.push_back(y.tail(n));
    }
  };
  record(0.0, 0.0);

  std::vector<double> breaks = system.breakpoints();
  breaks.push_back(t_end);
  std::sort(breaks.begin(), breaks.end());

  const bool fixed = opt.fixed_dt > 0.0;
  double dt = fixed ? opt.fixed_dt : opt.dt_init;
  double err_prev = 1.0;
  Eigen::VectorXd c_prev = y.tail(n);

  while (t < t_end - 1e-9 * t_end) {
    // force path breakpoints as step endpoints
    double dt_try = std::min(dt, t_end - t);
    for (const double b : breaks) {
      if (b > t + 1e-12 * std::max(t, 1.0)) {
        dt_try = std::min(dt_try, b - t);
        break;
      }
    }

    const auto step = step_dirk(system, y, t, dt_try, opt);
    if (!step.newton_ok) {
      ++result.steps_rejected;
      result.newton_iterations += step.newton_iterations;
      if (fixed) throw std::runtime_error("integrate: Newton failed at fixed step size");
      dt = std::max(dt_try * 0.25, opt.dt_min);
      if (dt_try <= opt.dt_min * 1.0001)
        throw std::runtime_error("integrate: persistent Newton failure at dt_min, t = " +
                                 std::to_string(t));
      continue;
    }
    result.newton_iterations += step.newton_iterations;

    if (!fixed && step.error > 1.0) {
      ++result.steps_rejected;
      if (dt_try <= opt.dt_min * 1.0001)
        throw std::runtime_error("integrate: error control failed at dt_min, t = " +
                                 std::to_string(t));
      const double shrink =
          std::clamp(opt.safety * std::pow(step.error, -0.5), opt.growth_min, 0.9);
      dt = std::max(dt_try * shrink, opt.dt_min);
      continue;
    }

    // accept
    y = step.y_new;
    t += dt_try;
    ++result.steps_accepted;

    // enforce the physical bounds on the degree of cure
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!system.cell_is_epoxy(i)) continue;
      double& c = y[n + i];
      if (c < 0.0) {
        if (c < -opt.abs_tol_c) ++result.clamp_events;
        c = 0.0;
      } else if (c > 1.0) {
        if (c > 1.0 + opt.abs_tol_c) ++result.clamp_events;
        c = 1.0;
      }
      if (c < c_prev[i] - opt.abs_tol_c) {
        ++result.monotonicity_events;
        c = c_prev[i];
      }
    }
    c_prev = y.tail(n);
    record(t, dt_try);

    if (!fixed) {
      const double err = std::max(step.error, 1e-10);
      double factor = opt.safety * std::pow(1.0 / err, opt.k_i) *
                      std::pow(err_prev / err, opt.k_p);
      factor = std::clamp(factor, opt.growth_min, opt.growth_max);
      dt = std::clamp(dt_try * factor, opt.dt_min, opt.dt_max);
      err_prev = err;
    }
  }
  return result;
}

TemperaturePath default_curing_path() {
  TemperaturePath p;
  p.times = {0.0, 600.0, 29400.0, 30000.0, 44400.0, 45000.0, 52200.0};
  p.theta_c = {20.0, 60.0, 60.0, 120.0, 120.0, 20.0, 20.0};
  return p;
}

SimDomain default_domain(const ScenarioOptions& options) {
  if (options.h_c <= 0.0)
    throw std::invalid_argument(
        "scenario: specific reaction enthalpy h_c must be configured (> 0)");
  SimDomain d;
  Layer base;
  base.material = aluminum();
  base.thickness = options.base_thickness;
  base.cells = options.base_cells;
  Layer epoxy;
  EpoxyMaterial em;
  em.params = options.epoxy;
  em.rho_ref = options.rho_ref;
  em.h_c = options.h_c;
  epoxy.material = em;
  epoxy.thickness = options.epoxy_thickness;
  epoxy.cells = options.epoxy_cells;
  d.layers = {base, epoxy};
  d.bc_low = DirichletBC{options.oven};
  MixedBC top;
  top.h_conv = options.h_conv;
  top.emissivity = options.emissivity;
  top.ambient = options.oven;
  d.bc_high = top;
  d.theta_init_c = options.oven.theta_c.front();
  d.c_init = 0.0;
  return d;
}

SimResult run_default_scenario(const ScenarioOptions& options) {
  const Semidiscretization system(default_domain(options));
  const int probe = static_cast<int>(system.cells()) - 1;  // top epoxy cell
  return integrate_adaptive(system, options.solver, options.oven.times.back(), {probe},
                            options.store_fields);
}

}  // namespace cureuq::simulate
