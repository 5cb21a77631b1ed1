#include "cureuq/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>

#include "cureuq/parallel.hpp"
#include "cureuq/stats.hpp"

namespace cureuq::pipeline {

using constitutive::AllParams;
using constitutive::ConductivityParams;
using constitutive::CuringKineticsParams;
using constitutive::CuringState;
using constitutive::GlassTransitionParams;
using constitutive::HeatCapacityParams;
using constitutive::ShrinkageParams;

namespace {

const StepSpec& find_step(const std::vector<StepSpec>& all, const std::string& id) {
  for (const auto& s : all)
    if (s.id == id) return s;
  throw std::invalid_argument("pipeline: unknown step '" + id + "'");
}

GlassTransitionParams glass_from(const ParamMap& m) {
  return {m.at("r_f"), m.at("theta_g0"), m.at("theta_g1")};
}

CuringKineticsParams kinetics_from(const ParamMap& m, double b_d) {
  return {m.at("a_pre"), m.at("e_act"), m.at("g_fac"), m.at("n_exp"), b_d};
}

ShrinkageParams shrinkage_from(const ParamMap& m) {
  ShrinkageParams sp;
  sp.alpha_theta = m.at("alpha_theta");
  sp.alpha_c = m.at("alpha_c");
  sp.alpha_theta_c = m.at("alpha_theta_c");
  sp.alpha_theta_g = m.at("alpha_theta_g");
  return sp;
}

ShrinkageParams shrinkage_from_partial(const ParamMap& m, double alpha_theta_g) {
  ShrinkageParams sp;
  sp.alpha_theta = m.at("alpha_theta");
  sp.alpha_c = m.at("alpha_c");
  sp.alpha_theta_c = m.at("alpha_theta_c");
  sp.alpha_theta_g = alpha_theta_g;
  return sp;
}

HeatCapacityParams heat_from(const ParamMap& m) {
  return {m.at("a1"), m.at("a2"), m.at("a3"), m.at("a4"), m.at("a5")};
}

Dataset dataset_from_rows(std::vector<std::string> names,
                          const std::vector<std::vector<double>>& rows,
                          const std::vector<double>& obs, std::string label) {
  Dataset d;
  d.predictor_names = std::move(names);
  d.label = std::move(label);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(d.predictor_names.size());
  d.predictors.resize(n, p);
  d.observations.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j)
      d.predictors(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    d.observations[i] = obs[static_cast<std::size_t>(i)];
  }
  return d;
}

}  // namespace

std::vector<std::string> upstream_names(const StepSpec& spec, const std::vector<StepSpec>& all) {
  std::vector<std::string> names;
  for (const auto& dep : spec.deps) {
    const auto& s = find_step(all, dep.step_id);
    names.insert(names.end(), s.free_names.begin(), s.free_names.end());
  }
  return names;
}

ParamMap upstream_values(const StepSpec& spec, const SetMap& sets,
                         const std::vector<StepSpec>& all) {
  ParamMap m;
  for (const auto& dep : spec.deps) {
    const auto it = sets.find(dep.step_id);
    if (it == sets.end())
      throw std::invalid_argument("pipeline: step '" + spec.id + "' needs results of '" +
                                  dep.step_id + "'");
    const auto& s = find_step(all, dep.step_id);
    for (std::size_t j = 0; j < s.free_names.size(); ++j)
      m[s.free_names[j]] = it->second.values[static_cast<Eigen::Index>(j)];
  }
  return m;
}

namespace {

// Re-solve a step at new upstream values, trying both the warm start and
// the step's nominal initial guess. Warm starts are cheap and usually
// right, but a fit sitting at a bound or in a saturated region has no
// local gradient to escape with, so the nominal start guards the basin.
calibrate::FitResult dual_start_solve(const StepSpec& spec, const BoundStep& bound,
                                      const Eigen::VectorXd& warm,
                                      const calibrate::SolveOptions& options) {
  auto fit = calibrate::solve_nls(bound.model, bound.data, warm, options);
  calibrate::FitResult from_init;
  bool have_init = false;
  try {
    from_init = calibrate::solve_nls(bound.model, bound.data, spec.init, options);
    have_init = true;
  } catch (const std::exception&) {
  }
  if (have_init && from_init.converged && (!fit.converged || from_init.ssr < fit.ssr))
    return from_init;
  return fit;
}

// A fit that ran into a box bound has lost its asymptotic-normality
// footing; such re-solves count as failures for the sampling statistics.
bool pinned_at_bounds(const calibrate::ResidualModel& model, const Eigen::VectorXd& kappa) {
  for (Eigen::Index i = 0; i < kappa.size(); ++i) {
    if (model.lower_bounds.size() > 0) {
      const double lo = model.lower_bounds[i];
      if (kappa[i] <= lo + 1e-9 * std::max(std::abs(lo), 1.0)) return true;
    }
    if (model.upper_bounds.size() > 0) {
      const double hi = model.upper_bounds[i];
      if (kappa[i] >= hi - 1e-9 * std::max(std::abs(hi), 1.0)) return true;
    }
  }
  return false;
}

// Block-diagonal covariance of all upstream parameter sets, dep order.
Eigen::MatrixXd upstream_covariance(const StepSpec& spec, const SetMap& sets,
                                    const std::vector<StepSpec>& all) {
  Eigen::Index m = 0;
  for (const auto& dep : spec.deps)
    m += static_cast<Eigen::Index>(find_step(all, dep.step_id).free_names.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  Eigen::Index at = 0;
  for (const auto& dep : spec.deps) {
    const auto& set = sets.at(dep.step_id);
    const auto k = set.values.size();
    cov.block(at, at, k, k) = set.cov_total();
    at += k;
  }
  return cov;
}

}  // namespace

UncertainParameterSet propagate_fosm(const StepSpec& spec, const std::vector<StepSpec>& all,
                                     const calibrate::FitResult& fit, const SetMap& upstream,
                                     const FosmOptions& options) {
  if (!fit.converged || !fit.has_covariance())
    throw std::invalid_argument("propagate_fosm: step '" + spec.id + "' has no usable fit");
  const auto names = upstream_names(spec, all);
  const ParamMap base = upstream_values(spec, upstream, all);
  const Eigen::MatrixXd ctilde = upstream_covariance(spec, upstream, all);
  const auto m = static_cast<Eigen::Index>(names.size());
  const auto k = fit.kappa.size();

  Eigen::MatrixXd sens = Eigen::MatrixXd::Zero(k, m);
  std::vector<std::string> failures(static_cast<std::size_t>(m));
  parallel_for(static_cast<std::size_t>(m), options.workers, [&](std::size_t j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (ctilde(jj, jj) <= 0.0) return;  // zero variance contributes nothing
    const double value = base.at(names[j]);
    const double h = std::max(options.step_rel_std * std::sqrt(ctilde(jj, jj)),
                              options.step_floor_rel * std::abs(value));
    Eigen::VectorXd plus, minus;
    for (const double sign : {+1.0, -1.0}) {
      ParamMap perturbed = base;
      perturbed[names[j]] = value + sign * h;
      const BoundStep bound = spec.build(perturbed);
      const auto refit = dual_start_solve(spec, bound, fit.kappa, options.solve);
      if (!refit.converged) {
        failures[j] = names[j];
        return;
      }
      (sign > 0 ? plus : minus) = refit.kappa;
    }
    sens.col(jj) = (plus - minus) / (2.0 * h);
  });
  for (const auto& f : failures)
    if (!f.empty())
      throw std::runtime_error("propagate_fosm: re-solve failed when perturbing '" + f + "'");

  UncertainParameterSet out;
  out.names = fit.names;
  out.values = fit.kappa;
  out.cov_noise = fit.covariance;
  Eigen::MatrixXd prop = sens * ctilde * sens.transpose();
  out.cov_prop = 0.5 * (prop + prop.transpose());
  out.method = UncertainParameterSet::Method::fosm;
  return out;
}

UncertainParameterSet propagate_mc(const StepSpec& spec, const std::vector<StepSpec>& all,
                                   const calibrate::FitResult& fit, const SetMap& upstream,
                                   int n_mc, std::uint64_t seed, const McOptions& options) {
  if (n_mc < 2) throw std::invalid_argument("propagate_mc: n_mc must be >= 2");
  if (!fit.converged)
    throw std::invalid_argument("propagate_mc: step '" + spec.id + "' has no converged fit");

  // One sampler per dependency: immediate predecessors and steps without an
  // empirical sample draw from N(values, total covariance); earlier steps
  // with Monte Carlo artifacts draw rows of their empirical distribution.
  struct DepSampler {
    const UncertainParameterSet* set;
    std::vector<std::string> names;
    bool empirical;
    std::optional<stats::MvnSampler> normal;
  };
  std::vector<DepSampler> samplers;
  for (const auto& dep : spec.deps) {
    const auto& set = upstream.at(dep.step_id);
    DepSampler ds;
    ds.set = &set;
    ds.names = find_step(all, dep.step_id).free_names;
    ds.empirical = !dep.immediate && set.empirical.rows() > 0;
    if (!ds.empirical) ds.normal.emplace(set.values, set.cov_total());
    samplers.push_back(std::move(ds));
  }

  const auto k = fit.kappa.size();
  Eigen::MatrixXd draws(n_mc, k);
  std::vector<Eigen::MatrixXd> noise_covs(static_cast<std::size_t>(n_mc));
  // 0 = failed, 1 = estimate with covariance, 2 = estimate only: the
  // re-solve ran into a box bound or lost its Jacobian there, so the
  // constrained point estimate is kept for the empirical sample while no
  // asymptotic covariance exists for it.
  std::vector<char> status(static_cast<std::size_t>(n_mc), 0);

  parallel_for(static_cast<std::size_t>(n_mc), options.workers, [&](std::size_t i) {
    stats::RngStream stream(seed, i);
    ParamMap m;
    for (const auto& ds : samplers) {
      Eigen::VectorXd v;
      if (ds.empirical) {
        const auto row = static_cast<Eigen::Index>(stream.index(
            static_cast<std::uint64_t>(ds.set->empirical.rows())));
        v = ds.set->empirical.row(row).transpose();
      } else {
        v = ds.normal->sample(stream);
      }
      for (std::size_t j = 0; j < ds.names.size(); ++j)
        m[ds.names[j]] = v[static_cast<Eigen::Index>(j)];
    }
    try {
      const BoundStep bound = spec.build(m);
      const auto refit = dual_start_solve(spec, bound, fit.kappa, options.solve);
      if (!refit.converged) return;
      draws.row(static_cast<Eigen::Index>(i)) = refit.kappa.transpose();
      if (refit.has_covariance() && !pinned_at_bounds(bound.model, refit.kappa)) {
        noise_covs[i] = refit.covariance;
        status[i] = 1;
      } else {
        status[i] = 2;
      }
    } catch (const std::exception&) {
      // dropped below
    }
  });

  std::vector<Eigen::Index> kept, with_cov;
  for (std::size_t i = 0; i < status.size(); ++i)
    if (status[i] != 0) kept.push_back(static_cast<Eigen::Index>(i));

  // Screen out covariances from near-degenerate configurations: a re-solve
  // sitting close to a saturated region keeps a formally valid Jacobian
  // whose asymptotic covariance is orders of magnitude off the typical
  // scale and would dominate the noise average.
  {
    std::vector<double> traces;
    for (std::size_t i = 0; i < status.size(); ++i)
      if (status[i] == 1) traces.push_back(noise_covs[i].trace());
    if (!traces.empty()) {
      std::vector<double> sorted = traces;
      std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
      const double median = sorted[sorted.size() / 2];
      for (std::size_t i = 0; i < status.size(); ++i)
        if (status[i] == 1 && noise_covs[i].trace() > 100.0 * median) status[i] = 2;
    }
  }
  for (std::size_t i = 0; i < status.size(); ++i)
    if (status[i] == 1) with_cov.push_back(static_cast<Eigen::Index>(i));
  const double fail_frac = 1.0 - static_cast<double>(kept.size()) / n_mc;
  if (fail_frac > options.max_failure_fraction + 1e-9)
    throw std::runtime_error("propagate_mc: " + std::to_string(fail_frac * 100.0) +
                             "% of re-solves failed in step '" + spec.id + "'");
  if (kept.size() < 2) throw std::runtime_error("propagate_mc: fewer than two usable samples");
  if (with_cov.size() < kept.size() / 2)
    throw std::runtime_error("propagate_mc: most re-solves lost their covariance in step '" +
                             spec.id + "'");

  Eigen::MatrixXd sample(static_cast<Eigen::Index>(kept.size()), k);
  for (std::size_t r = 0; r < kept.size(); ++r)
    sample.row(static_cast<Eigen::Index>(r)) = draws.row(kept[r]);

  Eigen::MatrixXd mean_noise = Eigen::MatrixXd::Zero(k, k);
  for (const Eigen::Index i : with_cov) mean_noise += noise_covs[static_cast<std::size_t>(i)];
  mean_noise /= static_cast<double>(with_cov.size());

  // Constrained draws keep a zero matrix in the per-row artifact list: no
  // asymptotic covariance exists for them, and inventing one (for example
  // the average) would spread follow-up draws into inadmissible territory.
  std::vector<Eigen::MatrixXd> kept_covs;
  kept_covs.reserve(kept.size());
  for (const Eigen::Index i : kept)
    kept_covs.push_back(status[static_cast<std::size_t>(i)] == 1
                            ? noise_covs[static_cast<std::size_t>(i)]
                            : Eigen::MatrixXd::Zero(k, k));

  const auto [mean, cov] = stats::sample_moments(sample);
  UncertainParameterSet out;
  out.names = fit.names;
  out.values = mean;
  out.cov_noise = mean_noise;
  out.cov_prop = cov;
  out.method = UncertainParameterSet::Method::mc;
  out.empirical = std::move(sample);
  out.empirical_noise_covs = std::move(kept_covs);
  return out;
}

namespace {

std::vector<const StepSpec*> topological_order(const std::vector<StepSpec>& steps) {
  std::vector<const StepSpec*> order;
  std::set<std::string> done;
  std::vector<const StepSpec*> pending;
  for (const auto& s : steps) pending.push_back(&s);
  while (!pending.empty()) {
    const auto before = pending.size();
    for (auto it = pending.begin(); it != pending.end();) {
      const bool ready = std::all_of((*it)->deps.begin(), (*it)->deps.end(),
                                     [&](const StepDep& d) { return done.count(d.step_id) > 0; });
      if (ready) {
        order.push_back(*it);
        done.insert((*it)->id);
        it = pending.erase(it);
      } else {
        ++it;
      }
    }
    if (pending.size() == before)
      throw std::invalid_argument("pipeline: dependency cycle or missing step");
  }
  return order;
}

}  // namespace

PipelineResult run_pipeline(const std::vector<StepSpec>& steps, const PipelineOptions& options) {
  PipelineResult result;
  for (const StepSpec* spec : topological_order(steps)) {
    const ParamMap base = upstream_values(*spec, result.sets, steps);
    const BoundStep bound = spec->build(base);
    auto fit = calibrate::solve_nls(bound.model, bound.data, spec->init, options.solve);
    if (!fit.converged)
      throw std::runtime_error("pipeline: step '" + spec->id + "' did not converge");

    UncertainParameterSet set;
    const bool has_deps = !spec->deps.empty();
    if (options.method == Method::fosm && has_deps) {
      FosmOptions fo;
      fo.workers = options.workers;
      fo.solve = options.solve;
      set = propagate_fosm(*spec, steps, fit, result.sets, fo);
    } else if (options.method == Method::mc && has_deps) {
      McOptions mo;
      mo.workers = options.workers;
      mo.solve = options.solve;
      set = propagate_mc(*spec, steps, fit, result.sets, options.n_mc, options.seed, mo);
    } else {
      set.names = fit.names;
      set.values = fit.kappa;
      const auto k = fit.kappa.size();
      set.cov_noise = fit.has_covariance() ? fit.covariance : Eigen::MatrixXd::Zero(k, k);
      set.cov_prop = Eigen::MatrixXd::Zero(k, k);
      set.method = UncertainParameterSet::Method::nls;
    }
    result.order.push_back(spec->id);
    result.fits.emplace(spec->id, std::move(fit));
    result.sets.emplace(spec->id, std::move(set));
  }
  return result;
}

Dataset derive_conductivity_observations(const Dataset& diffusivity, const ShrinkageParams& sp,
                                         const HeatCapacityParams& hp,
                                         const GlassTransitionParams& gp, double rho_ref) {
  const Eigen::VectorXd theta = diffusivity.predictor("theta");
  const Eigen::VectorXd c = diffusivity.predictor("c");
  Dataset out = diffusivity;
  out.label = "kappa_exp(" + diffusivity.label + ")";
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const auto state = CuringState::from_celsius(theta[i], c[i]);
    const double j = constitutive::deformation(state, sp, gp);
    if (j <= 0.0)
      throw std::domain_error("derive_conductivity_observations: nonpositive volume ratio");
    const double rho = rho_ref / j;
    out.observations[i] =
        diffusivity.observations[i] * rho * constitutive::specific_heat(state, hp, gp);
  }
  return out;
}

namespace {

// Split each isothermal kinetics curve at 90% of its maximum degree of
// cure: the low-c portion calibrates the chemically-driven factor, the
// remainder the diffusion parameter.
void split_kinetics(const std::vector<Dataset>& curves, Dataset& chem, Dataset& bd) {
  std::vector<std::vector<double>> chem_rows, bd_rows;
  std::vector<double> chem_obs, bd_obs;
  for (const auto& curve : curves) {
    const Eigen::VectorXd theta = curve.predictor("theta");
    const Eigen::VectorXd c = curve.predictor("c");
    const double c_split = 0.9 * c.maxCoeff();
    for (Eigen::Index i = 0; i < curve.size(); ++i) {
      auto& rows = c[i] <= c_split ? chem_rows : bd_rows;
      auto& obs = c[i] <= c_split ? chem_obs : bd_obs;
      rows.push_back({theta[i], c[i]});
      obs.push_back(curve.observations[i]);
    }
  }
  chem = dataset_from_rows({"theta", "c"}, chem_rows, chem_obs, "kinetics_chem");
  bd = dataset_from_rows({"theta", "c"}, bd_rows, bd_obs, "kinetics_bd");
}

}  // namespace

StepSpec make_theta_g_step(const Dataset& data, const Eigen::Vector3d& init) {
  StepSpec s;
  s.id = "theta_g";
  s.free_names = {"r_f", "theta_g0", "theta_g1"};
  s.init = init;
  Dataset d = data;
  s.build = [d](const ParamMap&) {
    calibrate::ResidualModel m;
    m.free_names = {"r_f", "theta_g0", "theta_g1"};
    m.predict = [](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
      const GlassTransitionParams gp{kappa[0], kappa[1], kappa[2]};
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::VectorXd out(ds.size());
      for (Eigen::Index i = 0; i < ds.size(); ++i)
        out[i] = constitutive::glass_transition(c[i], gp);
      return out;
    };
    m.jacobian = [](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
      const GlassTransitionParams gp{kappa[0], kappa[1], kappa[2]};
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::MatrixXd jac(ds.size(), 3);
      for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const auto g = constitutive::glass_transition_param_grad(c[i], gp);
        jac(i, 0) = g[0];
        jac(i, 1) = g[1];
        jac(i, 2) = g[2];
      }
      return jac;
    };
    return BoundStep{std::move(m), d};
  };
  return s;
}

StepSpec make_kin_chem_step(const std::vector<Dataset>& kinetics_curves,
                            const Eigen::Vector4d& init) {
  Dataset chem_data, bd_data;
  split_kinetics(kinetics_curves, chem_data, bd_data);
  StepSpec s;
  s.id = "kin_chem";
  s.free_names = {"a_pre", "e_act", "g_fac", "n_exp"};
  s.init = init;
  Dataset d = chem_data;
  s.build = [d](const ParamMap&) {
    calibrate::ResidualModel m;
    m.free_names = {"a_pre", "e_act", "g_fac", "n_exp"};
    m.log_scale = {true, true, false, false};
    m.predict = [](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
      const CuringKineticsParams kp{kappa[0], kappa[1], kappa[2], kappa[3], 1.0};
      const Eigen::VectorXd theta = ds.predictor("theta");
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::VectorXd out(ds.size());
      for (Eigen::Index i = 0; i < ds.size(); ++i)
        out[i] = constitutive::chemical_factor(CuringState::from_celsius(theta[i], c[i]), kp);
      return out;
    };
    m.jacobian = [](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
      const CuringKineticsParams kp{kappa[0], kappa[1], kappa[2], kappa[3], 1.0};
      const Eigen::VectorXd theta = ds.predictor("theta");
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::MatrixXd jac(ds.size(), 4);
      for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const auto g = constitutive::chemical_factor_param_grad(
            CuringState::from_celsius(theta[i], c[i]), kp);
        for (int j = 0; j < 4; ++j) jac(i, j) = g[static_cast<std::size_t>(j)];
      }
      return jac;
    };
    return BoundStep{std::move(m), d};
  };
  return s;
}

StepSpec make_kin_bd_step(const std::vector<Dataset>& kinetics_curves, double init) {
  Dataset chem_data, bd_data;
  split_kinetics(kinetics_curves, chem_data, bd_data);
  StepSpec s;
  s.id = "kin_bd";
  s.free_names = {"b_d"};
  s.deps = {{"kin_chem", true}, {"theta_g", false}};
  s.init = Eigen::VectorXd::Constant(1, init);
  Dataset d = bd_data;
  s.build = [d](const ParamMap& up) {
    const GlassTransitionParams gp = glass_from(up);
    calibrate::ResidualModel m;
    m.free_names = {"b_d"};
    m.log_scale = {true};
    // Floor at a physically resolvable diffusion width: noise realizations
    // without diffusion signal otherwise run the width to zero, where every
    // tanh saturates and the fit loses its Jacobian entirely.
    m.lower_bounds = Eigen::VectorXd::Constant(1, 0.2);
    m.upper_bounds = Eigen::VectorXd::Constant(1, 1e4);
    m.fixed_names = {"a_pre", "e_act", "g_fac", "n_exp", "r_f", "theta_g0", "theta_g1"};
    m.fixed.resize(7);
    for (int j = 0; j < 7; ++j) m.fixed[j] = up.at(m.fixed_names[static_cast<std::size_t>(j)]);
    m.predict = [up, gp](const Eigen::VectorXd& kappa, const Eigen::VectorXd&,
                         const Dataset& ds) {
      const CuringKineticsParams kp = kinetics_from(up, kappa[0]);
      const Eigen::VectorXd theta = ds.predictor("theta");
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::VectorXd out(ds.size());
      for (Eigen::Index i = 0; i < ds.size(); ++i)
        out[i] = constitutive::curing_rate(CuringState::from_celsius(theta[i], c[i]), kp, gp);
      return out;
    };
    m.jacobian = [up, gp](const Eigen::VectorXd& kappa, const Eigen::VectorXd&,
                          const Dataset& ds) {
      constitutive::AllParams ap;
      ap.glass = gp;
      ap.kinetics = kinetics_from(up, kappa[0]);
      const Eigen::VectorXd theta = ds.predictor("theta");
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::MatrixXd jac(ds.size(), 1);
      for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const auto g = constitutive::param_gradient(
            constitutive::Relation::curing_rate, CuringState::from_celsius(theta[i], c[i]), ap);
        jac(i, 0) = g[4];  // b_d position
      }
      return jac;
    };
    return BoundStep{std::move(m), d};
  };
  return s;
}

StepSpec make_cp_step(const Dataset& data, const Eigen::VectorXd& init) {
  StepSpec s;
  s.id = "cp";
  s.free_names = {"a1", "a2", "a3", "a4", "a5"};
  s.deps = {{"theta_g", true}};
  s.init = init;
  Dataset d = data;
  s.build = [d](const ParamMap& up) {
    const GlassTransitionParams gp = glass_from(up);
    calibrate::ResidualModel m;
    m.free_names = {"a1", "a2", "a3", "a4", "a5"};
    m.log_scale = {false, false, false, false, true};
    m.fixed_names = {"r_f", "theta_g0", "theta_g1"};
    m.fixed = Eigen::Vector3d(gp.r_f, gp.theta_g0, gp.theta_g1);
    m.predict = [gp](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
      const HeatCapacityParams hp{kappa[0], kappa[1], kappa[2], kappa[3], kappa[4]};
      const Eigen::VectorXd theta = ds.predictor("theta");
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::VectorXd out(ds.size());
      for (Eigen::Index i = 0; i < ds.size(); ++i)
        out[i] = constitutive::specific_heat(CuringState::from_celsius(theta[i], c[i]), hp, gp);
      return out;
    };
    m.jacobian = [gp](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
      constitutive::AllParams ap;
      ap.glass = gp;
      ap.heat = {kappa[0], kappa[1], kappa[2], kappa[3], kappa[4]};
      const Eigen::VectorXd theta = ds.predictor("theta");
      const Eigen::VectorXd c = ds.predictor("c");
      Eigen::MatrixXd jac(ds.size(), 5);
      for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const auto g = constitutive::param_gradient(
            constitutive::Relation::specific_heat, CuringState::from_celsius(theta[i], c[i]), ap);
        for (int j = 0; j < 5; ++j) jac(i, j) = g[static_cast<std::size_t>(j)];
      }
      return jac;
    };
    return BoundStep{std::move(m), d};
  };
  return s;
}

std::vector<StepSpec> standard_steps(const PipelineData& data, const AllParams& init) {
  std::vector<StepSpec> steps;

  steps.push_back(make_theta_g_step(
      data.theta_g, Eigen::Vector3d(init.glass.r_f, init.glass.theta_g0, init.glass.theta_g1)));
  steps.push_back(make_kin_chem_step(
      data.kinetics, Eigen::Vector4d(init.kinetics.a_pre, init.kinetics.e_act,
                                     init.kinetics.g_fac, init.kinetics.n_exp)));
  steps.push_back(make_kin_bd_step(data.kinetics, init.kinetics.b_d));

  {
    StepSpec s;
    s.id = "shrink_alpha";
    s.free_names = {"alpha_theta"};
    s.init = Eigen::VectorXd::Constant(1, init.shrinkage.alpha_theta);
    Dataset d = data.shrink_alpha;
    const double theta_ref = init.shrinkage.theta_ref;
    s.build = [d, theta_ref](const ParamMap&) {
      calibrate::ResidualModel m;
      m.free_names = {"alpha_theta"};
      m.predict = [theta_ref](const Eigen::VectorXd& kappa, const Eigen::VectorXd&,
                              const Dataset& ds) -> Eigen::VectorXd {
        const Eigen::VectorXd theta = ds.predictor("theta");
        return (1.0 + kappa[0] * (theta.array() - theta_ref)).matrix();
      };
      m.jacobian = [theta_ref](const Eigen::VectorXd&, const Eigen::VectorXd&,
                               const Dataset& ds) {
        const Eigen::VectorXd theta = ds.predictor("theta");
        Eigen::MatrixXd jac(ds.size(), 1);
        jac.col(0) = theta.array() - theta_ref;
        return jac;
      };
      return BoundStep{std::move(m), d};
    };
    steps.push_back(std::move(s));
  }

  {
    StepSpec s;
    s.id = "shrink_chem";
    s.free_names = {"alpha_c", "alpha_theta_c"};
    s.deps = {{"shrink_alpha", true}};
    s.init = Eigen::Vector2d(init.shrinkage.alpha_c, init.shrinkage.alpha_theta_c);
    Dataset d = data.shrink_chem;
    const double theta_ref = init.shrinkage.theta_ref;
    s.build = [d, theta_ref](const ParamMap& up) {
      const double alpha_theta = up.at("alpha_theta");
      calibrate::ResidualModel m;
      m.free_names = {"alpha_c", "alpha_theta_c"};
      m.fixed_names = {"alpha_theta"};
      m.fixed = Eigen::VectorXd::Constant(1, alpha_theta);
      // Rubbery-regime deformation: the glassy branch is inactive for the
      // isothermal cure window, so the smooth maximum reduces to the
      // linear thermal term.
      m.predict = [alpha_theta, theta_ref](const Eigen::VectorXd& kappa, const Eigen::VectorXd&,
                                           const Dataset& ds) -> Eigen::VectorXd {
        const Eigen::VectorXd theta = ds.predictor("theta");
        const Eigen::VectorXd c = ds.predictor("c");
        const Eigen::ArrayXd vth = theta.array() - theta_ref;
        return (1.0 + alpha_theta * vth - kappa[0] * c.array() - kappa[1] * vth * c.array())
            .matrix();
      };
      m.jacobian = [theta_ref](const Eigen::VectorXd&, const Eigen::VectorXd&,
                               const Dataset& ds) {
        const Eigen::VectorXd theta = ds.predictor("theta");
        const Eigen::VectorXd c = ds.predictor("c");
        Eigen::MatrixXd jac(ds.size(), 2);
        jac.col(0) = -c;
        jac.col(1) = -(theta.array() - theta_ref).matrix().cwiseProduct(c);
        return jac;
      };
      return BoundStep{std::move(m), d};
    };
    steps.push_back(std::move(s));
  }

  {
    StepSpec s;
    s.id = "shrink_glass";
    s.free_names = {"alpha_theta_g"};
    s.deps = {{"shrink_chem", true}, {"shrink_alpha", false}, {"theta_g", false}};
    s.init = Eigen::VectorXd::Constant(1, init.shrinkage.alpha_theta_g);
    Dataset d = data.shrink_glass;
    s.build = [d](const ParamMap& up) {
      const GlassTransitionParams gp = glass_from(up);
      calibrate::ResidualModel m;
      m.free_names = {"alpha_theta_g"};
      m.fixed_names = {"alpha_theta", "alpha_c", "alpha_theta_c",
                       "r_f", "theta_g0", "theta_g1"};
      m.fixed.resize(6);
      for (int j = 0; j < 6; ++j) m.fixed[j] = up.at(m.fixed_names[static_cast<std::size_t>(j)]);
      m.predict = [up, gp](const Eigen::VectorXd& kappa, const Eigen::VectorXd&,
                           const Dataset& ds) {
        ShrinkageParams sp = shrinkage_from_partial(up, kappa[0]);
        const Eigen::VectorXd theta = ds.predictor("theta");
        const Eigen::VectorXd c = ds.predictor("c");
        Eigen::VectorXd out(ds.size());
        for (Eigen::Index i = 0; i < ds.size(); ++i)
          out[i] =
              constitutive::deformation(CuringState::from_celsius(theta[i], c[i]), sp, gp);
        return out;
      };
      m.jacobian = [up, gp](const Eigen::VectorXd& kappa, const Eigen::VectorXd&,
                            const Dataset& ds) {
        constitutive::AllParams ap;
        ap.glass = gp;
        ap.shrinkage = shrinkage_from_partial(up, kappa[0]);
        const Eigen::VectorXd theta = ds.predictor("theta");
        const Eigen::VectorXd c = ds.predictor("c");
        Eigen::MatrixXd jac(ds.size(), 1);
        for (Eigen::Index i = 0; i < ds.size(); ++i) {
          const auto g = constitutive::param_gradient(
              constitutive::Relation::deformation, CuringState::from_celsius(theta[i], c[i]), ap);
          jac(i, 0) = g[3];  // alpha_theta_g position
        }
        return jac;
      };
      return BoundStep{std::move(m), d};
    };
    steps.push_back(std::move(s));
  }

  Eigen::VectorXd cp_init(5);
  cp_init << init.heat.a1, init.heat.a2, init.heat.a3, init.heat.a4, init.heat.a5;
  steps.push_back(make_cp_step(data.cp, cp_init));

  {
    StepSpec s;
    s.id = "kappa";
    s.free_names = {"b1", "b2", "b3", "b4"};
    s.deps = {{"cp", true},
              {"shrink_glass", true},
              {"shrink_chem", false},
              {"shrink_alpha", false},
              {"theta_g", false}};
    s.init = Eigen::Vector4d(init.cond.b1, init.cond.b2, init.cond.b3, init.cond.b4);
    Dataset d = data.diffusivity;
    const double rho_ref = data.rho_ref;
    s.build = [d, rho_ref](const ParamMap& up) {
      const GlassTransitionParams gp = glass_from(up);
      const ShrinkageParams sp = shrinkage_from(up);
      const HeatCapacityParams hp = heat_from(up);
      calibrate::ResidualModel m;
      m.free_names = {"b1", "b2", "b3", "b4"};
      m.fixed_names = {"a1", "a2", "a3", "a4", "a5", "alpha_theta", "alpha_c",
                       "alpha_theta_c", "alpha_theta_g", "r_f", "theta_g0", "theta_g1"};
      m.fixed.resize(12);
      for (int j = 0; j < 12; ++j)
        m.fixed[j] = up.at(m.fixed_names[static_cast<std::size_t>(j)]);
      m.predict = [](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
        ConductivityParams cp;
        cp.b1 = kappa[0];
        cp.b2 = kappa[1];
        cp.b3 = kappa[2];
        cp.b4 = kappa[3];
        const Eigen::VectorXd theta = ds.predictor("theta");
        const Eigen::VectorXd c = ds.predictor("c");
        Eigen::VectorXd out(ds.size());
        for (Eigen::Index i = 0; i < ds.size(); ++i)
          out[i] = constitutive::conductivity(CuringState::from_celsius(theta[i], c[i]), cp);
        return out;
      };
      m.jacobian = [](const Eigen::VectorXd& kappa, const Eigen::VectorXd&, const Dataset& ds) {
        constitutive::AllParams ap;
        ap.cond.b1 = kappa[0];
        ap.cond.b2 = kappa[1];
        ap.cond.b3 = kappa[2];
        ap.cond.b4 = kappa[3];
        const Eigen::VectorXd theta = ds.predictor("theta");
        const Eigen::VectorXd c = ds.predictor("c");
        Eigen::MatrixXd jac(ds.size(), 4);
        for (Eigen::Index i = 0; i < ds.size(); ++i) {
          const auto g = constitutive::param_gradient(
              constitutive::Relation::conductivity, CuringState::from_celsius(theta[i], c[i]),
              ap);
          for (int j = 0; j < 4; ++j) jac(i, j) = g[static_cast<std::size_t>(j)];
        }
        return jac;
      };
      Dataset derived = derive_conductivity_observations(d, sp, hp, gp, rho_ref);
      return BoundStep{std::move(m), std::move(derived)};
    };
    steps.push_back(std::move(s));
  }

  return steps;
}

constitutive::AllParams params_from_sets(const SetMap& sets) {
  constitutive::AllParams p = constitutive::reference_params();
  auto get = [&sets](const std::string& step, Eigen::Index j) {
    return sets.at(step).values[j];
  };
  p.glass = {get("theta_g", 0), get("theta_g", 1), get("theta_g", 2)};
  p.kinetics = {get("kin_chem", 0), get("kin_chem", 1), get("kin_chem", 2), get("kin_chem", 3),
                get("kin_bd", 0)};
  p.shrinkage.alpha_theta = get("shrink_alpha", 0);
  p.shrinkage.alpha_c = get("shrink_chem", 0);
  p.shrinkage.alpha_theta_c = get("shrink_chem", 1);
  p.shrinkage.alpha_theta_g = get("shrink_glass", 0);
  p.heat = {get("cp", 0), get("cp", 1), get("cp", 2), get("cp", 3), get("cp", 4)};
  p.cond.b1 = get("kappa", 0);
  p.cond.b2 = get("kappa", 1);
  p.cond.b3 = get("kappa", 2);
  p.cond.b4 = get("kappa", 3);
  return p;
}

// --- in-silico generators -------------------------------------------------

double cure_at_glass_transition(double theta_c, const GlassTransitionParams& gp) {
  const double phi = (theta_c - gp.theta_g0) / (gp.theta_g1 - gp.theta_g0);
  if (phi <= 0.0) return 0.0;
  if (phi >= 1.0) return 1.0;
  return phi / (gp.r_f + phi * (1.0 - gp.r_f));
}

namespace {

Eigen::VectorXd linspace(double lo, double hi, int n) {
  if (n == 1) return Eigen::VectorXd::Constant(1, 0.5 * (lo + hi));
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

}  // namespace

Dataset make_theta_g_data(const GlassTransitionParams& truth, const ThetaGDesign& design) {
  const Eigen::VectorXd c = linspace(design.c_min, design.c_max, design.n);
  std::vector<std::vector<double>> rows;
  std::vector<double> obs;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    rows.push_back({c[i]});
    obs.push_back(constitutive::glass_transition(c[i], truth));
  }
  return dataset_from_rows({"c"}, rows, obs, "theta_g");
}

std::vector<Dataset> make_kinetics_data(const AllParams& truth, const KineticsDesign& design) {
  if (design.temps_c.size() != design.c_ranges.size())
    throw std::invalid_argument("kinetics design: temps and ranges must align");
  std::vector<Dataset> out;
  for (std::size_t t = 0; t < design.temps_c.size(); ++t) {
    const double theta = design.temps_c[t];
    const Eigen::VectorXd c =
        linspace(design.c_ranges[t].first, design.c_ranges[t].second, design.points_per_curve);
    const double c_split = 0.9 * c.maxCoeff();
    std::vector<std::vector<double>> rows;
    std::vector<double> obs;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      rows.push_back({theta, c[i]});
      const auto state = CuringState::from_celsius(theta, c[i]);
      const bool pure_fc = design.step_consistent_chem && c[i] <= c_split;
      obs.push_back(pure_fc
                        ? constitutive::chemical_factor(state, truth.kinetics)
                        : constitutive::curing_rate(state, truth.kinetics, truth.glass));
    }
    out.push_back(dataset_from_rows({"theta", "c"}, rows, obs,
                                    "kinetics_" + std::to_string(static_cast<int>(theta))));
  }
  return out;
}

Dataset make_cp_data(const AllParams& truth, const CpDesign& design) {
  std::vector<std::vector<double>> rows;
  std::vector<double> obs;
  for (const double c : design.c_states) {
    const Eigen::VectorXd theta =
        linspace(design.theta_min, design.theta_max, design.points_per_curve);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      rows.push_back({theta[i], c});
      obs.push_back(constitutive::specific_heat(CuringState::from_celsius(theta[i], c),
                                                truth.heat, truth.glass));
    }
  }
  return dataset_from_rows({"theta", "c"}, rows, obs, "cp");
}

Dataset make_shrink_alpha_data(const AllParams& truth, const ShrinkDesign& design) {
  const Eigen::VectorXd theta =
      linspace(design.alpha_theta_min, design.alpha_theta_max, design.n_alpha);
  std::vector<std::vector<double>> rows;
  std::vector<double> obs;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    rows.push_back({theta[i], 0.0});
    obs.push_back(constitutive::deformation(CuringState::from_celsius(theta[i], 0.0),
                                            truth.shrinkage, truth.glass));
  }
  return dataset_from_rows({"theta", "c"}, rows, obs, "shrink_alpha");
}

Dataset make_shrink_chem_data(const AllParams& truth, const ShrinkDesign& design) {
  std::vector<std::vector<double>> rows;
  std::vector<double> obs;
  for (const double theta : design.chem_temps_c) {
    // Stay clear of vitrification so the rubbery branch stays active.
    const double c_cap =
        cure_at_glass_transition(theta - design.vitrification_margin, truth.glass);
    const Eigen::VectorXd c = linspace(0.0, c_cap, design.n_chem_per_temp);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      rows.push_back({theta, c[i]});
      obs.push_back(constitutive::deformation(CuringState::from_celsius(theta, c[i]),
                                              truth.shrinkage, truth.glass));
    }
  }
  return dataset_from_rows({"theta", "c"}, rows, obs, "shrink_chem");
}

Dataset make_shrink_glass_data(const AllParams& truth, const ShrinkDesign& design) {
  const Eigen::VectorXd theta =
      linspace(design.glass_theta_min, design.glass_theta_max, design.n_glass);
  std::vector<std::vector<double>> rows;
  std::vector<double> obs;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    rows.push_back({theta[i], 1.0});
    obs.push_back(constitutive::deformation(CuringState::from_celsius(theta[i], 1.0),
                                            truth.shrinkage, truth.glass));
  }
  return dataset_from_rows({"theta", "c"}, rows, obs, "shrink_glass");
}

Dataset make_diffusivity_data(const AllParams& truth, double rho_ref,
                              const DiffusivityDesign& design) {
  std::vector<std::vector<double>> rows;
  std::vector<double> obs;
  for (const double c : design.c_states) {
    const Eigen::VectorXd theta = linspace(design.theta_min, design.theta_max, design.n_per_state);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const auto state = CuringState::from_celsius(theta[i], c);
      const double j = constitutive::deformation(state, truth.shrinkage, truth.glass);
      const double rho = rho_ref / j;
      const double cp = constitutive::specific_heat(state, truth.heat, truth.glass);
      const double kappa = constitutive::conductivity(state, truth.cond);
      rows.push_back({theta[i], c});
      obs.push_back(kappa / (rho * cp));
    }
  }
  return dataset_from_rows({"theta", "c"}, rows, obs, "diffusivity");
}

PipelineData make_pipeline_data(const AllParams& truth, double rho_ref) {
  PipelineData d;
  d.theta_g = make_theta_g_data(truth.glass, {});
  KineticsDesign kin_design;
  kin_design.step_consistent_chem = true;
  d.kinetics = make_kinetics_data(truth, kin_design);
  d.shrink_alpha = make_shrink_alpha_data(truth, {});
  d.shrink_chem = make_shrink_chem_data(truth, {});
  d.shrink_glass = make_shrink_glass_data(truth, {});
  CpDesign cp_design;
  cp_design.points_per_curve = 300;  // desk-scale default for pipeline runs
  d.cp = make_cp_data(truth, cp_design);
  d.diffusivity = make_diffusivity_data(truth, rho_ref, {});
  d.rho_ref = rho_ref;
  return d;
}

}  // namespace cureuq::pipeline
