#include "cureuq/forward_uq.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cureuq/interp.hpp"
#include "cureuq/parallel.hpp"

namespace cureuq::forward_uq {

UQResult fosm_forward(const ModelFn& model, const Eigen::VectorXd& mean,
                      const Eigen::MatrixXd& cov, const Eigen::VectorXd& grid,
                      const ForwardFosmOptions& options) {
  const auto k = mean.size();
  if (cov.rows() != k || cov.cols() != k)
    throw std::invalid_argument("fosm_forward: covariance size mismatch");

  UQResult out;
  out.grid = grid;
  out.method = UQResult::Method::fosm;
  out.mean = model(mean);
  out.evaluations = 1;

  // one central-difference sensitivity per parameter with nonzero variance
  std::vector<Eigen::MatrixXd> sens(static_cast<std::size_t>(k));
  std::vector<char> active(static_cast<std::size_t>(k), 0);
  std::vector<std::string> failed(static_cast<std::size_t>(k));
  parallel_for(static_cast<std::size_t>(k), options.workers, [&](std::size_t j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (cov(jj, jj) <= 0.0) return;
    const double h = std::max(options.step_rel_std * std::sqrt(cov(jj, jj)),
                              options.step_floor_rel * std::abs(mean[jj]));
    Eigen::VectorXd p = mean;
    try {
      p[jj] = mean[jj] + h;
      const Eigen::MatrixXd plus = model(p);
      p[jj] = mean[jj] - h;
      const Eigen::MatrixXd minus = model(p);
      sens[j] = (plus - minus) / (2.0 * h);
      active[j] = 1;
    } catch (const std::exception&) {
      failed[j] = "parameter " + std::to_string(j);
    }
  });
  for (const auto& f : failed)
    if (!f.empty()) throw std::runtime_error("fosm_forward: perturbed run failed for " + f);

  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(out.mean.rows(), out.mean.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!active[static_cast<std::size_t>(i)]) continue;
    out.evaluations += 2;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!active[static_cast<std::size_t>(j)]) continue;
      var += cov(i, j) * sens[static_cast<std::size_t>(i)]
                             .cwiseProduct(sens[static_cast<std::size_t>(j)]);
    }
  }
  out.stddev = var.cwiseMax(0.0).cwiseSqrt();
  return out;
}

UQResult mc_forward(const ModelFn& model, const SamplerFn& sampler, int n_mc, std::uint64_t seed,
                    const Eigen::VectorXd& grid, const ForwardMcOptions& options) {
  if (n_mc < 2) throw std::invalid_argument("mc_forward: n_mc must be >= 2");
  std::vector<Eigen::MatrixXd> outputs(static_cast<std::size_t>(n_mc));
  std::vector<char> ok(static_cast<std::size_t>(n_mc), 0);
  parallel_for(static_cast<std::size_t>(n_mc), options.workers, [&](std::size_t i) {
    stats::RngStream rng(seed, i);
    const Eigen::VectorXd draw = sampler(rng);
    try {
      outputs[i] = model(draw);
      ok[i] = 1;
    } catch (const std::exception&) {
      // dropped below
    }
  });

  int used = 0;
  for (const char c : ok) used += c;
  const double fail_frac = 1.0 - static_cast<double>(used) / n_mc;
  if (fail_frac > options.max_failure_fraction + 1e-9)
    throw std::runtime_error("mc_forward: " + std::to_string(fail_frac * 100.0) +
                             "% of runs failed");
  if (used < 2) throw std::runtime_error("mc_forward: fewer than two usable runs");

  UQResult out;
  out.grid = grid;
  out.method = UQResult::Method::mc;
  out.evaluations = used;
  out.dropped = n_mc - used;

  Eigen::MatrixXd sum, sum2;
  bool first = true;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!ok[i]) continue;
    if (first) {
      sum = Eigen::MatrixXd::Zero(outputs[i].rows(), outputs[i].cols());
      sum2 = sum;
      first = false;
    }
    sum += outputs[i];
    sum2 += outputs[i].cwiseProduct(outputs[i]);
  }
  out.mean = sum / used;
  const Eigen::MatrixXd var =
      (sum2 - static_cast<double>(used) * out.mean.cwiseProduct(out.mean)) /
      static_cast<double>(used - 1);
  out.stddev = var.cwiseMax(0.0).cwiseSqrt();
  return out;
}

// --- material parameter studies --------------------------------------------

namespace {

const std::vector<std::string> material_step_order = {"theta_g", "kin_chem", "kin_bd", "cp",
                                                      "kappa"};

}  // namespace

MaterialInputs material_inputs_from_pipeline(const pipeline::SetMap& sets) {
  MaterialInputs in;
  Eigen::Index total = 0;
  for (const auto& step : material_step_order) {
    const auto it = sets.find(step);
    if (it == sets.end())
      throw std::invalid_argument("material_inputs: missing pipeline step '" + step + "'");
    total += it->second.values.size();
  }
  in.mean.resize(total);
  in.cov = Eigen::MatrixXd::Zero(total, total);
  Eigen::Index at = 0;
  for (const auto& step : material_step_order) {
    const auto& set = sets.at(step);
    const auto k = set.values.size();
    MaterialInputs::Block block;
    block.step = step;
    block.offset = at;
    block.size = k;
    block.values = set.values;
    block.cov_sample = set.cov_total();
    block.empirical = set.empirical;
    block.empirical_noise = set.empirical_noise_covs;
    in.names.insert(in.names.end(), set.names.begin(), set.names.end());
    in.mean.segment(at, k) = set.values;
    in.cov.block(at, at, k, k) = set.cov_total();
    in.blocks.push_back(std::move(block));
    at += k;
  }
  return in;
}

namespace {

// The transient model's precondition: a sampled vector must be an
// admissible parameter set of the constitutive relations. The local
// normal approximations put a small probability mass outside (most
// visibly a negative diffusion width when its identification is weak);
// such draws are rejected and redrawn.
bool admissible_material_vector(const Eigen::VectorXd& p) {
  const double r_f = p[0], tg0 = p[1], tg1 = p[2];
  const double a_pre = p[3], e_act = p[4], g_fac = p[5], n_exp = p[6], b_d = p[7];
  const double a5 = p[12];
  const double b1 = p[13], b2 = p[14], b4 = p[16];
  return r_f > 0.0 && tg1 > tg0 && a_pre > 0.0 && e_act > 0.0 && g_fac > 0.0 &&
         g_fac < 1.0 && n_exp > 0.0 && b_d >= 0.05 && a5 > 0.0 && b1 > 0.0 && b2 > 0.0 &&
         b4 > 0.0;
}

}  // namespace

Eigen::VectorXd sample_material_inputs(const MaterialInputs& inputs, stats::RngStream& rng) {
  Eigen::VectorXd draw(inputs.mean.size());
  for (int attempt = 0; attempt < 256; ++attempt) {
    for (const auto& block : inputs.blocks) {
      if (block.empirical.rows() > 0) {
        const auto row = static_cast<Eigen::Index>(
            rng.index(static_cast<std::uint64_t>(block.empirical.rows())));
        const Eigen::VectorXd center = block.empirical.row(row).transpose();
        const stats::MvnSampler noise(center,
                                      block.empirical_noise[static_cast<std::size_t>(row)]);
        draw.segment(block.offset, block.size) = noise.sample(rng);
      } else {
        const stats::MvnSampler s(block.values, block.cov_sample);
        draw.segment(block.offset, block.size) = s.sample(rng);
      }
    }
    if (draw.size() != 17 || admissible_material_vector(draw)) return draw;
  }
  throw std::runtime_error("sample_material_inputs: no admissible draw in 256 attempts");
}

MaterialInputs inflate_variance(const MaterialInputs& inputs, double k) {
  if (k <= 0.0) throw std::invalid_argument("inflate_variance: k must be > 0");
  MaterialInputs out = inputs;
  const double root = std::sqrt(k);
  out.cov *= k;
  for (auto& block : out.blocks) {
    block.cov_sample *= k;
    for (auto& c : block.empirical_noise) c *= k;
    if (block.empirical.rows() > 0) {
      const Eigen::RowVectorXd mean = block.empirical.colwise().mean();
      out.cov.block(block.offset, block.offset, block.size, block.size) =
          inputs.cov.block(block.offset, block.offset, block.size, block.size) * k;
      block.empirical = ((block.empirical.rowwise() - mean) * root).rowwise() + mean;
    }
  }
  return out;
}

// --- boundary condition studies ---------------------------------------------

std::vector<std::string> boundary_names(const BoundaryInputSpec& spec) {
  std::vector<std::string> names;
  if (spec.include_dirichlet)
    for (std::size_t j = 0; j < spec.path_temps_c.size(); ++j)
      names.push_back("theta_hat_" + std::to_string(j + 1));
  names.emplace_back("h_conv");
  names.emplace_back("emissivity");
  return names;
}

Eigen::VectorXd boundary_mean(const BoundaryInputSpec& spec) {
  const auto np = spec.include_dirichlet ? spec.path_temps_c.size() : 0;
  Eigen::VectorXd mean(static_cast<Eigen::Index>(np) + 2);
  for (std::size_t j = 0; j < np; ++j) mean[static_cast<Eigen::Index>(j)] = spec.path_temps_c[j];
  mean[static_cast<Eigen::Index>(np)] = spec.h_mean;
  mean[static_cast<Eigen::Index>(np) + 1] = spec.eps_mean;
  return mean;
}

Eigen::MatrixXd boundary_cov(const BoundaryInputSpec& spec) {
  const auto np = spec.include_dirichlet ? spec.path_temps_c.size() : 0;
  const auto k = static_cast<Eigen::Index>(np) + 2;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t j = 0; j < np; ++j) {
    const double s = spec.temp_rel_sigma * std::abs(spec.path_temps_c[j]);
    cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = s * s;
  }
  cov(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np)) = spec.h_sigma * spec.h_sigma;
  cov(static_cast<Eigen::Index>(np) + 1, static_cast<Eigen::Index>(np) + 1) =
      spec.eps_sigma * spec.eps_sigma;
  return cov;
}

Eigen::VectorXd sample_boundary_inputs(const BoundaryInputSpec& spec, stats::RngStream& rng) {
  const auto np = spec.include_dirichlet ? spec.path_temps_c.size() : 0;
  Eigen::VectorXd draw(static_cast<Eigen::Index>(np) + 2);
  for (std::size_t j = 0; j < np; ++j) {
    const double s = spec.temp_rel_sigma * std::abs(spec.path_temps_c[j]);
    draw[static_cast<Eigen::Index>(j)] = spec.path_temps_c[j] + s * rng.normal();
  }
  const auto h_dist = stats::lognormal_from_moments(spec.h_mean, spec.h_sigma);
  const auto eps_dist = stats::beta_from_moments(spec.eps_mean, spec.eps_sigma);
  draw[static_cast<Eigen::Index>(np)] = stats::sample(stats::Distribution{h_dist}, rng);
  draw[static_cast<Eigen::Index>(np) + 1] = stats::sample(stats::Distribution{eps_dist}, rng);
  return draw;
}

// --- simulator bindings -----------------------------------------------------

Eigen::VectorXd output_grid(const StudyOptions& options) {
  return Eigen::VectorXd::LinSpaced(options.grid_points, 0.0,
                                    options.scenario.oven.times.back());
}

namespace {

Eigen::MatrixXd interpolate_probe(const simulate::SimResult& run, const Eigen::VectorXd& grid) {
  std::vector<double> t(run.times.begin(), run.times.end());
  std::vector<double> theta(run.probe_theta_k[0].size()), cure(run.probe_c[0].size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] = constitutive::to_celsius(run.probe_theta_k[0][i]);
    cure[i] = run.probe_c[0][i];
  }
  const MonotoneCubic theta_i(t, theta);
  const MonotoneCubic cure_i(t, cure);
  Eigen::MatrixXd out(grid.size(), 2);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    out(i, 0) = theta_i(grid[i]);
    out(i, 1) = cure_i(grid[i]);
  }
  return out;
}

constitutive::AllParams apply_material_vector(const constitutive::AllParams& base,
                                              const Eigen::VectorXd& p) {
  if (p.size() != 17)
    throw std::invalid_argument("material model expects 17 parameters");
  constitutive::AllParams out = base;
  out.glass = {p[0], p[1], p[2]};
  out.kinetics = {p[3], p[4], p[5], p[6], p[7]};
  out.heat = {p[8], p[9], p[10], p[11], p[12]};
  out.cond.b1 = p[13];
  out.cond.b2 = p[14];
  out.cond.b3 = p[15];
  out.cond.b4 = p[16];
  return out;
}

}  // namespace

ModelFn material_model(const StudyOptions& options) {
  const Eigen::VectorXd grid = output_grid(options);
  return [options, grid](const Eigen::VectorXd& p) {
    auto scenario = options.scenario;
    scenario.epoxy = apply_material_vector(options.scenario.epoxy, p);
    scenario.store_fields = false;
    const auto run = simulate::run_default_scenario(scenario);
    return interpolate_probe(run, grid);
  };
}

ModelFn boundary_model(const StudyOptions& options, const BoundaryInputSpec& spec) {
  const Eigen::VectorXd grid = output_grid(options);
  const bool dirichlet = spec.include_dirichlet;
  return [options, grid, dirichlet](const Eigen::VectorXd& p) {
    auto scenario = options.scenario;
    scenario.store_fields = false;
    Eigen::Index at = 0;
    if (dirichlet) {
      if (p.size() != static_cast<Eigen::Index>(scenario.oven.theta_c.size()) + 2)
        throw std::invalid_argument("boundary model: parameter count mismatch");
      for (std::size_t j = 0; j < scenario.oven.theta_c.size(); ++j)
        scenario.oven.theta_c[j] = p[at++];
    } else if (p.size() != 2) {
      throw std::invalid_argument("boundary model: expected (h, emissivity)");
    }
    scenario.h_conv = p[at];
    scenario.emissivity = std::clamp(p[at + 1], 0.0, 1.0);
    const auto run = simulate::run_default_scenario(scenario);
    return interpolate_probe(run, grid);
  };
}

}  // namespace cureuq::forward_uq
