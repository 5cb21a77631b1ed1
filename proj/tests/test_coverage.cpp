#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cureuq/coverage.hpp"

using namespace cureuq;
using namespace cureuq::coverage;

namespace {

const constitutive::AllParams ref = constitutive::reference_params();

double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto n = x.size();
  auto ranks = [n](const Eigen::VectorXd& v) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[order[static_cast<std::size_t>(i)]] = double(i);
    return r;
  };
  const Eigen::VectorXd rx = ranks(x), ry = ranks(y);
  const double mx = rx.mean(), my = ry.mean();
  const double cov = ((rx.array() - mx) * (ry.array() - my)).sum();
  const double sx = std::sqrt((rx.array() - mx).square().sum());
  const double sy = std::sqrt((ry.array() - my).square().sum());
  return cov / (sx * sy);
}

}  // namespace

TEST_CASE("heteroscedastic cp noise peaks at the glass transition") {
  const HeteroCpNoise n{16.3, 10.0, 7.0};
  for (const double c : {0.0, 0.52, 1.0}) {
    const double tg = constitutive::glass_transition(c, ref.glass);
    CHECK(noise_stddev_at(NoiseModel{n}, tg, c, ref.glass) ==
          doctest::Approx(8.0 * 16.3).epsilon(1e-12));
    CHECK(noise_stddev_at(NoiseModel{n}, tg + 200.0, c, ref.glass) ==
          doctest::Approx(16.3).epsilon(1e-3));
  }
}

TEST_CASE("uniform noise is variance matched via sqrt(3) sigma") {
  const double sigma = 4e-5;
  const UniformNoise u{std::sqrt(3.0) * sigma};
  CHECK(noise_stddev_at(NoiseModel{u}, 0, 0, ref.glass) == doctest::Approx(sigma).epsilon(1e-12));

  Dataset d;
  d.predictor_names = {"c"};
  d.predictors = Eigen::VectorXd::LinSpaced(20000, 0.0, 1.0);
  d.observations = Eigen::VectorXd::Zero(20000);
  d.label = "noise";
  stats::RngStream rng(3, 0);
  apply_noise(d, NoiseModel{u}, ref.glass, rng);
  const double var = d.observations.squaredNorm() / (d.size() - 1);
  CHECK(std::sqrt(var) == doctest::Approx(sigma).epsilon(0.03));
  CHECK(d.observations.cwiseAbs().maxCoeff() <= u.half_width);
}

TEST_CASE("hetero curing noise inflates residuals at low cure") {
  const HeteroCuringNoise n{};
  // sigma(c) from the stated constants: high near c = 0, dip, linear rise
  CHECK(noise_stddev_at(NoiseModel{n}, 0, 0.0, ref.glass) ==
        doctest::Approx(1e-5 / 1e-3).epsilon(1e-9));
  const double s_low = noise_stddev_at(NoiseModel{n}, 0, 0.02, ref.glass);
  const double s_mid = noise_stddev_at(NoiseModel{n}, 0, 0.45, ref.glass);
  CHECK(s_low > 5.0 * s_mid);

  // sampled |noise| reproduces the pattern
  Dataset d;
  d.predictor_names = {"c"};
  d.predictors = Eigen::VectorXd::LinSpaced(4000, 0.01, 0.98);
  d.observations = Eigen::VectorXd::Zero(4000);
  d.label = "noise";
  stats::RngStream rng(5, 0);
  apply_noise(d, NoiseModel{n}, ref.glass, rng);
  double low_sum = 0, mid_sum = 0;
  int low_n = 0, mid_n = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double c = d.predictors(i, 0);
    if (c < 0.05) {
      low_sum += std::abs(d.observations[i]);
      ++low_n;
    } else if (c > 0.3 && c < 0.6) {
      mid_sum += std::abs(d.observations[i]);
      ++mid_n;
    }
  }
  CHECK(low_sum / low_n > mid_sum / mid_n);
}

TEST_CASE("residual diagnostics: zero noise flat, gaussian trend-free, hetero trended") {
  // kinetics-style fit on a single curve
  pipeline::KineticsDesign design;
  design.temps_c = {110.0};
  design.c_ranges = {{0.1, 0.9}};
  design.points_per_curve = 120;
  design.step_consistent_chem = true;  // keep the zero-noise fit bias-free

  auto run_diag = [&](const NoiseModel* noise, std::uint64_t seed) {
    auto curves = pipeline::make_kinetics_data(ref, design);
    stats::RngStream rng(seed, 0);
    if (noise != nullptr) apply_noise(curves[0], *noise, ref.glass, rng);
    const Eigen::Vector4d init(ref.kinetics.a_pre, ref.kinetics.e_act, ref.kinetics.g_fac,
                               ref.kinetics.n_exp);
    const auto step = pipeline::make_kin_chem_step(curves, init);
    const auto bound = step.build({});
    const auto fit = calibrate::solve_nls(bound.model, bound.data, step.init);
    REQUIRE(fit.converged);
    return residual_diagnostics(bound.model, fit, bound.data, "c");
  };

  const auto clean = run_diag(nullptr, 0);
  CHECK(clean.abs_residual.maxCoeff() < 1e-10);
  CHECK(std::is_sorted(clean.predictor.data(), clean.predictor.data() + clean.predictor.size()));

  const NoiseModel gauss = GaussianNoise{4e-5};
  const auto g = run_diag(&gauss, 11);
  CHECK(std::abs(spearman(g.predictor, g.abs_residual)) < 0.15);

  const NoiseModel het = HeteroCuringNoise{};
  const auto h = run_diag(&het, 12);
  double low_sum = 0, mid_sum = 0;
  int low_n = 0, mid_n = 0;
  for (Eigen::Index i = 0; i < h.predictor.size(); ++i) {
    if (h.predictor[i] < 0.15) {
      low_sum += h.abs_residual[i];
      ++low_n;
    } else if (h.predictor[i] > 0.3 && h.predictor[i] < 0.6) {
      mid_sum += h.abs_residual[i];
      ++mid_n;
    }
  }
  CHECK(low_sum / low_n > mid_sum / mid_n);
}

TEST_CASE("sparse glass transition coverage: t beats normal, same seed reproduces") {
  CoverageCase c = make_case(CaseId::sparse_tg);
  c.n_cov = 300;
  c.workers = 2;
  const auto report = run_coverage(c, 42);
  REQUIRE(report.params.size() == 3);
  for (const auto& p : report.params) {
    // with n_D = 5 and three parameters the normal intervals undercover
    CHECK(p.normal_cov < p.t_cov);
    CHECK(p.normal_cov > 0.5);
    CHECK(p.t_cov > 0.8);
    CHECK(p.t_cov <= 1.0);
    CHECK(!p.has_prop);
  }

  const auto again = run_coverage(c, 42);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(report.params[j].normal_cov == again.params[j].normal_cov);
    CHECK(report.params[j].t_cov == again.params[j].t_cov);
  }

  CoverageCase marginal = c;
  marginal.marginal = true;
  const auto mreport = run_coverage(marginal, 43);
  for (const auto& p : mreport.params) {
    CHECK(p.normal_cov < p.t_cov);
    CHECK(p.t_cov > 0.8);
  }
}

TEST_CASE("kinetics coverage: propagation widens the diffusion parameter interval") {
  CoverageCase c = make_case(CaseId::kinetics);
  c.n_cov = 60;  // smoke-scale; the acceptance suite runs the full sizes
  c.workers = 2;
  const auto report = run_coverage(c, 7);
  REQUIRE(report.params.size() == 5);
  const auto& bd = report.params[4];
  CHECK(bd.has_prop);
  CHECK(bd.normal_prop_cov >= bd.normal_cov);
  // chem parameters behave like a healthy calibration
  for (int j = 0; j < 4; ++j) {
    CHECK(report.params[static_cast<std::size_t>(j)].normal_cov > 0.75);
  }
  CHECK(report.dropped <= 3);
}

TEST_CASE("heat capacity coverage: neglecting propagation collapses coverage") {
  CoverageCase c = make_case(CaseId::heat_capacity);
  c.cp_design.points_per_curve = 400;  // smoke-scale
  c.n_cov = 40;
  c.marginal = true;
  c.workers = 2;
  const auto report = run_coverage(c, 9);
  REQUIRE(report.params.size() == 5);
  for (const auto& p : report.params) {
    CHECK(p.has_prop);
    // plain intervals ignore the dominating glass transition uncertainty;
    // at this smoke-scale data volume the shortfall is already visible
    CHECK(p.normal_cov < 0.6);
    CHECK(p.normal_prop_cov > p.normal_cov);
    CHECK(p.normal_prop_cov - p.normal_cov > 0.1);
  }

  // conditional study with known glass transition parameters: noise is the
  // only uncertainty source and plain intervals behave nominally
  CoverageCase cond = make_case(CaseId::heat_capacity);
  cond.cp_design.points_per_curve = 400;
  cond.n_cov = 40;
  cond.marginal = false;
  cond.workers = 2;
  const auto creport = run_coverage(cond, 10);
  for (const auto& p : creport.params) {
    CHECK(!p.has_prop);
    CHECK(p.normal_cov > 0.8);
  }
}
