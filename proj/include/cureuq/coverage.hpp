#pragma once

// In-silico experiment generation and frequentist coverage evaluation for
// the three calibration case studies: sparse glass transition data, dense
// curing kinetics with propagation into the diffusion parameter, and heat
// capacity with propagation into all five parameters.

#include <cstdint>
#include <variant>

#include "cureuq/calibrate.hpp"
#include "cureuq/constitutive.hpp"
#include "cureuq/dataset.hpp"
#include "cureuq/pipeline.hpp"
#include "cureuq/stats.hpp"

namespace cureuq::coverage {

// --- observation noise ------------------------------------------------------

struct GaussianNoise {
  double sigma = 0.0;
};

// Symmetric uniform on [-half_width, half_width]; matched-variance
// counterpart of a Gaussian has half_width = sqrt(3) sigma.
struct UniformNoise {
  double half_width = 0.0;
};

// Heteroscedastic curing-rate noise sigma(c) = k1/(c + k2) + k3 c.
struct HeteroCuringNoise {
  double k1 = 1e-5;
  double k2 = 1e-3;
  double k3 = 4.5e-5;
};

// Heteroscedastic heat-capacity noise, peaked at the glass transition:
// sigma(theta, c) = sigma_min (1 + amplitude exp(-(theta - theta_g(c))^2 / (2 omega^2))).
struct HeteroCpNoise {
  double sigma_min = 16.3;
  double omega = 10.0;
  double amplitude = 7.0;
};

using NoiseModel = std::variant<GaussianNoise, UniformNoise, HeteroCuringNoise, HeteroCpNoise>;

// Pointwise standard deviation of the noise model at a predictor location.
double noise_stddev_at(const NoiseModel& noise, double theta, double c,
                       const constitutive::GlassTransitionParams& gp);

// Adds one noise realization to the observations in place.
void apply_noise(Dataset& data, const NoiseModel& noise,
                 const constitutive::GlassTransitionParams& gp, stats::RngStream& rng);

// --- case definitions -------------------------------------------------------

enum class CaseId { sparse_tg, kinetics, heat_capacity };

struct CoverageCase {
  CaseId id = CaseId::sparse_tg;
  NoiseModel noise = GaussianNoise{4.0};
  int n_cov = 1000;
  bool marginal = false;   // resample the truth each repetition
  bool propagate = true;   // also form FOSM-propagated intervals (cases 2, 3)
  double level = 0.95;

  int n_d_tg = 5;          // glass transition data count (all cases)
  double sigma_tg = 4.0;   // Gaussian noise on glass transition data

  pipeline::KineticsDesign kinetics_design;  // case 2
  pipeline::CpDesign cp_design;              // case 3

  // Truth sampling uses the full pilot covariance by default; the diagonal
  // switch drops cross-parameter correlations.
  bool truth_sampling_diagonal = false;

  constitutive::AllParams truth = constitutive::reference_params();
  unsigned workers = 1;
};

// Case presets with the reference noise levels: sigma = 4 degC (case 1),
// sigma_cdot = 4e-5 1/s (case 2), sigma_cp = 16.3 J/(kg K) (case 3);
// uniform half-widths are variance-matched with sqrt(3) sigma.
CoverageCase make_case(CaseId id);

struct ParamCoverage {
  std::string name;
  // empirical coverage fractions at the nominal level
  double normal_cov = 0.0;
  double t_cov = 0.0;
  // with FOSM propagation; NaN when not applicable
  double normal_prop_cov = 0.0;
  double t_prop_cov = 0.0;
  bool has_prop = false;
};

struct CoverageReport {
  std::vector<ParamCoverage> params;
  int repetitions = 0;
  int dropped = 0;
};

// Clean data for one repetition of a case at the given truth (no noise).
// sparse_tg: {theta_g}; kinetics: per-temperature curves then merged by the
// step builders; heat_capacity: {cp data}.
std::vector<Dataset> generate_insilico(const CoverageCase& c,
                                       const constitutive::AllParams& truth);

CoverageReport run_coverage(const CoverageCase& c, std::uint64_t seed);

// --- residual diagnostics ---------------------------------------------------

struct ResidualDiagnostics {
  Eigen::VectorXd predictor;     // sorted ascending
  Eigen::VectorXd abs_residual;  // matching |r_i|
};

ResidualDiagnostics residual_diagnostics(const calibrate::ResidualModel& model,
                                         const calibrate::FitResult& fit, const Dataset& data,
                                         const std::string& predictor_name);

}  // namespace cureuq::coverage
