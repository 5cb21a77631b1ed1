// Command-line front end: data generation, multi-step calibration with
// uncertainty propagation, coverage studies, transient curing simulation,
// and forward uncertainty propagation. Every command is reproducible from
// its config file and seed; result payloads are byte-identical across
// re-runs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "cureuq/coverage.hpp"
#include "cureuq/forward_uq.hpp"
#include "cureuq/parallel.hpp"
#include "cureuq/pipeline.hpp"
#include "cureuq/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cureuq;

namespace {

constexpr const char* version_string = "0.1.0";

// FNV-1a over the config bytes and relevant arguments, recorded in the
// manifest so a result directory can be traced back to its inputs.
std::uint64_t fnv1a(const std::string& data, std::uint64_t hash = 1469598103934665603ULL) {
  for (const unsigned char ch : data) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& config_blob, std::uint64_t seed,
                    const std::vector<std::string>& inputs) {
  json m;
  m["command"] = command;
  m["config_hash"] = fnv1a(config_blob);
  m["seed"] = seed;
  m["version"] = version_string;
  m["inputs"] = inputs;
  write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  return json::parse(read_file(path));
}

double get_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

// --- parameter (de)serialization -------------------------------------------

json params_to_json(const constitutive::AllParams& p) {
  json j;
  j["r_f"] = p.glass.r_f;
  j["theta_g0"] = p.glass.theta_g0;
  j["theta_g1"] = p.glass.theta_g1;
  j["a_pre"] = p.kinetics.a_pre;
  j["e_act"] = p.kinetics.e_act;
  j["g_fac"] = p.kinetics.g_fac;
  j["n_exp"] = p.kinetics.n_exp;
  j["b_d"] = p.kinetics.b_d;
  j["alpha_theta"] = p.shrinkage.alpha_theta;
  j["alpha_c"] = p.shrinkage.alpha_c;
  j["alpha_theta_c"] = p.shrinkage.alpha_theta_c;
  j["alpha_theta_g"] = p.shrinkage.alpha_theta_g;
  j["a1"] = p.heat.a1;
  j["a2"] = p.heat.a2;
  j["a3"] = p.heat.a3;
  j["a4"] = p.heat.a4;
  j["a5"] = p.heat.a5;
  j["b1"] = p.cond.b1;
  j["b2"] = p.cond.b2;
  j["b3"] = p.cond.b3;
  j["b4"] = p.cond.b4;
  return j;
}

constitutive::AllParams params_from_json(const json& j,
                                         const constitutive::AllParams& base) {
  constitutive::AllParams p = base;
  auto set = [&j](double& slot, const char* key) {
    if (j.contains(key)) slot = j.at(key).get<double>();
  };
  set(p.glass.r_f, "r_f");
  set(p.glass.theta_g0, "theta_g0");
  set(p.glass.theta_g1, "theta_g1");
  set(p.kinetics.a_pre, "a_pre");
  set(p.kinetics.e_act, "e_act");
  set(p.kinetics.g_fac, "g_fac");
  set(p.kinetics.n_exp, "n_exp");
  set(p.kinetics.b_d, "b_d");
  set(p.shrinkage.alpha_theta, "alpha_theta");
  set(p.shrinkage.alpha_c, "alpha_c");
  set(p.shrinkage.alpha_theta_c, "alpha_theta_c");
  set(p.shrinkage.alpha_theta_g, "alpha_theta_g");
  set(p.heat.a1, "a1");
  set(p.heat.a2, "a2");
  set(p.heat.a3, "a3");
  set(p.heat.a4, "a4");
  set(p.heat.a5, "a5");
  set(p.cond.b1, "b1");
  set(p.cond.b2, "b2");
  set(p.cond.b3, "b3");
  set(p.cond.b4, "b4");
  return p;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return {};
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i),
                                             static_cast<Eigen::Index>(c)) = j.at(i).at(c);
  return m;
}

// --- in-silico data generation ----------------------------------------------

struct GenOptions {
  std::string out_dir;
  std::uint64_t seed = 0;
  bool clean = false;
  double sigma_tg = 4.0;
  double sigma_cdot = 4e-5;
  double sigma_cp = 16.3;
  double sigma_j = 5e-4;
  double sigma_atheta_rel = 0.02;
  double rho_ref = 1100.0;
  std::string noise_kind = "gaussian";  // gaussian | uniform | hetero
};

coverage::NoiseModel scalar_noise(const std::string& kind, double sigma, bool for_cp) {
  if (kind == "gaussian") return coverage::GaussianNoise{sigma};
  if (kind == "uniform") return coverage::UniformNoise{std::sqrt(3.0) * sigma};
  if (kind == "hetero")
    return for_cp ? coverage::NoiseModel{coverage::HeteroCpNoise{}}
                  : coverage::NoiseModel{coverage::HeteroCuringNoise{}};
  throw std::runtime_error("unknown noise kind: " + kind);
}

void generate_pipeline_data(const GenOptions& opt, const constitutive::AllParams& truth) {
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  stats::RngStream rng(opt.seed, 0);

  auto theta_g = pipeline::make_theta_g_data(truth.glass, {});
  if (!opt.clean) coverage::apply_noise(theta_g, coverage::GaussianNoise{opt.sigma_tg},
                                        truth.glass, rng);
  write_dataset_csv((dir / "theta_g.csv").string(), theta_g, "theta_g");

  pipeline::KineticsDesign kin_design;
  kin_design.step_consistent_chem = opt.clean;
  auto curves = pipeline::make_kinetics_data(truth, kin_design);
  for (auto& curve : curves) {
    if (!opt.clean)
      coverage::apply_noise(curve, scalar_noise(opt.noise_kind, opt.sigma_cdot, false),
                            truth.glass, rng);
    const auto theta = curve.predictor("theta");
    const int label = static_cast<int>(std::lround(theta[0]));
    write_dataset_csv((dir / ("kinetics_" + std::to_string(label) + ".csv")).string(), curve,
                      "cdot");
  }

  auto shrink_alpha = pipeline::make_shrink_alpha_data(truth, {});
  auto shrink_chem = pipeline::make_shrink_chem_data(truth, {});
  auto shrink_glass = pipeline::make_shrink_glass_data(truth, {});
  if (!opt.clean) {
    coverage::apply_noise(shrink_alpha, coverage::GaussianNoise{opt.sigma_j}, truth.glass, rng);
    coverage::apply_noise(shrink_chem, coverage::GaussianNoise{opt.sigma_j}, truth.glass, rng);
    coverage::apply_noise(shrink_glass, coverage::GaussianNoise{opt.sigma_j}, truth.glass, rng);
  }
  write_dataset_csv((dir / "shrink_alpha.csv").string(), shrink_alpha, "j");
  write_dataset_csv((dir / "shrink_chem.csv").string(), shrink_chem, "j");
  write_dataset_csv((dir / "shrink_glass.csv").string(), shrink_glass, "j");

  pipeline::CpDesign cp_design;
  cp_design.points_per_curve = 300;
  auto cp = pipeline::make_cp_data(truth, cp_design);
  if (!opt.clean)
    coverage::apply_noise(cp, scalar_noise(opt.noise_kind, opt.sigma_cp, true), truth.glass, rng);
  write_dataset_csv((dir / "cp.csv").string(), cp, "cp");

  auto diff = pipeline::make_diffusivity_data(truth, opt.rho_ref, {});
  if (!opt.clean) {
    const double sigma = opt.sigma_atheta_rel * diff.observations.cwiseAbs().mean();
    coverage::apply_noise(diff, coverage::GaussianNoise{sigma}, truth.glass, rng);
  }
  write_dataset_csv((dir / "diffusivity.csv").string(), diff, "a_theta");
}

void generate_case_data(const std::string& case_name, const GenOptions& opt,
                        const constitutive::AllParams& truth) {
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  stats::RngStream rng(opt.seed, 0);
  if (case_name == "sparse_tg") {
    auto d = pipeline::make_theta_g_data(truth.glass, {});
    if (!opt.clean)
      coverage::apply_noise(d, coverage::GaussianNoise{opt.sigma_tg}, truth.glass, rng);
    write_dataset_csv((dir / "theta_g.csv").string(), d, "theta_g");
  } else if (case_name == "kinetics") {
    auto curves = pipeline::make_kinetics_data(truth, {});
    for (auto& curve : curves) {
      if (!opt.clean)
        coverage::apply_noise(curve, scalar_noise(opt.noise_kind, opt.sigma_cdot, false),
                              truth.glass, rng);
      const auto theta = curve.predictor("theta");
      const int label = static_cast<int>(std::lround(theta[0]));
      write_dataset_csv((dir / ("kinetics_" + std::to_string(label) + ".csv")).string(), curve,
                        "cdot");
    }
  } else if (case_name == "heat_capacity") {
    auto d = pipeline::make_cp_data(truth, {});
    if (!opt.clean)
      coverage::apply_noise(d, scalar_noise(opt.noise_kind, opt.sigma_cp, true), truth.glass,
                            rng);
    write_dataset_csv((dir / "cp.csv").string(), d, "cp");
  } else if (case_name == "pipeline") {
    generate_pipeline_data(opt, truth);
  } else {
    throw std::runtime_error("unknown gen-data case: " + case_name);
  }
}

// --- pipeline data loading ---------------------------------------------------

pipeline::PipelineData load_pipeline_data(const fs::path& data_dir, double rho_ref) {
  pipeline::PipelineData d;
  d.theta_g = read_dataset_csv((data_dir / "theta_g.csv").string());
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("kinetics_", 0) == 0 && entry.path().extension() == ".csv")
      d.kinetics.push_back(read_dataset_csv(entry.path().string()));
  }
  std::sort(d.kinetics.begin(), d.kinetics.end(),
            [](const Dataset& a, const Dataset& b) { return a.label < b.label; });
  if (d.kinetics.empty()) throw std::runtime_error("no kinetics_*.csv in " + data_dir.string());
  d.shrink_alpha = read_dataset_csv((data_dir / "shrink_alpha.csv").string());
  d.shrink_chem = read_dataset_csv((data_dir / "shrink_chem.csv").string());
  d.shrink_glass = read_dataset_csv((data_dir / "shrink_glass.csv").string());
  d.cp = read_dataset_csv((data_dir / "cp.csv").string());
  d.diffusivity = read_dataset_csv((data_dir / "diffusivity.csv").string());
  d.rho_ref = rho_ref;
  return d;
}

// --- pipeline result emission -------------------------------------------------

void emit_pipeline_results(const fs::path& out_dir, const pipeline::PipelineResult& result,
                           bool write_empirical) {
  json steps = json::object();
  for (const auto& id : result.order) {
    const auto& set = result.sets.at(id);
    const auto& fit = result.fits.at(id);
    json s;
    json values = json::object(), dk_nls = json::object(), dk_total = json::object();
    for (std::size_t j = 0; j < set.names.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      values[set.names[j]] = set.values[jj];
      dk_nls[set.names[j]] =
          fit.has_covariance() ? std::sqrt(fit.covariance(jj, jj)) : 0.0;
      dk_total[set.names[j]] = std::sqrt(set.cov_total()(jj, jj));
    }
    s["values"] = values;
    s["dk_nls"] = dk_nls;
    s["dk_total"] = dk_total;
    s["cov_noise"] = matrix_to_json(set.cov_noise);
    s["cov_prop"] = matrix_to_json(set.cov_prop);
    s["method"] = set.method == pipeline::UncertainParameterSet::Method::mc     ? "mc"
                  : set.method == pipeline::UncertainParameterSet::Method::fosm ? "fosm"
                                                                                : "nls";
    s["iterations"] = fit.iterations;
    s["ssr"] = fit.ssr;
    s["n_data"] = fit.n_data;
    if (write_empirical && set.empirical.rows() > 0) {
      const std::string emp_name = id + "_empirical.csv";
      const std::string cov_name = id + "_empirical_noise.csv";
      {
        std::ofstream out(out_dir / emp_name, std::ios::binary);
        for (std::size_t j = 0; j < set.names.size(); ++j)
          out << set.names[j] << (j + 1 < set.names.size() ? ',' : '\n');
        char buf[40];
        for (Eigen::Index r = 0; r < set.empirical.rows(); ++r) {
          for (Eigen::Index c = 0; c < set.empirical.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", set.empirical(r, c));
            out << buf << (c + 1 < set.empirical.cols() ? ',' : '\n');
          }
        }
      }
      {
        std::ofstream out(out_dir / cov_name, std::ios::binary);
        const auto k = set.values.size();
        for (Eigen::Index c = 0; c < k * k; ++c) out << "c" << c << (c + 1 < k * k ? ',' : '\n');
        char buf[40];
        for (const auto& cov : set.empirical_noise_covs) {
          for (Eigen::Index r = 0; r < k; ++r)
            for (Eigen::Index c = 0; c < k; ++c) {
              std::snprintf(buf, sizeof buf, "%.17g", cov(r, c));
              out << buf << ((r * k + c) + 1 < k * k ? ',' : '\n');
            }
        }
      }
      s["empirical_csv"] = emp_name;
      s["empirical_noise_csv"] = cov_name;
    }
    steps[id] = s;
  }
  json root;
  root["steps"] = steps;
  root["order"] = result.order;
  write_text(out_dir / "calibration.json", root.dump(2) + "\n");
}


// Plain numeric CSV (header + rows) as a matrix.
Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv " + path.string());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

// Rebuilds the parameter sets needed by the forward studies from an
// emitted calibration directory.
pipeline::SetMap load_artifacts(const fs::path& dir) {
  const json root = json::parse(read_file(dir / "calibration.json"));
  pipeline::SetMap sets;
  for (const auto& [id, s] : root.at("steps").items()) {
    pipeline::UncertainParameterSet set;
    for (const auto& [name, value] : s.at("values").items()) {
      set.names.push_back(name);
    }
    // keep declaration order stable: values arrive sorted by json; reorder
    // to the canonical step order via the known step layouts
    static const std::map<std::string, std::vector<std::string>> layout = {
        {"theta_g", {"r_f", "theta_g0", "theta_g1"}},
        {"kin_chem", {"a_pre", "e_act", "g_fac", "n_exp"}},
        {"kin_bd", {"b_d"}},
        {"shrink_alpha", {"alpha_theta"}},
        {"shrink_chem", {"alpha_c", "alpha_theta_c"}},
        {"shrink_glass", {"alpha_theta_g"}},
        {"cp", {"a1", "a2", "a3", "a4", "a5"}},
        {"kappa", {"b1", "b2", "b3", "b4"}}};
    const auto it = layout.find(id);
    if (it != layout.end()) set.names = it->second;
    set.values.resize(static_cast<Eigen::Index>(set.names.size()));
    for (std::size_t j = 0; j < set.names.size(); ++j)
      set.values[static_cast<Eigen::Index>(j)] = s.at("values").at(set.names[j]).get<double>();
    set.cov_noise = matrix_from_json(s.at("cov_noise"));
    set.cov_prop = matrix_from_json(s.at("cov_prop"));
    const std::string method = s.at("method").get<std::string>();
    set.method = method == "mc"     ? pipeline::UncertainParameterSet::Method::mc
                 : method == "fosm" ? pipeline::UncertainParameterSet::Method::fosm
                                    : pipeline::UncertainParameterSet::Method::nls;
    if (s.contains("empirical_csv")) {
      set.empirical = read_matrix_csv(dir / s.at("empirical_csv").get<std::string>());
      const Eigen::MatrixXd covs =
          read_matrix_csv(dir / s.at("empirical_noise_csv").get<std::string>());
      const auto k = set.values.size();
      for (Eigen::Index r = 0; r < covs.rows(); ++r) {
        Eigen::MatrixXd cov(k, k);
        for (Eigen::Index a = 0; a < k; ++a)
          for (Eigen::Index b = 0; b < k; ++b) cov(a, b) = covs(r, a * k + b);
        set.empirical_noise_covs.push_back(cov);
      }
    }
    sets.emplace(id, std::move(set));
  }
  return sets;
}

// --- scenario configuration ---------------------------------------------------

simulate::ScenarioOptions scenario_from_json(const json& j) {
  simulate::ScenarioOptions o;
  if (!j.contains("h_c"))
    throw std::runtime_error("scenario config must set h_c (specific reaction enthalpy, J/kg)");
  o.h_c = j.at("h_c").get<double>();
  o.rho_ref = get_or(j, "rho_ref", o.rho_ref);
  o.epoxy_thickness = get_or(j, "epoxy_thickness", o.epoxy_thickness);
  o.base_thickness = get_or(j, "base_thickness", o.base_thickness);
  o.epoxy_cells = static_cast<int>(get_or(j, "epoxy_cells", o.epoxy_cells));
  o.base_cells = static_cast<int>(get_or(j, "base_cells", o.base_cells));
  o.h_conv = get_or(j, "h_conv", o.h_conv);
  o.emissivity = get_or(j, "emissivity", o.emissivity);
  if (j.contains("epoxy")) o.epoxy = params_from_json(j.at("epoxy"), o.epoxy);
  if (j.contains("path")) {
    simulate::TemperaturePath p;
    for (const auto& node : j.at("path")) {
      p.times.push_back(node.at(0).get<double>());
      p.theta_c.push_back(node.at(1).get<double>());
    }
    p.validate();
    o.oven = p;
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    o.solver.rel_tol = get_or(s, "rel_tol", o.solver.rel_tol);
    o.solver.abs_tol_theta = get_or(s, "abs_tol_theta", o.solver.abs_tol_theta);
    o.solver.abs_tol_c = get_or(s, "abs_tol_c", o.solver.abs_tol_c);
    o.solver.dt_init = get_or(s, "dt_init", o.solver.dt_init);
    o.solver.dt_min = get_or(s, "dt_min", o.solver.dt_min);
    o.solver.dt_max = get_or(s, "dt_max", o.solver.dt_max);
  }
  return o;
}

void write_series_csv(const fs::path& path, const std::vector<std::string>& header,
                      const std::vector<const std::vector<double>*>& columns) {
  std::ofstream out(path, std::ios::binary);
  for (std::size_t j = 0; j < header.size(); ++j)
    out << header[j] << (j + 1 < header.size() ? ',' : '\n');
  char buf[40];
  const std::size_t n = columns.front()->size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", (*columns[j])[i]);
      out << buf << (j + 1 < columns.size() ? ',' : '\n');
    }
  }
}

void emit_uq_result(const fs::path& path, const forward_uq::UQResult& r) {
  std::ofstream out(path, std::ios::binary);
  out << "t,theta_mean,theta_std,c_mean,c_std\n";
  char buf[40];
  for (Eigen::Index i = 0; i < r.grid.size(); ++i) {
    const double vals[5] = {r.grid[i], r.mean(i, 0), r.stddev(i, 0), r.mean(i, 1),
                            r.stddev(i, 1)};
    for (int j = 0; j < 5; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", vals[j]);
      out << buf << (j + 1 < 5 ? ',' : '\n');
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermo-chemical curing model calibration and uncertainty propagation"};
  app.require_subcommand(1);
  unsigned workers = default_worker_count();
  app.add_option("--threads", workers, "worker threads for parallel sections");

  std::string config_path, data_dir, out_dir = ".", artifacts_dir;
  std::uint64_t seed = 0;

  const char* env_data = std::getenv("CUREUQ_DATA_DIR");
  if (env_data != nullptr) data_dir = env_data;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write in-silico datasets as CSV");
  gen->fallthrough();
  std::string gen_case = "pipeline";
  GenOptions gen_opt;
  gen->add_option("--case", gen_case, "sparse_tg | kinetics | heat_capacity | pipeline");
  gen->add_option("--out", gen_opt.out_dir, "output directory")->required();
  gen->add_option("--seed", gen_opt.seed, "noise seed");
  gen->add_flag("--clean", gen_opt.clean, "emit noise-free observations");
  gen->add_option("--noise", gen_opt.noise_kind, "gaussian | uniform | hetero");
  gen->add_option("--sigma-tg", gen_opt.sigma_tg, "glass transition noise [degC]");
  gen->add_option("--sigma-cdot", gen_opt.sigma_cdot, "curing rate noise [1/s]");
  gen->add_option("--sigma-cp", gen_opt.sigma_cp, "heat capacity noise [J/(kg K)]");
  gen->add_option("--sigma-j", gen_opt.sigma_j, "deformation noise [-]");
  gen->add_option("--sigma-atheta-rel", gen_opt.sigma_atheta_rel,
                  "relative diffusivity noise [-]");

  // calibrate / propagate
  auto* cal = app.add_subcommand("calibrate", "multi-step nonlinear least-squares calibration");
  cal->fallthrough();
  cal->add_option("--config", config_path, "pipeline config JSON");
  cal->add_option("--data", data_dir, "dataset directory");
  cal->add_option("--out", out_dir, "output directory");

  auto* prop = app.add_subcommand("propagate", "calibration with uncertainty propagation");
  prop->fallthrough();
  std::string prop_method = "fosm";
  int prop_nmc = 2000;
  prop->add_option("--config", config_path, "pipeline config JSON");
  prop->add_option("--data", data_dir, "dataset directory");
  prop->add_option("--out", out_dir, "output directory");
  prop->add_option("--method", prop_method, "fosm | mc");
  prop->add_option("--nmc", prop_nmc, "Monte Carlo sample count");
  prop->add_option("--seed", seed, "sampling seed");

  // coverage
  auto* cov = app.add_subcommand("coverage", "frequentist coverage study");
  cov->fallthrough();
  std::string cov_case = "sparse_tg", cov_noise = "gaussian";
  int n_cov = 1000, nd_tg = 5, cp_points = 17500;
  bool marginal = false, no_propagation = false, diagonal_truth = false;
  cov->add_option("--case", cov_case, "sparse_tg | kinetics | heat_capacity");
  cov->add_option("--ncov", n_cov, "repetitions");
  cov->add_option("--ndtg", nd_tg, "glass transition data count");
  cov->add_option("--cp-points", cp_points, "heat capacity points per curve");
  cov->add_option("--noise", cov_noise, "gaussian | uniform | hetero");
  cov->add_flag("--marginal", marginal, "resample the truth each repetition");
  cov->add_flag("--no-propagation", no_propagation, "skip FOSM-propagated intervals");
  cov->add_flag("--diagonal-truth", diagonal_truth, "ignore truth-sampling correlations");
  cov->add_option("--seed", seed, "repetition seed");
  cov->add_option("--out", out_dir, "output directory");

  // simulate
  auto* sim = app.add_subcommand("simulate", "transient curing simulation");
  sim->fallthrough();
  std::string snapshot_list;
  sim->add_option("--config", config_path, "scenario config JSON")->required();
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--snapshots", snapshot_list, "comma-separated times for field snapshots");

  // forward-uq
  auto* fuq = app.add_subcommand("forward-uq", "forward uncertainty propagation");
  fuq->fallthrough();
  std::string mode = "case_i";
  double inflation = 1.0;
  int fuq_nmc = 300;
  bool fosm_only = false, mc_only = false;
  fuq->add_option("--config", config_path, "scenario config JSON")->required();
  fuq->add_option("--mode", mode, "case_i | case_ii | case_iii_full | case_iii_mixed");
  fuq->add_option("--k", inflation, "variance inflation factor (case_ii)");
  fuq->add_option("--nmc", fuq_nmc, "Monte Carlo run count");
  fuq->add_option("--seed", seed, "sampling seed");
  fuq->add_option("--artifacts", artifacts_dir,
                  "calibration output directory with Monte Carlo artifacts (cases i/ii)");
  fuq->add_flag("--fosm-only", fosm_only, "skip the Monte Carlo reference");
  fuq->add_flag("--mc-only", mc_only, "skip the FOSM run");
  fuq->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const fs::path out(out_dir);
    fs::create_directories(out);

    if (gen->parsed()) {
      generate_case_data(gen_case, gen_opt, constitutive::reference_params());
      write_manifest(fs::path(gen_opt.out_dir), "gen-data",
                     gen_case + ":" + std::to_string(gen_opt.seed) + ":" + gen_opt.noise_kind,
                     gen_opt.seed, {});
      std::printf("gen-data: wrote %s datasets to %s\n", gen_case.c_str(),
                  gen_opt.out_dir.c_str());
      return 0;
    }

    if (cal->parsed() || prop->parsed()) {
      const json cfg = load_config(config_path);
      const double rho_ref = get_or(cfg, "rho_ref", 1100.0);
      if (data_dir.empty() && cfg.contains("data_dir"))
        data_dir = cfg.at("data_dir").get<std::string>();
      if (data_dir.empty()) throw std::runtime_error("no dataset directory given");
      const auto data = load_pipeline_data(data_dir, rho_ref);
      auto init = constitutive::reference_params();
      if (cfg.contains("init")) init = params_from_json(cfg.at("init"), init);
      const auto steps = pipeline::standard_steps(data, init);

      pipeline::PipelineOptions po;
      po.workers = workers;
      po.solve.max_iterations = 2000;
      if (prop->parsed()) {
        po.method = prop_method == "mc" ? pipeline::Method::mc : pipeline::Method::fosm;
        po.n_mc = cfg.contains("n_mc") ? cfg.at("n_mc").get<int>() : prop_nmc;
        po.seed = cfg.contains("seed") ? cfg.at("seed").get<std::uint64_t>() : seed;
      }
      const auto result = pipeline::run_pipeline(steps, po);
      emit_pipeline_results(out, result, po.method == pipeline::Method::mc);
      write_manifest(out, cal->parsed() ? "calibrate" : "propagate",
                     cfg.dump() + prop_method, po.seed, {data_dir});
      std::printf("%s: %zu steps -> %s/calibration.json\n",
                  cal->parsed() ? "calibrate" : "propagate", result.order.size(),
                  out_dir.c_str());
      return 0;
    }

    if (cov->parsed()) {
      coverage::CoverageCase c = coverage::make_case(
          cov_case == "kinetics"        ? coverage::CaseId::kinetics
          : cov_case == "heat_capacity" ? coverage::CaseId::heat_capacity
                                        : coverage::CaseId::sparse_tg);
      c.n_cov = n_cov;
      c.n_d_tg = nd_tg;
      c.cp_design.points_per_curve = cp_points;
      c.marginal = marginal;
      c.propagate = !no_propagation;
      c.truth_sampling_diagonal = diagonal_truth;
      c.workers = workers;
      if (cov_noise == "uniform") {
        const double sigma = cov_case == "heat_capacity" ? 16.3
                             : cov_case == "kinetics"    ? 4e-5
                                                         : 4.0;
        c.noise = coverage::UniformNoise{std::sqrt(3.0) * sigma};
      } else if (cov_noise == "hetero") {
        c.noise = cov_case == "heat_capacity"
                      ? coverage::NoiseModel{coverage::HeteroCpNoise{}}
                      : coverage::NoiseModel{coverage::HeteroCuringNoise{}};
      }
      const auto report = coverage::run_coverage(c, seed);

      // CSV mirroring the coverage tables: one parameter per column,
      // interval families as rows, propagated rows when available.
      std::ofstream csv(out / "coverage.csv", std::ios::binary);
      csv << "intervals";
      for (const auto& p : report.params) csv << ',' << p.name;
      csv << '\n';
      auto row = [&](const char* name, auto get) {
        csv << name;
        char buf[32];
        for (const auto& p : report.params) {
          std::snprintf(buf, sizeof buf, "%.4f", get(p));
          csv << ',' << buf;
        }
        csv << '\n';
      };
      row("normal", [](const auto& p) { return p.normal_cov; });
      row("t", [](const auto& p) { return p.t_cov; });
      if (report.params.back().has_prop) {
        row("normal_propagated", [](const auto& p) { return p.normal_prop_cov; });
        row("t_propagated", [](const auto& p) { return p.t_prop_cov; });
      }
      csv.close();

      json j;
      j["case"] = cov_case;
      j["noise"] = cov_noise;
      j["marginal"] = marginal;
      j["repetitions"] = report.repetitions;
      j["dropped"] = report.dropped;
      json params = json::object();
      for (const auto& p : report.params) {
        json q;
        q["normal"] = p.normal_cov;
        q["t"] = p.t_cov;
        if (p.has_prop) {
          q["normal_propagated"] = p.normal_prop_cov;
          q["t_propagated"] = p.t_prop_cov;
        }
        params[p.name] = q;
      }
      j["coverage"] = params;
      write_text(out / "coverage.json", j.dump(2) + "\n");
      write_manifest(out, "coverage",
                     cov_case + cov_noise + std::to_string(n_cov) + std::to_string(nd_tg) +
                         (marginal ? "m" : "c"),
                     seed, {});
      std::printf("coverage: %s repetitions=%d dropped=%d -> %s/coverage.csv\n",
                  cov_case.c_str(), report.repetitions, report.dropped, out_dir.c_str());
      return 0;
    }

    if (sim->parsed()) {
      const json cfg = load_config(config_path);
      auto scenario = scenario_from_json(cfg);
      scenario.store_fields = !snapshot_list.empty();
      const auto run = simulate::run_default_scenario(scenario);

      std::vector<double> theta_c(run.probe_theta_k[0].size());
      for (std::size_t i = 0; i < theta_c.size(); ++i)
        theta_c[i] = constitutive::to_celsius(run.probe_theta_k[0][i]);
      std::vector<double> dts(run.times.size(), 0.0);
      for (std::size_t i = 0; i + 1 < run.times.size(); ++i) dts[i + 1] = run.dts[i];
      write_series_csv(out / "probe.csv", {"t", "dt", "theta", "c"},
                       {&run.times, &dts, &theta_c, &run.probe_c[0]});

      if (!snapshot_list.empty()) {
        const simulate::Semidiscretization system(simulate::default_domain(scenario));
        std::istringstream ss(snapshot_list);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          const double t_snap = std::stod(tok);
          const auto it = std::lower_bound(run.times.begin(), run.times.end(), t_snap);
          const auto idx = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(it - run.times.begin(),
                                       static_cast<std::ptrdiff_t>(run.times.size()) - 1));
          std::vector<double> x, th, cc;
          for (Eigen::Index i = 0; i < system.cells(); ++i) {
            x.push_back(system.cell_center(i));
            th.push_back(constitutive::to_celsius(run.theta_fields[idx][i]));
            cc.push_back(run.c_fields[idx][i]);
          }
          char fname[64];
          std::snprintf(fname, sizeof fname, "field_t%.0f.csv", run.times[idx]);
          write_series_csv(out / fname, {"x", "theta", "c"}, {&x, &th, &cc});
        }
      }
      write_manifest(out, "simulate", cfg.dump(), 0, {config_path});
      std::printf("simulate: %ld accepted steps -> %s/probe.csv\n", run.steps_accepted,
                  out_dir.c_str());
      return 0;
    }

    if (fuq->parsed()) {
      const json cfg = load_config(config_path);
      forward_uq::StudyOptions study;
      study.scenario = scenario_from_json(cfg);
      study.grid_points = static_cast<Eigen::Index>(get_or(cfg, "grid_points", 2000));
      study.workers = workers;
      const Eigen::VectorXd grid = forward_uq::output_grid(study);

      forward_uq::ForwardFosmOptions fosm_opt;
      fosm_opt.workers = workers;
      forward_uq::ForwardMcOptions mc_opt;
      mc_opt.workers = workers;

      if (mode == "case_i" || mode == "case_ii") {
        if (artifacts_dir.empty())
          throw std::runtime_error("cases i/ii need --artifacts from `propagate --method mc`");
        const auto sets = load_artifacts(artifacts_dir);
        auto inputs = forward_uq::material_inputs_from_pipeline(sets);
        if (mode == "case_ii") inputs = forward_uq::inflate_variance(inputs, inflation);
        // simulate around the calibrated values
        study.scenario.epoxy = pipeline::params_from_sets(sets);
        const auto model = forward_uq::material_model(study);
        if (!mc_only) {
          const auto r = forward_uq::fosm_forward(model, inputs.mean, inputs.cov, grid, fosm_opt);
          emit_uq_result(out / "fosm.csv", r);
          std::printf("forward-uq fosm: %d evaluations\n", r.evaluations);
        }
        if (!fosm_only) {
          const auto r = forward_uq::mc_forward(
              model,
              [&inputs](stats::RngStream& rng) {
                return forward_uq::sample_material_inputs(inputs, rng);
              },
              fuq_nmc, seed, grid, mc_opt);
          emit_uq_result(out / "mc.csv", r);
          std::printf("forward-uq mc: %d runs, %d dropped\n", r.evaluations, r.dropped);
        }
      } else if (mode == "case_iii_full" || mode == "case_iii_mixed") {
        forward_uq::BoundaryInputSpec spec;
        spec.include_dirichlet = mode == "case_iii_full";
        spec.path_temps_c = study.scenario.oven.theta_c;
        spec.h_mean = study.scenario.h_conv;
        spec.eps_mean = study.scenario.emissivity;
        spec.h_sigma = 0.1 * spec.h_mean;
        spec.eps_sigma = 0.1 * spec.eps_mean;
        const auto model = forward_uq::boundary_model(study, spec);
        if (!mc_only) {
          const auto r = forward_uq::fosm_forward(model, forward_uq::boundary_mean(spec),
                                                  forward_uq::boundary_cov(spec), grid, fosm_opt);
          emit_uq_result(out / "fosm.csv", r);
          std::printf("forward-uq fosm: %d evaluations\n", r.evaluations);
        }
        if (!fosm_only) {
          const auto r = forward_uq::mc_forward(
              model,
              [&spec](stats::RngStream& rng) {
                return forward_uq::sample_boundary_inputs(spec, rng);
              },
              fuq_nmc, seed, grid, mc_opt);
          emit_uq_result(out / "mc.csv", r);
          std::printf("forward-uq mc: %d runs, %d dropped\n", r.evaluations, r.dropped);
        }
      } else {
        throw std::runtime_error("unknown forward-uq mode: " + mode);
      }
      write_manifest(out, "forward-uq", cfg.dump() + mode + std::to_string(inflation), seed,
                     {config_path, artifacts_dir});
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
