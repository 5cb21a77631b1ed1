#include "cureuq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cureuq {

void Dataset::validate() const {
  if (observations.size() < 1) throw std::invalid_argument("dataset: empty");
  if (predictors.rows() != observations.size())
    throw std::invalid_argument("dataset: predictor/observation row mismatch");
  if (static_cast<Eigen::Index>(predictor_names.size()) != predictors.cols())
    throw std::invalid_argument("dataset: predictor name/column mismatch");
  if (!predictors.allFinite() || !observations.allFinite())
    throw std::invalid_argument("dataset: non-finite entries");
}

Eigen::VectorXd Dataset::predictor(const std::string& name) const {
  for (std::size_t j = 0; j < predictor_names.size(); ++j)
    if (predictor_names[j] == name) return predictors.col(static_cast<Eigen::Index>(j));
  throw std::invalid_argument("dataset '" + label + "': no predictor named '" + name + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path, const std::string& observation_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2) throw std::runtime_error("dataset needs >= 2 columns: " + path);

  std::size_t obs_col = header.size() - 1;
  if (!observation_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), observation_column);
    if (it == header.end())
      throw std::runtime_error("no column '" + observation_column + "' in " + path);
    obs_col = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("ragged row in " + path + ": " + line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      std::size_t pos = 0;
      const double v = std::stod(f, &pos);
      if (pos != f.size()) throw std::runtime_error("bad number '" + f + "' in " + path);
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("dataset has no data rows: " + path);

  Dataset d;
  d.label = path;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(header.size() - 1);
  d.predictors.resize(n, p);
  d.observations.resize(n);
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != obs_col) d.predictor_names.push_back(header[j]);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index pj = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == obs_col)
        d.observations[i] = rows[static_cast<std::size_t>(i)][j];
      else
        d.predictors(i, pj++) = rows[static_cast<std::size_t>(i)][j];
    }
  }
  d.validate();
  return d;
}

void write_dataset_csv(const std::string& path, const Dataset& d,
                       const std::string& observation_column) {
  d.validate();
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  for (const auto& name : d.predictor_names) out << name << ',';
  out << observation_column << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.predictors.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", d.predictors(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", d.observations[i]);
    out << buf << '\n';
  }
}

}  // namespace cureuq
