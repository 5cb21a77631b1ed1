#pragma once

// Calibration datasets: named predictor tuples with one scalar observation
// per row, plus CSV ingestion/emission. CSV dialect: comma separator, dot
// decimal, header row, UTF-8, LF endings. The observation is the last
// column unless named explicitly.

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace cureuq {

struct Dataset {
  std::vector<std::string> predictor_names;
  Eigen::MatrixXd predictors;    // n x p
  Eigen::VectorXd observations;  // n
  std::string label;

  Eigen::Index size() const { return observations.size(); }
  void validate() const;

  // Column by predictor name; throws if absent.
  Eigen::VectorXd predictor(const std::string& name) const;
};

Dataset read_dataset_csv(const std::string& path, const std::string& observation_column = "");
void write_dataset_csv(const std::string& path, const Dataset& d,
                       const std::string& observation_column);

}  // namespace cureuq
