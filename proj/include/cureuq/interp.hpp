#pragma once

// Monotone cubic interpolation (Fritsch-Carlson slopes). Adaptive solver
// output lands on irregular time grids; statistics across runs are formed
// after interpolation onto a common grid, and monotone cubics cannot
// overshoot between samples.

#include <vector>

namespace cureuq {

class MonotoneCubic {
 public:
  // x strictly increasing, sizes equal and >= 2
  MonotoneCubic(std::vector<double> x, std::vector<double> y);

  // evaluates with constant extrapolation beyond the ends
  double operator()(double q) const;

 private:
  std::vector<double> x_, y_, slope_;
};

}  // namespace cureuq
