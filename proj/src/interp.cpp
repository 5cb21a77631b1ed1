#include "cureuq/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cureuq {

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const auto n = x_.size();
  if (n < 2 || y_.size() != n)
    throw std::invalid_argument("MonotoneCubic: need >= 2 matching nodes");
  for (std::size_t i = 1; i < n; ++i)
    if (x_[i] <= x_[i - 1]) throw std::invalid_argument("MonotoneCubic: x must increase");

  std::vector<double> h(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    d[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  slope_.assign(n, 0.0);
  // interior: weighted harmonic mean where the secants agree in sign
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (d[i - 1] * d[i] <= 0.0) {
      slope_[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      slope_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
    }
  }
  // endpoints: one-sided three-point estimate, clipped for monotonicity
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m * d0 <= 0.0) m = 0.0;
    else if (d0 * d1 < 0.0 && std::abs(m) > 3.0 * std::abs(d0)) m = 3.0 * d0;
    return m;
  };
  if (n == 2) {
    slope_[0] = slope_[1] = d[0];
  } else {
    slope_[0] = endpoint(h[0], h[1], d[0], d[1]);
    slope_[n - 1] = endpoint(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
  }
}

double MonotoneCubic::operator()(double q) const {
  if (q <= x_.front()) return y_.front();
  if (q >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), q);
  const auto j = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[j + 1] - x_[j];
  const double s = (q - x_[j]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  return h00 * y_[j] + h10 * h * slope_[j] + h01 * y_[j + 1] + h11 * h * slope_[j + 1];
}

}  // namespace cureuq
