#pragma once

#include <vector>

namespace spex {

// Shape-preserving (Fritsch-Carlson) cubic interpolant through strictly
// increasing (x, y) knots; strictly increasing on the knot range, extended
// linearly outside with the endpoint tangents.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> x, std::vector<double> y);

  double operator()(double x) const;
  // inverse by bracketed bisection; tol is on the x (input) axis
  double inverse(double y, double x_tol = 1e-12) const;

  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }
  double y_min() const { return y_.front(); }
  double y_max() const { return y_.back(); }
  bool empty() const { return x_.empty(); }

 private:
  std::vector<double> x_, y_, m_;  // knots and tangents
  double slope_lo_ = 1.0, slope_hi_ = 1.0;
};

}  // namespace spex
