#include "spex/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spex {

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n)
    throw std::invalid_argument("MonotoneCubic: need two or more knots");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x_[i] < x_[i + 1]) || !(y_[i] < y_[i + 1]))
      throw std::invalid_argument("MonotoneCubic: knots must be strictly increasing");

  std::vector<double> h(n - 1), s(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    s[i] = (y_[i + 1] - y_[i]) / h[i];
  }

  m_.assign(n, 0.0);
  if (n == 2) {
    m_[0] = m_[1] = s[0];
  } else {
    // one-sided endpoint tangents, clipped to preserve monotonicity
    auto endpoint = [](double h0, double h1, double s0, double s1) {
      double m = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
      if (m * s0 <= 0.0) return 0.0;
      if (std::abs(m) > 3.0 * std::abs(s0)) return 3.0 * s0;
      return m;
    };
    m_[0] = endpoint(h[0], h[1], s[0], s[1]);
    m_[n - 1] = endpoint(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      // weighted harmonic mean of adjacent secants
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      m_[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
    }
  }

  slope_lo_ = m_[0] > 0.0 ? m_[0] : s[0];
  slope_hi_ = m_[n - 1] > 0.0 ? m_[n - 1] : s[n - 2];
}

double MonotoneCubic::operator()(double x) const {
  if (empty()) throw std::logic_error("MonotoneCubic: empty interpolant");
  if (x <= x_.front()) return y_.front() + slope_lo_ * (x - x_.front());
  if (x >= x_.back()) return y_.back() + slope_hi_ * (x - x_.back());
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * y_[i] + h10 * h * m_[i] + h01 * y_[i + 1] + h11 * h * m_[i + 1];
}

double MonotoneCubic::inverse(double y, double x_tol) const {
  if (empty()) throw std::logic_error("MonotoneCubic: empty interpolant");
  if (y <= y_.front()) return x_.front() + (y - y_.front()) / slope_lo_;
  if (y >= y_.back()) return x_.back() + (y - y_.back()) / slope_hi_;
  const auto it = std::upper_bound(y_.begin(), y_.end(), y);
  const std::size_t i = static_cast<std::size_t>(it - y_.begin()) - 1;
  double lo = x_[i], hi = x_[i + 1];
  // bracketed bisection on the Hermite segment
  while (hi - lo > x_tol) {
    const double mid = 0.5 * (lo + hi);
    if ((*this)(mid) < y)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace spex
