#include "spex/geo.hpp"

#include <cmath>
#include <stdexcept>

namespace spex {

Eigen::Vector2d Projection::to_km(double lon, double lat) const {
  const double deg = M_PI / 180.0;
  const double x = kEarthRadiusKm * std::cos(lat_c * deg) * (lon - lon_c) * deg;
  const double y = kEarthRadiusKm * (lat - lat_c) * deg;
  return {x, y};
}

Projection make_projection(const std::vector<double>& lons,
                           const std::vector<double>& lats) {
  if (lons.empty() || lons.size() != lats.size())
    throw std::invalid_argument("make_projection: bad coordinate lists");
  Projection p;
  for (double v : lons) p.lon_c += v / static_cast<double>(lons.size());
  for (double v : lats) p.lat_c += v / static_cast<double>(lats.size());
  return p;
}

Eigen::MatrixXd distance_matrix(const Eigen::MatrixX2d& xy) {
  const auto n = xy.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = (xy.row(i) - xy.row(j)).norm();
    }
  }
  return d;
}

}  // namespace spex
