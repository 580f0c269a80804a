#pragma once

#include <Eigen/Core>
#include <vector>

namespace spex {

struct BBox {
  double lon0, lat0, lon1, lat1;
  bool contains(double lon, double lat) const {
    return lon >= lon0 && lon <= lon1 && lat >= lat0 && lat <= lat1;
  }
};

// Local equirectangular projection about (lon_c, lat_c); x,y in km.
struct Projection {
  double lon_c = 0.0, lat_c = 0.0;
  static constexpr double kEarthRadiusKm = 6371.0;

  Eigen::Vector2d to_km(double lon, double lat) const;
};

// Projection centred at the centroid of the given coordinates.
Projection make_projection(const std::vector<double>& lons,
                           const std::vector<double>& lats);

// pairwise Euclidean distances (km) of projected points, n x n
Eigen::MatrixXd distance_matrix(const Eigen::MatrixX2d& xy);

}  // namespace spex
