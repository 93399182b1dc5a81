#include "rtksim/geodesy.hpp"

#include <cmath>

namespace rtksim {

GeodeticCoord GeodeticCoord::from_degrees(double lat_deg, double lon_deg,
                                          double h) {
  constexpr double d2r = M_PI / 180.0;
  return GeodeticCoord{lat_deg * d2r, lon_deg * d2r, h};
}

EcefCoord geodetic_to_ecef(const GeodeticCoord& g) {
  const double sin_lat = std::sin(g.lat);
  const double cos_lat = std::cos(g.lat);
  // prime vertical radius of curvature
  const double n = kWgs84SemiMajorAxis /
                   std::sqrt(1.0 - kWgs84Ecc2 * sin_lat * sin_lat);
  return EcefCoord{(n + g.height) * cos_lat * std::cos(g.lon),
                   (n + g.height) * cos_lat * std::sin(g.lon),
                   (n * (1.0 - kWgs84Ecc2) + g.height) * sin_lat};
}

GeodeticCoord ecef_to_geodetic(const EcefCoord& p) {
  const double r = std::hypot(p.x(), p.y());
  GeodeticCoord g;
  g.lon = r < 1.0 ? 0.0 : std::atan2(p.y(), p.x());

  // Fixed-point iteration on latitude; starts from the spherical value.
  double lat = std::atan2(p.z(), r * (1.0 - kWgs84Ecc2));
  double h = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double sin_lat = std::sin(lat);
    const double n = kWgs84SemiMajorAxis /
                     std::sqrt(1.0 - kWgs84Ecc2 * sin_lat * sin_lat);
    const double h_prev = h;
    if (r > 1.0) {
      h = r / std::cos(lat) - n;
      lat = std::atan2(p.z(), r * (1.0 - kWgs84Ecc2 * n / (n + h)));
    } else {
      // On the axis the longitude is degenerate and cos(lat) ~ 0.
      lat = p.z() >= 0.0 ? M_PI / 2.0 : -M_PI / 2.0;
      h = std::abs(p.z()) - n * (1.0 - kWgs84Ecc2);
    }
    if (std::abs(h - h_prev) < 1e-4 && i > 0) break;
  }
  g.lat = lat;
  g.height = h;
  return g;
}

Eigen::Matrix3d enu_rotation(const GeodeticCoord& origin) {
  const double sl = std::sin(origin.lat), cl = std::cos(origin.lat);
  const double so = std::sin(origin.lon), co = std::cos(origin.lon);
  Eigen::Matrix3d r;
  r << -so, co, 0.0,
       -sl * co, -sl * so, cl,
       cl * co, cl * so, sl;
  return r;
}

EnuVector ecef_to_enu(const EcefCoord& p, const GeodeticCoord& origin) {
  return enu_rotation(origin) * (p - geodetic_to_ecef(origin));
}

EcefCoord enu_to_ecef(const EnuVector& enu, const GeodeticCoord& origin) {
  return geodetic_to_ecef(origin) + enu_rotation(origin).transpose() * enu;
}

}  // namespace rtksim
