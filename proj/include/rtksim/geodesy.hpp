#pragma once

#include <Eigen/Core>

namespace rtksim {

// WGS84 ellipsoid.
inline constexpr double kWgs84SemiMajorAxis = 6378137.0;           // m
inline constexpr double kWgs84Flattening = 1.0 / 298.257223563;
inline constexpr double kWgs84Ecc2 =
    kWgs84Flattening * (2.0 - kWgs84Flattening);  // first eccentricity squared

inline constexpr double kSpeedOfLight = 299792458.0;               // m/s
inline constexpr double kEarthRotationRate = 7.2921151467e-5;      // rad/s
inline constexpr double kEarthGm = 3.986005e14;                    // m^3/s^2

/// Geodetic position on the WGS84 ellipsoid. Angles in radians,
/// height in meters above the ellipsoid.
struct GeodeticCoord {
  double lat = 0.0;     // [-pi/2, pi/2]
  double lon = 0.0;     // (-pi, pi]
  double height = 0.0;  // ellipsoidal, m

  static GeodeticCoord from_degrees(double lat_deg, double lon_deg, double h);
};

// Geodesy works on plain Eigen vectors; the aliases name the frame.
using EcefCoord = Eigen::Vector3d;  // Earth-centered Earth-fixed, m
using EnuVector = Eigen::Vector3d;  // local east/north/up, m

EcefCoord geodetic_to_ecef(const GeodeticCoord& g);

/// Bowring-style iterative inverse, converges to < 1e-4 m in height.
/// Points within 1 m of the Earth's axis get lon = 0 by convention.
GeodeticCoord ecef_to_geodetic(const EcefCoord& p);

/// Rotation from ECEF deltas into the local tangent frame at `origin`.
Eigen::Matrix3d enu_rotation(const GeodeticCoord& origin);

EnuVector ecef_to_enu(const EcefCoord& p, const GeodeticCoord& origin);

/// Inverse of ecef_to_enu: absolute ECEF point for a local offset.
EcefCoord enu_to_ecef(const EnuVector& enu, const GeodeticCoord& origin);

}  // namespace rtksim
