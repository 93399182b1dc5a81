#include "rtksim/constellation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "rtksim/rng.hpp"

namespace rtksim {

std::string to_string(ConstellationKind k) {
  return k == ConstellationKind::GPS ? "GPS" : "GAL";
}

std::string to_string(const SatelliteId& id) {
  return (id.constellation == ConstellationKind::GPS ? "G" : "E") +
         std::string(id.prn < 10 ? "0" : "") + std::to_string(id.prn);
}

ConstellationSpec ConstellationSpec::defaults(ConstellationKind kind) {
  ConstellationSpec s;
  s.kind = kind;
  if (kind == ConstellationKind::GAL) {
    s.n_planes = 3;
    s.sats_per_plane = 8;
    s.semi_major_axis = 29599800.0;
    s.inclination = 56.0 * M_PI / 180.0;
  }
  return s;
}

Constellation build_constellation(const ConstellationSpec& spec) {
  Constellation out;
  const int total = spec.n_planes * spec.sats_per_plane;
  const double raan_step = 2.0 * M_PI / spec.n_planes;
  const double slot_step = 2.0 * M_PI / spec.sats_per_plane;
  const double phase_step = 2.0 * M_PI / total;
  for (int p = 0; p < spec.n_planes; ++p) {
    for (int k = 0; k < spec.sats_per_plane; ++k) {
      SatelliteId id{spec.kind, p * spec.sats_per_plane + k + 1};
      OrbitElements el;
      el.semi_major_axis = spec.semi_major_axis;
      el.inclination = spec.inclination;
      el.raan = raan_step * p;
      el.arg_lat_epoch = slot_step * k + phase_step * p;
      // Deterministic per-satellite clock, a few hundred microseconds of
      // bias and ~1e-11 s/s drift; tied to the satellite identity so the
      // same constellation always carries the same clocks.
      Rng rng(fnv1a64(to_string(id)));
      el.clock_bias = (rng.uniform() - 0.5) * 2e-3;
      el.clock_drift = (rng.uniform() - 0.5) * 2e-11;
      out.emplace_back(id, el);
    }
  }
  return out;
}

EcefCoord satellite_ecef(const OrbitElements& el, double t) {
  const double n = std::sqrt(kEarthGm / std::pow(el.semi_major_axis, 3));
  const double u = el.arg_lat_epoch + n * t;
  const Eigen::Vector3d in_plane{el.semi_major_axis * std::cos(u),
                                 el.semi_major_axis * std::sin(u), 0.0};
  // The RAAN drifts at -we in the rotating frame.
  const double raan_ecef = el.raan - kEarthRotationRate * t;
  return Eigen::AngleAxisd(raan_ecef, Eigen::Vector3d::UnitZ()) *
         Eigen::AngleAxisd(el.inclination, Eigen::Vector3d::UnitX()) * in_plane;
}

SatelliteState satellite_state(const SatelliteId& id, const OrbitElements& el,
                               double t, const GeodeticCoord& observer) {
  SatelliteState s;
  s.id = id;
  s.elements = el;
  s.position = satellite_ecef(el, t);
  s.clock_bias = el.clock_bias + el.clock_drift * t;
  const EnuVector enu = ecef_to_enu(s.position, observer);
  s.elevation = std::asin(enu.z() / enu.norm());
  s.azimuth = std::atan2(enu.x(), enu.y());
  if (s.azimuth < 0.0) s.azimuth += 2.0 * M_PI;
  return s;
}

std::vector<SatelliteState> all_states(const Constellation& c, double t,
                                       const GeodeticCoord& observer) {
  std::vector<SatelliteState> out;
  out.reserve(c.size());
  for (const auto& [id, el] : c) {
    out.push_back(satellite_state(id, el, t, observer));
  }
  std::sort(out.begin(), out.end(),
            [](const SatelliteState& a, const SatelliteState& b) {
              return a.id < b.id;
            });
  return out;
}

std::vector<SatelliteState> visible_satellites(
    const std::vector<SatelliteState>& states, double mask) {
  std::vector<SatelliteState> out;
  for (const auto& s : states) {
    if (s.elevation >= mask) out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SatelliteState& a, const SatelliteState& b) {
                     return a.id < b.id;
                   });
  return out;
}

RangeResult signal_range(const OrbitElements& el, const EcefCoord& receiver,
                         double t) {
  double tau = 0.075;  // ~GNSS flight time as the starting guess
  EcefCoord pos = Eigen::Vector3d::Zero();
  for (int i = 0; i < 3; ++i) {
    // Emission position expressed in the reception-epoch frame: the Earth
    // rotated by we*tau during flight.
    pos = Eigen::AngleAxisd(-kEarthRotationRate * tau,
                            Eigen::Vector3d::UnitZ()) *
          satellite_ecef(el, t - tau);
    tau = (pos - receiver).norm() / kSpeedOfLight;
  }
  return RangeResult{(pos - receiver).norm(), pos};
}

}  // namespace rtksim
