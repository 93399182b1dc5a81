#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtksim/geodesy.hpp"

namespace rtksim {

enum class ConstellationKind : std::uint8_t { GPS = 0, GAL = 1 };

std::string to_string(ConstellationKind k);

struct SatelliteId {
  ConstellationKind constellation = ConstellationKind::GPS;
  int prn = 1;  // 1..36

  friend bool operator==(const SatelliteId&, const SatelliteId&) = default;
  friend auto operator<=>(const SatelliteId&, const SatelliteId&) = default;
};

std::string to_string(const SatelliteId& id);

/// Circular-orbit elements. Eccentricity is fixed at zero: the attacks
/// modeled here act on measurements, and circular orbits keep realistic
/// geometry and DOP without ephemeris machinery.
struct OrbitElements {
  double semi_major_axis = 0.0;  // m, > 20e6
  double inclination = 0.0;      // rad, (0, pi/2]
  double raan = 0.0;             // rad, at scenario epoch
  double arg_lat_epoch = 0.0;    // rad, argument of latitude at t = 0
  double clock_bias = 0.0;       // s
  double clock_drift = 0.0;      // s/s
};

struct SatelliteState {
  SatelliteId id;
  OrbitElements elements;    // carried along for light-time recomputation
  EcefCoord position;        // ECEF at the query epoch, m
  double clock_bias = 0.0;   // s, at the query epoch
  double elevation = 0.0;    // rad, relative to the query receiver
  double azimuth = 0.0;      // rad, [0, 2pi)
};

using Constellation = std::vector<std::pair<SatelliteId, OrbitElements>>;

struct ConstellationSpec {
  ConstellationKind kind = ConstellationKind::GPS;
  int n_planes = 6;
  int sats_per_plane = 5;
  double semi_major_axis = 26559700.0;  // m
  double inclination = 55.0 * M_PI / 180.0;

  static ConstellationSpec defaults(ConstellationKind kind);
};

/// Walker-style shell: RAAN step 2pi/planes, in-plane step 2pi/per_plane,
/// inter-plane phase offset 2pi/(planes*per_plane). Satellite clocks get
/// small deterministic biases derived from the satellite identity.
Constellation build_constellation(const ConstellationSpec& spec);

/// Satellite ECEF position at time t (seconds since scenario epoch).
EcefCoord satellite_ecef(const OrbitElements& el, double t);

SatelliteState satellite_state(const SatelliteId& id, const OrbitElements& el,
                               double t, const GeodeticCoord& observer);

std::vector<SatelliteState> all_states(const Constellation& c, double t,
                                       const GeodeticCoord& observer);

/// Elevation filter; output keeps (constellation, prn) order.
std::vector<SatelliteState> visible_satellites(
    const std::vector<SatelliteState>& states, double mask);

/// Signal path range between a satellite and an ECEF receiver position,
/// with light-time and Earth-rotation applied by fixed-point iteration
/// (two passes, sub-mm at GNSS ranges). Also returns the satellite's
/// emission position expressed in the reception-epoch ECEF frame, which
/// is the position solvers must use for line-of-sight vectors.
struct RangeResult {
  double range = 0.0;
  EcefCoord sat_position;
};

RangeResult signal_range(const OrbitElements& el, const EcefCoord& receiver,
                         double t);

}  // namespace rtksim
