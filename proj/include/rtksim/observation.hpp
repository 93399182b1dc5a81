#pragma once

#include <map>
#include <string>
#include <vector>

#include "rtksim/constellation.hpp"
#include "rtksim/geodesy.hpp"
#include "rtksim/rng.hpp"

namespace rtksim {

/// GPS L1 / Galileo E1 share the 1575.42 MHz center frequency, so a single
/// wavelength constant serves both constellations.
inline constexpr double kCarrierFrequency = 1575.42e6;                  // Hz
inline constexpr double kCarrierWavelength =
    kSpeedOfLight / kCarrierFrequency;                                  // m
inline constexpr double kCaChipLength = kSpeedOfLight / 1.023e6;        // m
inline constexpr double kHalfChip = kCaChipLength / 2.0;                // m

struct Observation {
  SatelliteId sat;
  double pseudorange = 0.0;    // m
  double carrier_phase = 0.0;  // cycles
  double cn0 = 0.0;            // dB-Hz
  bool loss_of_lock = false;   // true: pseudorange/phase are not valid
};

struct EpochObservations {
  std::string receiver_id;
  double t = 0.0;  // s since scenario epoch
  std::vector<Observation> observations;  // sorted by sat, unique per sat

  const Observation* find(const SatelliteId& id) const;
};

/// Linear atmospheric delay field: zenith delays at the anchor point plus
/// a frozen horizontal gradient (same slope for troposphere and
/// ionosphere, along the east+north diagonal), so receivers a few km
/// apart see realistically small differential delays.
struct AtmosphereModel {
  double zenith_tropo_delay = 2.4;    // m
  double zenith_iono_delay = 3.0;     // m
  double spatial_gradient = 0.0004;   // m per km of separation
  GeodeticCoord anchor;               // where the zenith values hold

  double tropo_at(const EcefCoord& pos) const;
  double iono_at(const EcefCoord& pos) const;
};

/// 1/sin(el) mapping from zenith to slant delay; fine above a 10 deg mask.
inline double elevation_mapping(double elevation) {
  return 1.0 / std::sin(elevation);
}

struct ReceiverModel {
  std::string id;
  GeodeticCoord truth_position;
  double clock_bias = 0.0;         // s, random-walk state
  double clock_drift = 0.0;        // s/s
  double clock_walk = 1e-9;        // s per sqrt(s)
  double sigma_code = 0.3;         // m
  double sigma_phase = 0.003;      // cycles
  double tracking_threshold = 30.0;  // dB-Hz
  double nominal_cn0 = 45.0;       // dB-Hz
  // Carrier ambiguities held by the tracking loops, persistent while lock
  // is maintained.
  std::map<SatelliteId, long> ambiguities;
};

/// Synthesizes one epoch of code/carrier/C-N0 measurements. `sats` must
/// already be visibility-filtered and sorted by id; noise draws consume
/// `rng` in that order, which is part of the determinism contract.
/// Satellites whose C/N0 falls below the tracking threshold are emitted
/// with loss_of_lock set and zeroed measurements. Ambiguities of
/// satellites that are not tracked this epoch are dropped, so a satellite
/// returning to lock draws a fresh integer.
EpochObservations measure(ReceiverModel& rx,
                          const std::vector<SatelliteState>& sats,
                          const AtmosphereModel& atmos, double t, Rng& rng);

/// Advances the receiver clock: drift plus a random-walk step.
void advance_clock(ReceiverModel& rx, double dt, Rng& rng);

/// Drops ambiguity state for satellites flagged loss_of_lock in `epoch`
/// (used after attack transforms rewrite an epoch: the tracking loops
/// follow whatever was emitted, so authentic lock is gone).
void drop_lost_ambiguities(ReceiverModel& rx, const EpochObservations& epoch);

}  // namespace rtksim
