#include "rtksim/observation.hpp"

#include <algorithm>
#include <cmath>

namespace rtksim {

const Observation* EpochObservations::find(const SatelliteId& id) const {
  auto it = std::lower_bound(
      observations.begin(), observations.end(), id,
      [](const Observation& o, const SatelliteId& key) { return o.sat < key; });
  if (it == observations.end() || !(it->sat == id)) return nullptr;
  return &*it;
}

namespace {

// Horizontal offset from the anchor projected on the east+north diagonal,
// in km. Gives a frozen linear delay field.
double gradient_km(const AtmosphereModel& atmos, const EcefCoord& pos) {
  const EnuVector enu = ecef_to_enu(pos, atmos.anchor);
  return (enu.x() + enu.y()) * (1.0 / std::sqrt(2.0)) / 1000.0;
}

}  // namespace

double AtmosphereModel::tropo_at(const EcefCoord& pos) const {
  return zenith_tropo_delay + spatial_gradient * gradient_km(*this, pos);
}

double AtmosphereModel::iono_at(const EcefCoord& pos) const {
  return zenith_iono_delay + spatial_gradient * gradient_km(*this, pos);
}

EpochObservations measure(ReceiverModel& rx,
                          const std::vector<SatelliteState>& sats,
                          const AtmosphereModel& atmos, double t, Rng& rng) {
  EpochObservations epoch;
  epoch.receiver_id = rx.id;
  epoch.t = t;
  epoch.observations.reserve(sats.size());

  const EcefCoord rx_ecef = geodetic_to_ecef(rx.truth_position);
  const double tropo = atmos.tropo_at(rx_ecef);
  const double iono = atmos.iono_at(rx_ecef);

  std::map<SatelliteId, long> kept;
  for (const auto& s : sats) {
    Observation obs;
    obs.sat = s.id;

    const double el_deg = s.elevation * 180.0 / M_PI;
    obs.cn0 = std::clamp(rx.nominal_cn0 - 0.5 * (90.0 - el_deg) / 90.0 * 10.0,
                         0.0, 60.0);
    if (obs.cn0 < rx.tracking_threshold) {
      obs.loss_of_lock = true;
      epoch.observations.push_back(obs);
      continue;
    }

    auto it = rx.ambiguities.find(s.id);
    long n;
    if (it == rx.ambiguities.end()) {
      n = static_cast<long>(rng.uniform_int(-1000, 1000));  // fresh lock
    } else {
      n = it->second;
    }
    kept[s.id] = n;

    const RangeResult rr = signal_range(s.elements, rx_ecef, t);
    const double m = elevation_mapping(s.elevation);
    const double clock_terms = kSpeedOfLight * (rx.clock_bias - s.clock_bias);

    obs.pseudorange = rr.range + clock_terms + (tropo + iono) * m +
                      rng.normal(rx.sigma_code);
    obs.carrier_phase =
        (rr.range + clock_terms + (tropo - iono) * m) / kCarrierWavelength +
        static_cast<double>(n) + rng.normal(rx.sigma_phase);
    epoch.observations.push_back(obs);
  }

  rx.ambiguities = std::move(kept);
  return epoch;
}

void advance_clock(ReceiverModel& rx, double dt, Rng& rng) {
  rx.clock_bias +=
      rx.clock_drift * dt + rx.clock_walk * std::sqrt(dt) * rng.normal();
}

void drop_lost_ambiguities(ReceiverModel& rx, const EpochObservations& epoch) {
  for (const auto& obs : epoch.observations) {
    if (obs.loss_of_lock) rx.ambiguities.erase(obs.sat);
  }
}

}  // namespace rtksim
