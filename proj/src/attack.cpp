#include "rtksim/attack.hpp"

#include <algorithm>
#include <cmath>

namespace rtksim {

std::string to_string(AttackMode m) {
  switch (m) {
    case AttackMode::SyncLiftOff: return "SYNC_LIFT_OFF";
    case AttackMode::AsyncSpoof: return "ASYNC_SPOOF";
    case AttackMode::Jam: return "JAM";
  }
  return "JAM";
}

EpochObservations apply_sync_lift_off(const EpochObservations& honest,
                                      const AttackProfile& profile,
                                      CaptureState& state, double t, double dt,
                                      Rng& rng) {
  if (!profile.active(t)) return honest;

  EpochObservations out = honest;
  for (auto& obs : out.observations) {
    if (obs.sat.constellation != ConstellationKind::GPS) continue;
    if (obs.loss_of_lock) continue;

    if (!state.is_captured(obs.sat)) {
      // Capture rule: enough power advantage and the spoofer code phase
      // within half a chip of the authentic one. The lift-off starts
      // phase-matched, so the offset at capture is zero.
      const double initial_offset = 0.0;
      if (profile.power_advantage_db >= profile.capture_threshold_db &&
          std::abs(initial_offset) < kHalfChip) {
        CaptureEntry e;
        e.code_offset = initial_offset;
        e.spoofed_ambiguity = static_cast<long>(rng.uniform_int(-1000, 1000));
        state.captured[obs.sat] = e;
      } else {
        continue;
      }
    } else {
      // Ramp the already-captured satellite toward its bias target.
      CaptureEntry& e = state.captured[obs.sat];
      double target = 0.0;
      if (auto it = profile.pseudorange_bias_targets.find(obs.sat);
          it != profile.pseudorange_bias_targets.end()) {
        target = it->second;
      }
      const double step = profile.pull_rate * dt;
      if (e.code_offset < target) {
        e.code_offset = std::min(e.code_offset + step, target);
      } else if (e.code_offset > target) {
        e.code_offset = std::max(e.code_offset - step, target);
      }
    }

    const CaptureEntry& e = state.captured[obs.sat];
    obs.pseudorange += e.code_offset;
    // The spoofer owns the carrier: phase consistent with its own code,
    // authentic cycle count gone.
    obs.carrier_phase = obs.pseudorange / kCarrierWavelength +
                        static_cast<double>(e.spoofed_ambiguity);
    obs.cn0 = std::clamp(obs.cn0 + profile.power_advantage_db, 0.0, 60.0);
  }
  return out;
}

EpochObservations apply_async_spoof(const EpochObservations& honest,
                                    const AttackProfile& profile,
                                    AsyncSpoofState& state,
                                    const std::vector<SatelliteState>& sats,
                                    const ReceiverModel& station,
                                    const AtmosphereModel& atmos, double t,
                                    Rng& rng) {
  if (!profile.active(t)) return honest;

  const bool affected_all = profile.affected_constellations.empty();
  auto affected = [&](const SatelliteId& id) {
    return affected_all ||
           profile.affected_constellations.count(id.constellation) != 0;
  };

  EpochObservations out = honest;
  if (t < profile.start + profile.takeover_duration) {
    // Asynchronous lift-off: the receiver drops the authentic signals and
    // reacquires the spoofed ones, so affected satellites show a gap.
    for (auto& obs : out.observations) {
      if (!affected(obs.sat)) continue;
      obs.loss_of_lock = true;
      obs.pseudorange = 0.0;
      obs.carrier_phase = 0.0;
    }
    state.engaged = false;
    return out;
  }

  if (!state.engaged) {
    state.spoof_receiver = station;
    state.spoof_receiver.truth_position = profile.spoofed_position;
    state.spoof_receiver.ambiguities.clear();  // reacquired: fresh integers
    state.engaged = true;
  }
  state.spoof_receiver.clock_bias = station.clock_bias;

  std::vector<SatelliteState> affected_sats;
  for (const auto& s : sats) {
    if (affected(s.id)) affected_sats.push_back(s);
  }
  const EpochObservations spoofed =
      measure(state.spoof_receiver, affected_sats, atmos, t, rng);

  for (auto& obs : out.observations) {
    if (!affected(obs.sat)) continue;
    if (const Observation* rep = spoofed.find(obs.sat)) {
      obs = *rep;
    } else {
      obs.loss_of_lock = true;
      obs.pseudorange = 0.0;
      obs.carrier_phase = 0.0;
    }
  }
  return out;
}

EpochObservations apply_jam(const EpochObservations& honest,
                            const AttackProfile& profile,
                            const ReceiverModel& station, double t) {
  if (!profile.active(t)) return honest;

  EpochObservations out = honest;
  for (auto& obs : out.observations) {
    obs.cn0 = std::max(obs.cn0 - profile.jam_power_db, 0.0);
    if (obs.cn0 < station.tracking_threshold && !obs.loss_of_lock) {
      obs.loss_of_lock = true;
      obs.pseudorange = 0.0;
      obs.carrier_phase = 0.0;
    }
  }
  return out;
}

AttackRuntime::AttackRuntime(AttackProfile profile, std::uint64_t scenario_seed)
    : profile_(std::move(profile)),
      rng_(Rng::for_stream(scenario_seed, "attacker")) {}

EpochObservations AttackRuntime::apply(
    const EpochObservations& honest, ReceiverModel& station,
    const std::vector<SatelliteState>& station_sats,
    const AtmosphereModel& atmos, double t, double dt) {
  const bool active = profile_.active(t);

  if (!active) {
    if (was_active_) {
      // Attack released: whatever the spoofer held, the receiver now
      // reacquires the authentic signal with a fresh ambiguity.
      switch (profile_.mode) {
        case AttackMode::SyncLiftOff:
          for (const auto& [id, entry] : capture_.captured) {
            station.ambiguities.erase(id);
          }
          capture_ = CaptureState{};
          break;
        case AttackMode::AsyncSpoof:
          for (auto it = station.ambiguities.begin();
               it != station.ambiguities.end();) {
            const bool affected =
                profile_.affected_constellations.empty() ||
                profile_.affected_constellations.count(it->first.constellation);
            it = affected ? station.ambiguities.erase(it) : std::next(it);
          }
          spoof_ = AsyncSpoofState{};
          break;
        case AttackMode::Jam:
          break;  // handled per-epoch through loss flags
      }
      was_active_ = false;
    }
    return honest;
  }

  was_active_ = true;
  EpochObservations out;
  switch (profile_.mode) {
    case AttackMode::SyncLiftOff: {
      const bool fresh_capture = capture_.captured.empty();
      out = apply_sync_lift_off(honest, profile_, capture_, t, dt, rng_);
      if (fresh_capture) {
        // Authentic carrier lock is gone for every captured satellite.
        for (const auto& [id, entry] : capture_.captured) {
          station.ambiguities.erase(id);
        }
      }
      break;
    }
    case AttackMode::AsyncSpoof:
      out = apply_async_spoof(honest, profile_, spoof_, station_sats, station,
                              atmos, t, rng_);
      drop_lost_ambiguities(station, out);
      break;
    case AttackMode::Jam:
      out = apply_jam(honest, profile_, station, t);
      drop_lost_ambiguities(station, out);
      break;
  }
  return out;
}

}  // namespace rtksim
