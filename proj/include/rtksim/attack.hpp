#pragma once

#include <map>
#include <optional>
#include <set>

#include "rtksim/observation.hpp"
#include "rtksim/rng.hpp"

namespace rtksim {

enum class AttackMode { SyncLiftOff, AsyncSpoof, Jam };

std::string to_string(AttackMode m);

/// One adversarial setting with its schedule. Semantics per mode:
///  - SyncLiftOff: code-phase-matched spoofing of GPS L1 at the station;
///    captured satellites get their pseudoranges pulled toward per-sat
///    bias targets while the carrier is replaced by spoofer-held phase.
///  - AsyncSpoof: affected constellations are regenerated as if the
///    station sat at spoofed_position, after a reacquisition gap.
///  - Jam: C/N0 suppression; satellites pushed below the tracking
///    threshold lose lock.
struct AttackProfile {
  AttackMode mode = AttackMode::Jam;
  double start = 0.0;  // s, inclusive
  double end = 0.0;    // s, exclusive

  double power_advantage_db = 0.0;
  double capture_threshold_db = 3.0;
  double pull_rate = 0.5;  // m/s
  std::map<SatelliteId, double> pseudorange_bias_targets;  // m

  GeodeticCoord spoofed_position;
  std::set<ConstellationKind> affected_constellations;
  double takeover_duration = 5.0;  // s of forced reacquisition

  double jam_power_db = 0.0;

  bool active(double t) const { return t >= start && t < end; }
};

/// Per-satellite capture bookkeeping for the synchronous lift-off.
struct CaptureEntry {
  double code_offset = 0.0;  // m, spoofed minus authentic apparent range
  long spoofed_ambiguity = 0;
};

struct CaptureState {
  std::map<SatelliteId, CaptureEntry> captured;
  bool is_captured(const SatelliteId& id) const {
    return captured.count(id) != 0;
  }
};

/// Synchronous lift-off transform for one epoch; `state` carries capture
/// status and ramp progress across epochs. Identity outside the window.
EpochObservations apply_sync_lift_off(const EpochObservations& honest,
                                      const AttackProfile& profile,
                                      CaptureState& state, double t, double dt,
                                      Rng& rng);

/// Spoofer-side receiver state for the asynchronous attack.
struct AsyncSpoofState {
  ReceiverModel spoof_receiver;
  bool engaged = false;
};

EpochObservations apply_async_spoof(const EpochObservations& honest,
                                    const AttackProfile& profile,
                                    AsyncSpoofState& state,
                                    const std::vector<SatelliteState>& sats,
                                    const ReceiverModel& station,
                                    const AtmosphereModel& atmos, double t,
                                    Rng& rng);

EpochObservations apply_jam(const EpochObservations& honest,
                            const AttackProfile& profile,
                            const ReceiverModel& station, double t);

/// Owns attack state across the scenario timeline and keeps the station
/// receiver's lock bookkeeping consistent with what the transforms emit
/// (a released or jammed satellite reacquires with a fresh ambiguity).
class AttackRuntime {
 public:
  AttackRuntime(AttackProfile profile, std::uint64_t scenario_seed);

  EpochObservations apply(const EpochObservations& honest,
                          ReceiverModel& station,
                          const std::vector<SatelliteState>& station_sats,
                          const AtmosphereModel& atmos, double t, double dt);

  const AttackProfile& profile() const { return profile_; }
  const CaptureState& capture_state() const { return capture_; }

 private:
  AttackProfile profile_;
  Rng rng_;
  CaptureState capture_;
  AsyncSpoofState spoof_;
  bool was_active_ = false;
};

}  // namespace rtksim
