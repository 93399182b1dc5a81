#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtksim/attack.hpp"
#include "rtksim/constellation.hpp"
#include "rtksim/observation.hpp"
#include "rtksim/rtk.hpp"
#include "rtksim/wire.hpp"

namespace rtksim {

struct ReceiverConfig {
  double sigma_code = 0.3;           // m
  double sigma_phase = 0.003;        // cycles
  double tracking_threshold = 30.0;  // dB-Hz
  double nominal_cn0 = 45.0;         // dB-Hz
  double clock_drift = 0.0;          // s/s
  double clock_walk = 1e-9;          // s/sqrt(s)
};

struct CasterConfig {
  std::string bind_address = "127.0.0.1";
  int port = 2101;
  std::string mountpoint = "SIM";
  std::string token;            // empty: no auth
  double stall_timeout = 5.0;   // s before a stalled client is dropped
};

struct OutputsConfig {
  std::string epochs_csv;    // empty: skip
  std::string summary_json;  // empty: skip
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double duration = 600.0;       // s
  double epoch_interval = 1.0;   // s

  GeodeticCoord station_survey;  // broadcast reference coordinates
  GeodeticCoord station_truth;   // where the antenna actually sits
  std::uint16_t station_id = 1;
  ReceiverConfig station_receiver;

  GeodeticCoord rover_truth;
  // Optional kinematic track: (t, position) pairs, strictly increasing in
  // t, interpolated linearly in ECEF; empty means the rover is static at
  // rover_truth.
  std::vector<std::pair<double, GeodeticCoord>> rover_waypoints;
  ReceiverConfig rover_receiver;

  std::optional<GeodeticCoord> monitor_position;  // attacker's rover

  std::vector<ConstellationSpec> constellations;
  AtmosphereModel atmosphere;  // anchor is filled from station_survey
  std::optional<AttackProfile> attack;

  RtkConfig rtk;
  double elevation_mask = 10.0 * M_PI / 180.0;

  CasterConfig caster;
  OutputsConfig outputs;

  std::string name;  // basename of the file it was loaded from
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string what, std::vector<std::string> details)
      : std::runtime_error(std::move(what)), details_(std::move(details)) {}
  const std::vector<std::string>& details() const { return details_; }

 private:
  std::vector<std::string> details_;
};

/// Parses and validates a scenario file (JSON, // comments allowed).
/// Throws ConfigError with field-level messages.
ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::string& name = "inline");

/// Field-level validation messages; empty means valid. Distance warnings
/// (rover beyond 10 km) go to `warnings`.
std::vector<std::string> validate_scenario(const ScenarioConfig& cfg,
                                           std::vector<std::string>* warnings);

struct EpochRecord {
  double t = 0.0;
  SolutionStatus status = SolutionStatus::None;
  double err_e = 0.0, err_n = 0.0, err_u = 0.0;  // m vs rover truth
  double error_3d = 0.0;                         // m; NaN when no position
  int n_sats = 0;
  double ratio = 0.0;
  bool station_under_attack = false;
  bool corrections_available = false;
};

struct MetricsSummary {
  std::size_t n_epochs = 0;
  std::size_t n_attempted = 0;   // epochs with usable corrections
  std::size_t n_positions = 0;   // epochs that produced a position
  double fix_rate = 0.0;         // FIX / attempted
  double fail_fraction = 1.0;    // 1 - fix_rate over attempted
  double rms_3d = 0.0;           // over epochs with a position
  double mean_3d = 0.0;
  double max_3d = 0.0;
  double p95_3d = 0.0;
  std::map<std::string, std::size_t> status_histogram;
};

class EmptyRunError : public std::runtime_error {
 public:
  EmptyRunError() : std::runtime_error("no epoch records") {}
};

MetricsSummary compute_metrics(const std::vector<EpochRecord>& records);

struct RunResult {
  std::vector<EpochRecord> records;
  MetricsSummary overall;
  std::optional<MetricsSummary> attack_window;
  std::optional<MetricsSummary> outside_window;
};

/// Runs the scenario end to end, single-threaded and deterministic. Every
/// correction passes through the wire codec (encode then decode) exactly
/// as it would over TCP; `frame_sink`, when set, additionally receives
/// each encoded frame (the live caster uses this).
RunResult run_scenario(
    const ScenarioConfig& cfg,
    const std::function<void(const std::vector<std::uint8_t>&)>& frame_sink =
        nullptr);

/// Rover-side state machine shared by the batch runner, the live rover
/// client, and the attacker monitor: generates local observations, pairs
/// them with decoded corrections, and solves.
class RoverPipeline {
 public:
  RoverPipeline(const ScenarioConfig& cfg, const GeodeticCoord& position,
                const std::string& receiver_id);

  /// Makes the pipeline follow a kinematic track instead of sitting at
  /// the constructor position.
  void set_waypoints(std::vector<std::pair<double, GeodeticCoord>> waypoints);

  /// Feed a decoded correction message (from any transport).
  void on_correction(const CorrectionMessage& msg);

  /// Advance to epoch t, measure locally, and solve. Records internally
  /// and returns the record.
  EpochRecord step(double t);

  const std::vector<EpochRecord>& records() const { return records_; }
  bool has_station_ref() const { return have_ref_; }

 private:
  ScenarioConfig cfg_;
  Constellation constellation_;
  ReceiverModel rx_;
  Rng rng_;
  AtmosphereModel atmos_;
  std::vector<std::pair<double, GeodeticCoord>> waypoints_;
  EcefCoord truth_ecef_;
  EcefCoord station_ref_ = EcefCoord::Zero();
  bool have_ref_ = false;
  std::optional<EpochObservations> station_epoch_;
  double last_usable_t_ = -1e18;
  double last_t_ = 0.0;
  bool first_step_ = true;
  std::vector<EpochRecord> records_;
};

/// Rover truth position at time t: linear ECEF interpolation over the
/// waypoint track, clamped at the ends; the static position when no
/// waypoints are given.
GeodeticCoord rover_position_at(const ScenarioConfig& cfg, double t);

std::string records_to_csv(const std::vector<EpochRecord>& records);
std::string summary_to_json(const RunResult& result);

void write_outputs(const ScenarioConfig& cfg, const RunResult& result);

}  // namespace rtksim
