#include "rtksim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace rtksim {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kDeg = M_PI / 180.0;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed,
                std::vector<std::string>& errors) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return it.key() == k;
        }) == allowed.end()) {
      errors.push_back(where + ": unknown field '" + it.key() + "'");
    }
  }
}

GeodeticCoord parse_position(const json& j, const std::string& where,
                             std::vector<std::string>& errors) {
  check_keys(j, where, {"lat_deg", "lon_deg", "height_m"}, errors);
  GeodeticCoord g;
  try {
    g = GeodeticCoord::from_degrees(j.at("lat_deg").get<double>(),
                                    j.at("lon_deg").get<double>(),
                                    j.value("height_m", 0.0));
  } catch (const json::exception& e) {
    errors.push_back(where + ": " + e.what());
  }
  return g;
}

ReceiverConfig parse_receiver(const json& j, const std::string& where,
                              std::vector<std::string>& errors) {
  ReceiverConfig r;
  check_keys(j, where,
             {"sigma_code_m", "sigma_phase_cycles", "tracking_threshold_dbhz",
              "nominal_cn0_dbhz", "clock_drift", "clock_walk"},
             errors);
  r.sigma_code = j.value("sigma_code_m", r.sigma_code);
  r.sigma_phase = j.value("sigma_phase_cycles", r.sigma_phase);
  r.tracking_threshold = j.value("tracking_threshold_dbhz", r.tracking_threshold);
  r.nominal_cn0 = j.value("nominal_cn0_dbhz", r.nominal_cn0);
  r.clock_drift = j.value("clock_drift", r.clock_drift);
  r.clock_walk = j.value("clock_walk", r.clock_walk);
  return r;
}

std::optional<SatelliteId> parse_sat_id(const std::string& s) {
  if (s.size() < 2) return std::nullopt;
  ConstellationKind kind;
  if (s[0] == 'G') {
    kind = ConstellationKind::GPS;
  } else if (s[0] == 'E') {
    kind = ConstellationKind::GAL;
  } else {
    return std::nullopt;
  }
  const int prn = std::atoi(s.c_str() + 1);
  if (prn < 1 || prn > 36) return std::nullopt;
  return SatelliteId{kind, prn};
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text,
                              const std::string& name) {
  std::vector<std::string> errors;
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("failed to parse " + name, {e.what()});
  }

  ScenarioConfig cfg;
  cfg.name = name;
  check_keys(j, "scenario",
             {"seed", "duration_s", "epoch_interval_s", "station", "rover",
              "attacker_monitor", "constellations", "atmosphere", "attack",
              "rtk", "caster", "outputs"},
             errors);

  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.duration = j.value("duration_s", 600.0);
  cfg.epoch_interval = j.value("epoch_interval_s", 1.0);

  if (j.contains("station")) {
    const json& s = j["station"];
    check_keys(s, "station", {"id", "survey_position", "truth_position", "receiver"},
               errors);
    cfg.station_id = static_cast<std::uint16_t>(s.value("id", 1));
    if (s.contains("survey_position")) {
      cfg.station_survey =
          parse_position(s["survey_position"], "station.survey_position", errors);
    } else {
      errors.push_back("station.survey_position: required");
    }
    cfg.station_truth = s.contains("truth_position")
                            ? parse_position(s["truth_position"],
                                             "station.truth_position", errors)
                            : cfg.station_survey;
    if (s.contains("receiver")) {
      cfg.station_receiver = parse_receiver(s["receiver"], "station.receiver", errors);
    }
  } else {
    errors.push_back("station: required");
  }

  if (j.contains("rover")) {
    const json& r = j["rover"];
    check_keys(r, "rover", {"truth_position", "waypoints", "receiver"}, errors);
    if (r.contains("waypoints")) {
      for (std::size_t i = 0; i < r["waypoints"].size(); ++i) {
        const json& w = r["waypoints"][i];
        const std::string where = "rover.waypoints[" + std::to_string(i) + "]";
        check_keys(w, where, {"t_s", "lat_deg", "lon_deg", "height_m"}, errors);
        if (!w.contains("t_s") || !w.contains("lat_deg") ||
            !w.contains("lon_deg")) {
          errors.push_back(where + ": needs t_s, lat_deg, lon_deg");
          continue;
        }
        cfg.rover_waypoints.emplace_back(
            w["t_s"].get<double>(),
            GeodeticCoord::from_degrees(w["lat_deg"].get<double>(),
                                        w["lon_deg"].get<double>(),
                                        w.value("height_m", 0.0)));
      }
      if (!cfg.rover_waypoints.empty()) {
        cfg.rover_truth = cfg.rover_waypoints.front().second;
      }
    }
    if (r.contains("truth_position")) {
      cfg.rover_truth =
          parse_position(r["truth_position"], "rover.truth_position", errors);
    } else if (cfg.rover_waypoints.empty()) {
      errors.push_back("rover: truth_position or waypoints required");
    }
    if (r.contains("receiver")) {
      cfg.rover_receiver = parse_receiver(r["receiver"], "rover.receiver", errors);
    }
  } else {
    errors.push_back("rover: required");
  }

  if (j.contains("attacker_monitor")) {
    const json& m = j["attacker_monitor"];
    check_keys(m, "attacker_monitor", {"position"}, errors);
    if (m.contains("position")) {
      cfg.monitor_position =
          parse_position(m["position"], "attacker_monitor.position", errors);
    }
  }

  if (j.contains("constellations")) {
    for (std::size_t i = 0; i < j["constellations"].size(); ++i) {
      const json& c = j["constellations"][i];
      const std::string where = "constellations[" + std::to_string(i) + "]";
      check_keys(c, where,
                 {"kind", "planes", "sats_per_plane", "semi_major_axis_m",
                  "inclination_deg"},
                 errors);
      const std::string kind = c.value("kind", "GPS");
      ConstellationSpec spec;
      if (kind == "GPS") {
        spec = ConstellationSpec::defaults(ConstellationKind::GPS);
      } else if (kind == "GAL") {
        spec = ConstellationSpec::defaults(ConstellationKind::GAL);
      } else {
        errors.push_back(where + ".kind: must be GPS or GAL");
        continue;
      }
      spec.n_planes = c.value("planes", spec.n_planes);
      spec.sats_per_plane = c.value("sats_per_plane", spec.sats_per_plane);
      spec.semi_major_axis = c.value("semi_major_axis_m", spec.semi_major_axis);
      if (c.contains("inclination_deg")) {
        spec.inclination = c["inclination_deg"].get<double>() * kDeg;
      }
      cfg.constellations.push_back(spec);
    }
  } else {
    cfg.constellations.push_back(ConstellationSpec::defaults(ConstellationKind::GPS));
    cfg.constellations.push_back(ConstellationSpec::defaults(ConstellationKind::GAL));
  }

  if (j.contains("atmosphere")) {
    const json& a = j["atmosphere"];
    check_keys(a, "atmosphere",
               {"zenith_tropo_m", "zenith_iono_m", "gradient_m_per_km"}, errors);
    cfg.atmosphere.zenith_tropo_delay =
        a.value("zenith_tropo_m", cfg.atmosphere.zenith_tropo_delay);
    cfg.atmosphere.zenith_iono_delay =
        a.value("zenith_iono_m", cfg.atmosphere.zenith_iono_delay);
    cfg.atmosphere.spatial_gradient =
        a.value("gradient_m_per_km", cfg.atmosphere.spatial_gradient);
  }
  cfg.atmosphere.anchor = cfg.station_survey;

  if (j.contains("attack")) {
    const json& a = j["attack"];
    check_keys(a, "attack",
               {"mode", "start_s", "end_s", "power_advantage_db",
                "capture_threshold_db", "pull_rate_mps",
                "pseudorange_bias_targets", "spoofed_position",
                "spoofed_offset_enu_m", "affected_constellations",
                "takeover_duration_s", "jam_power_db"},
               errors);
    AttackProfile p;
    const std::string mode = a.value("mode", "");
    if (mode == "SYNC_LIFT_OFF") {
      p.mode = AttackMode::SyncLiftOff;
    } else if (mode == "ASYNC_SPOOF") {
      p.mode = AttackMode::AsyncSpoof;
    } else if (mode == "JAM") {
      p.mode = AttackMode::Jam;
    } else {
      errors.push_back("attack.mode: must be SYNC_LIFT_OFF, ASYNC_SPOOF or JAM");
    }
    p.start = a.value("start_s", 0.0);
    p.end = a.value("end_s", 0.0);
    p.power_advantage_db = a.value("power_advantage_db", 0.0);
    p.capture_threshold_db = a.value("capture_threshold_db", 3.0);
    p.pull_rate = a.value("pull_rate_mps", 0.5);
    p.takeover_duration = a.value("takeover_duration_s", 5.0);
    p.jam_power_db = a.value("jam_power_db", 0.0);
    if (a.contains("pseudorange_bias_targets")) {
      for (const auto& b : a["pseudorange_bias_targets"]) {
        check_keys(b, "attack.pseudorange_bias_targets[]", {"sat", "bias_m"},
                   errors);
        const auto id = parse_sat_id(b.value("sat", ""));
        if (!id) {
          errors.push_back(
              "attack.pseudorange_bias_targets[].sat: expected e.g. \"G05\"");
          continue;
        }
        p.pseudorange_bias_targets[*id] = b.value("bias_m", 0.0);
      }
    }
    if (a.contains("affected_constellations")) {
      for (const auto& c : a["affected_constellations"]) {
        const std::string k = c.get<std::string>();
        if (k == "GPS") {
          p.affected_constellations.insert(ConstellationKind::GPS);
        } else if (k == "GAL") {
          p.affected_constellations.insert(ConstellationKind::GAL);
        } else {
          errors.push_back("attack.affected_constellations: must be GPS or GAL");
        }
      }
    }
    if (a.contains("spoofed_offset_enu_m")) {
      const auto& v = a["spoofed_offset_enu_m"];
      if (!v.is_array() || v.size() != 3) {
        errors.push_back("attack.spoofed_offset_enu_m: expected [e, n, u]");
      } else {
        const EnuVector off{v[0].get<double>(), v[1].get<double>(),
                            v[2].get<double>()};
        p.spoofed_position =
            ecef_to_geodetic(enu_to_ecef(off, cfg.station_truth));
      }
    } else if (a.contains("spoofed_position")) {
      p.spoofed_position =
          parse_position(a["spoofed_position"], "attack.spoofed_position", errors);
    } else if (p.mode == AttackMode::AsyncSpoof) {
      errors.push_back(
          "attack: ASYNC_SPOOF needs spoofed_position or spoofed_offset_enu_m");
    }
    cfg.attack = p;
  }

  if (j.contains("rtk")) {
    const json& r = j["rtk"];
    check_keys(r, "rtk", {"ratio_threshold", "elevation_mask_deg", "max_age_s"},
               errors);
    cfg.rtk.ratio_threshold = r.value("ratio_threshold", cfg.rtk.ratio_threshold);
    cfg.rtk.max_correction_age = r.value("max_age_s", cfg.rtk.max_correction_age);
    if (r.contains("elevation_mask_deg")) {
      cfg.elevation_mask = r["elevation_mask_deg"].get<double>() * kDeg;
    }
  }
  cfg.rtk.sigma_code = cfg.rover_receiver.sigma_code;
  cfg.rtk.sigma_phase = cfg.rover_receiver.sigma_phase;

  if (j.contains("caster")) {
    const json& c = j["caster"];
    check_keys(c, "caster", {"bind", "port", "mountpoint", "token",
                             "stall_timeout_s"},
               errors);
    cfg.caster.bind_address = c.value("bind", cfg.caster.bind_address);
    cfg.caster.port = c.value("port", cfg.caster.port);
    cfg.caster.mountpoint = c.value("mountpoint", cfg.caster.mountpoint);
    cfg.caster.token = c.value("token", cfg.caster.token);
    cfg.caster.stall_timeout = c.value("stall_timeout_s", cfg.caster.stall_timeout);
  }

  if (j.contains("outputs")) {
    const json& o = j["outputs"];
    check_keys(o, "outputs", {"epochs_csv", "summary_json"}, errors);
    cfg.outputs.epochs_csv = o.value("epochs_csv", "");
    cfg.outputs.summary_json = o.value("summary_json", "");
  }

  std::vector<std::string> more = validate_scenario(cfg, nullptr);
  errors.insert(errors.end(), more.begin(), more.end());
  if (!errors.empty()) {
    throw ConfigError("invalid scenario " + name, errors);
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open scenario file " + path, {});
  }
  std::stringstream ss;
  ss << in.rdbuf();
  std::string base = path;
  if (const auto slash = base.find_last_of('/'); slash != std::string::npos) {
    base = base.substr(slash + 1);
  }
  return parse_scenario(ss.str(), base);
}

std::vector<std::string> validate_scenario(const ScenarioConfig& cfg,
                                           std::vector<std::string>* warnings) {
  std::vector<std::string> errors;
  auto check_pos = [&](const GeodeticCoord& g, const std::string& where) {
    if (!(g.lat >= -M_PI / 2 && g.lat <= M_PI / 2)) {
      errors.push_back(where + ".lat_deg: out of [-90, 90]");
    }
    if (!(g.lon > -M_PI - 1e-12 && g.lon <= M_PI + 1e-12)) {
      errors.push_back(where + ".lon_deg: out of (-180, 180]");
    }
    if (!std::isfinite(g.height)) {
      errors.push_back(where + ".height_m: not finite");
    }
  };

  if (!(cfg.duration > 0)) errors.push_back("duration_s: must be > 0");
  if (!(cfg.epoch_interval > 0)) errors.push_back("epoch_interval_s: must be > 0");
  check_pos(cfg.station_survey, "station.survey_position");
  check_pos(cfg.station_truth, "station.truth_position");
  check_pos(cfg.rover_truth, "rover.truth_position");
  if (cfg.monitor_position) check_pos(*cfg.monitor_position, "attacker_monitor.position");

  auto check_rx = [&](const ReceiverConfig& r, const std::string& where) {
    if (!(r.sigma_code > 0)) errors.push_back(where + ".sigma_code_m: must be > 0");
    if (!(r.sigma_phase > 0)) {
      errors.push_back(where + ".sigma_phase_cycles: must be > 0");
    }
    if (!(r.tracking_threshold < r.nominal_cn0)) {
      errors.push_back(where + ": tracking_threshold_dbhz must be < nominal_cn0_dbhz");
    }
  };
  check_rx(cfg.station_receiver, "station.receiver");
  check_rx(cfg.rover_receiver, "rover.receiver");

  if (cfg.constellations.empty()) {
    errors.push_back("constellations: at least one required");
  }
  for (const auto& c : cfg.constellations) {
    if (c.n_planes < 1) errors.push_back("constellations[].planes: must be >= 1");
    if (c.sats_per_plane < 1) {
      errors.push_back("constellations[].sats_per_plane: must be >= 1");
    }
    if (!(c.semi_major_axis > 20e6)) {
      errors.push_back("constellations[].semi_major_axis_m: must be > 2e7");
    }
    if (!(c.inclination > 0 && c.inclination <= M_PI / 2)) {
      errors.push_back("constellations[].inclination_deg: out of (0, 90]");
    }
    if (c.n_planes * c.sats_per_plane > 36) {
      errors.push_back("constellations[]: more than 36 satellites");
    }
  }

  if (cfg.atmosphere.zenith_tropo_delay < 0 ||
      cfg.atmosphere.zenith_iono_delay < 0 ||
      cfg.atmosphere.spatial_gradient < 0) {
    errors.push_back("atmosphere: delays and gradient must be >= 0");
  }

  if (cfg.attack) {
    const AttackProfile& p = *cfg.attack;
    if (!(p.start < p.end)) errors.push_back("attack: start_s must be < end_s");
    if (p.power_advantage_db < 0) {
      errors.push_back("attack.power_advantage_db: must be >= 0");
    }
    if (p.pull_rate < 0) errors.push_back("attack.pull_rate_mps: must be >= 0");
    if (p.jam_power_db < 0) errors.push_back("attack.jam_power_db: must be >= 0");
    if (p.takeover_duration < 0) {
      errors.push_back("attack.takeover_duration_s: must be >= 0");
    }
  }

  if (!(cfg.rtk.ratio_threshold >= 1.0)) {
    errors.push_back("rtk.ratio_threshold: must be >= 1");
  }
  if (!(cfg.elevation_mask >= 0 && cfg.elevation_mask < M_PI / 2)) {
    errors.push_back("rtk.elevation_mask_deg: out of [0, 90)");
  }
  if (!(cfg.rtk.max_correction_age > 0)) {
    errors.push_back("rtk.max_age_s: must be > 0");
  }

  for (std::size_t i = 0; i + 1 < cfg.rover_waypoints.size(); ++i) {
    if (!(cfg.rover_waypoints[i].first < cfg.rover_waypoints[i + 1].first)) {
      errors.push_back("rover.waypoints: t_s must be strictly increasing");
      break;
    }
  }

  const EcefCoord survey = geodetic_to_ecef(cfg.station_survey);
  double max_separation =
      (geodetic_to_ecef(cfg.rover_truth) - survey).norm();
  for (const auto& [t, pos] : cfg.rover_waypoints) {
    check_pos(pos, "rover.waypoints[]");
    max_separation =
        std::max(max_separation, (geodetic_to_ecef(pos) - survey).norm());
  }
  if (max_separation > 50e3) {
    errors.push_back("rover: more than 50 km from the station");
  } else if (max_separation > 10e3 && warnings) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "rover is %.1f km from the station; corrections degrade "
                  "beyond 10 km",
                  max_separation / 1000.0);
    warnings->push_back(buf);
  }
  return errors;
}

namespace {

GeodeticCoord interpolate_track(
    const std::vector<std::pair<double, GeodeticCoord>>& wp,
    const GeodeticCoord& fallback, double t) {
  if (wp.empty()) return fallback;
  if (t <= wp.front().first) return wp.front().second;
  if (t >= wp.back().first) return wp.back().second;
  for (std::size_t i = 0; i + 1 < wp.size(); ++i) {
    if (t > wp[i + 1].first) continue;
    const double f = (t - wp[i].first) / (wp[i + 1].first - wp[i].first);
    const EcefCoord a = geodetic_to_ecef(wp[i].second);
    const EcefCoord b = geodetic_to_ecef(wp[i + 1].second);
    return ecef_to_geodetic(a + f * (b - a));
  }
  return wp.back().second;
}

}  // namespace

GeodeticCoord rover_position_at(const ScenarioConfig& cfg, double t) {
  return interpolate_track(cfg.rover_waypoints, cfg.rover_truth, t);
}

namespace {

ReceiverModel make_receiver(const std::string& id, const GeodeticCoord& pos,
                            const ReceiverConfig& rc) {
  ReceiverModel rx;
  rx.id = id;
  rx.truth_position = pos;
  rx.sigma_code = rc.sigma_code;
  rx.sigma_phase = rc.sigma_phase;
  rx.tracking_threshold = rc.tracking_threshold;
  rx.nominal_cn0 = rc.nominal_cn0;
  rx.clock_drift = rc.clock_drift;
  rx.clock_walk = rc.clock_walk;
  return rx;
}

Constellation build_all(const std::vector<ConstellationSpec>& specs) {
  Constellation all;
  for (const auto& spec : specs) {
    Constellation c = build_constellation(spec);
    all.insert(all.end(), c.begin(), c.end());
  }
  return all;
}

}  // namespace

RoverPipeline::RoverPipeline(const ScenarioConfig& cfg,
                             const GeodeticCoord& position,
                             const std::string& receiver_id)
    : cfg_(cfg),
      constellation_(build_all(cfg.constellations)),
      rx_(make_receiver(receiver_id, position, cfg.rover_receiver)),
      rng_(Rng::for_stream(cfg.seed, receiver_id)),
      atmos_(cfg.atmosphere),
      truth_ecef_(geodetic_to_ecef(position)),
      station_ref_(geodetic_to_ecef(cfg.station_survey)),
      have_ref_(true) {
  atmos_.anchor = cfg.station_survey;
}

void RoverPipeline::set_waypoints(
    std::vector<std::pair<double, GeodeticCoord>> waypoints) {
  waypoints_ = std::move(waypoints);
}

void RoverPipeline::on_correction(const CorrectionMessage& msg) {
  if (const auto* sc = std::get_if<StationCoordsMsg>(&msg)) {
    station_ref_ = sc->to_ecef();
    have_ref_ = true;
    return;
  }
  const auto& om = std::get<ObservationsMsg>(msg);
  EpochObservations epoch = om.to_epoch("station");
  bool usable = false;
  for (const auto& o : epoch.observations) {
    if (!o.loss_of_lock) {
      usable = true;
      break;
    }
  }
  if (usable) last_usable_t_ = epoch.t;
  station_epoch_ = std::move(epoch);
}

EpochRecord RoverPipeline::step(double t) {
  if (!first_step_ && t > last_t_) {
    advance_clock(rx_, t - last_t_, rng_);
  }
  first_step_ = false;
  last_t_ = t;

  if (!waypoints_.empty()) {
    rx_.truth_position = interpolate_track(waypoints_, rx_.truth_position, t);
    truth_ecef_ = geodetic_to_ecef(rx_.truth_position);
  }

  const auto states = visible_satellites(
      all_states(constellation_, t, rx_.truth_position), cfg_.elevation_mask);
  const EpochObservations own = measure(rx_, states, atmos_, t, rng_);

  const double age = t - last_usable_t_;
  std::optional<EpochObservations> station;
  if (station_epoch_ &&
      std::abs(station_epoch_->t - t) <= cfg_.rtk.epoch_tolerance) {
    bool usable = false;
    for (const auto& o : station_epoch_->observations) {
      if (!o.loss_of_lock) usable = true;
    }
    if (usable) station = station_epoch_;
  }

  const RtkSolution sol = solve_epoch(station, station_ref_, own, states,
                                      atmos_, age, cfg_.rtk);

  EpochRecord rec;
  rec.t = t;
  rec.status = sol.status;
  rec.n_sats = sol.n_sats;
  rec.ratio = sol.ratio;
  rec.corrections_available = age <= cfg_.rtk.max_correction_age;
  if (sol.has_position) {
    const GeodeticCoord origin = ecef_to_geodetic(station_ref_);
    const EnuVector truth_enu = ecef_to_enu(truth_ecef_, origin);
    rec.err_e = sol.baseline.x() - truth_enu.x();
    rec.err_n = sol.baseline.y() - truth_enu.y();
    rec.err_u = sol.baseline.z() - truth_enu.z();
    rec.error_3d = std::sqrt(rec.err_e * rec.err_e + rec.err_n * rec.err_n +
                             rec.err_u * rec.err_u);
  } else {
    rec.err_e = rec.err_n = rec.err_u = rec.error_3d =
        std::numeric_limits<double>::quiet_NaN();
  }
  records_.push_back(rec);
  return rec;
}

RunResult run_scenario(
    const ScenarioConfig& cfg,
    const std::function<void(const std::vector<std::uint8_t>&)>& frame_sink) {
  {
    std::vector<std::string> errors = validate_scenario(cfg, nullptr);
    if (!errors.empty()) throw ConfigError("invalid scenario", errors);
  }

  const Constellation constellation = build_all(cfg.constellations);
  ReceiverModel station =
      make_receiver("station", cfg.station_truth, cfg.station_receiver);
  Rng station_rng = Rng::for_stream(cfg.seed, "station");
  AtmosphereModel atmos = cfg.atmosphere;
  atmos.anchor = cfg.station_survey;
  const EcefCoord survey_ecef = geodetic_to_ecef(cfg.station_survey);

  std::optional<AttackRuntime> attack;
  if (cfg.attack) attack.emplace(*cfg.attack, cfg.seed);

  RoverPipeline rover(cfg, cfg.rover_truth, "rover");
  rover.set_waypoints(cfg.rover_waypoints);
  StreamDecoder decoder;

  RunResult result;
  const double dt = cfg.epoch_interval;
  const long n_epochs = static_cast<long>(std::ceil(cfg.duration / dt - 1e-9));
  for (long k = 0; k < n_epochs; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k > 0) advance_clock(station, dt, station_rng);

    const auto sta_states = visible_satellites(
        all_states(constellation, t, cfg.station_truth), cfg.elevation_mask);
    const EpochObservations honest =
        measure(station, sta_states, atmos, t, station_rng);
    const EpochObservations emitted =
        attack ? attack->apply(honest, station, sta_states, atmos, t, dt)
               : honest;

    // Everything the rover sees goes through the wire codec, the same
    // code path the TCP caster uses.
    const std::vector<std::uint8_t> coords_frame = encode_message(
        StationCoordsMsg::from_ecef(cfg.station_id, t, survey_ecef));
    const std::vector<std::uint8_t> obs_frame =
        encode_message(ObservationsMsg::from_epoch(cfg.station_id, emitted));
    for (const auto* frame : {&coords_frame, &obs_frame}) {
      if (frame_sink) frame_sink(*frame);
      decoder.push(*frame);
    }
    while (auto msg = decoder.next()) rover.on_correction(*msg);

    EpochRecord rec = rover.step(t);
    rec.station_under_attack = cfg.attack && cfg.attack->active(t);
    result.records.push_back(rec);
  }

  result.overall = compute_metrics(result.records);
  if (cfg.attack) {
    std::vector<EpochRecord> in, out;
    for (const auto& r : result.records) {
      (r.station_under_attack ? in : out).push_back(r);
    }
    if (!in.empty()) result.attack_window = compute_metrics(in);
    if (!out.empty()) result.outside_window = compute_metrics(out);
  }
  return result;
}

MetricsSummary compute_metrics(const std::vector<EpochRecord>& records) {
  if (records.empty()) throw EmptyRunError();
  MetricsSummary m;
  m.n_epochs = records.size();

  std::vector<double> errors;
  std::size_t n_fix = 0;
  for (const auto& r : records) {
    m.status_histogram[to_string(r.status)]++;
    if (r.corrections_available) {
      ++m.n_attempted;
      if (r.status == SolutionStatus::Fix) ++n_fix;
    }
    if (std::isfinite(r.error_3d)) errors.push_back(r.error_3d);
  }
  m.n_positions = errors.size();
  if (m.n_attempted > 0) {
    m.fix_rate = static_cast<double>(n_fix) / static_cast<double>(m.n_attempted);
    m.fail_fraction = 1.0 - m.fix_rate;
  }
  if (!errors.empty()) {
    double sum = 0.0, sum2 = 0.0;
    for (double e : errors) {
      sum += e;
      sum2 += e * e;
    }
    m.mean_3d = sum / errors.size();
    m.rms_3d = std::sqrt(sum2 / errors.size());
    std::sort(errors.begin(), errors.end());
    m.max_3d = errors.back();
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(errors.size())));
    m.p95_3d = errors[std::max<std::size_t>(rank, 1) - 1];
  }
  return m;
}

std::string records_to_csv(const std::vector<EpochRecord>& records) {
  std::string out = "t,status,err_e,err_n,err_u,err_3d,n_sats,ratio,attack\n";
  char line[256];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%.3f,%s,%.4f,%.4f,%.4f,%.4f,%d,%.3f,%d\n",
                  r.t, to_string(r.status).c_str(), r.err_e, r.err_n, r.err_u,
                  r.error_3d, r.n_sats, r.ratio, r.station_under_attack ? 1 : 0);
    out += line;
  }
  return out;
}

namespace {

ordered_json metrics_to_json(const MetricsSummary& m) {
  ordered_json j;
  j["n_epochs"] = m.n_epochs;
  j["n_attempted"] = m.n_attempted;
  j["n_positions"] = m.n_positions;
  j["fix_rate"] = m.fix_rate;
  j["fail_fraction"] = m.fail_fraction;
  j["rms_3d_m"] = m.rms_3d;
  j["mean_3d_m"] = m.mean_3d;
  j["max_3d_m"] = m.max_3d;
  j["p95_3d_m"] = m.p95_3d;
  j["status_histogram"] = m.status_histogram;
  return j;
}

}  // namespace

std::string summary_to_json(const RunResult& result) {
  ordered_json j;
  j["overall"] = metrics_to_json(result.overall);
  if (result.attack_window) {
    j["attack_window"] = metrics_to_json(*result.attack_window);
  }
  if (result.outside_window) {
    j["outside_window"] = metrics_to_json(*result.outside_window);
  }
  return j.dump(2) + "\n";
}

namespace {

std::ofstream open_output(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

void write_outputs(const ScenarioConfig& cfg, const RunResult& result) {
  if (!cfg.outputs.epochs_csv.empty()) {
    open_output(cfg.outputs.epochs_csv) << records_to_csv(result.records);
  }
  if (!cfg.outputs.summary_json.empty()) {
    open_output(cfg.outputs.summary_json) << summary_to_json(result);
  }
}

}  // namespace rtksim
