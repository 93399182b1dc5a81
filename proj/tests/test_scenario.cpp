#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rtksim/scenario.hpp"

using namespace rtksim;

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(RTKSIM_SCENARIO_DIR) + "/" + name;
}

ScenarioConfig small_nominal() {
  ScenarioConfig cfg = load_scenario(scenario_path("nominal.json"));
  cfg.duration = 40.0;
  cfg.outputs = {};
  return cfg;
}

}  // namespace

TEST_CASE("shipped scenarios parse and validate") {
  for (const char* name :
       {"nominal.json", "lift_off.json", "async_spoof.json", "jam.json"}) {
    const ScenarioConfig cfg = load_scenario(scenario_path(name));
    std::vector<std::string> warnings;
    CHECK(validate_scenario(cfg, &warnings).empty());
    CHECK(cfg.duration > 0);
  }
}

TEST_CASE("config errors carry field-level messages") {
  SUBCASE("unknown fields are flagged") {
    CHECK_THROWS_AS(parse_scenario(R"({"statoin": {}})"), ConfigError);
    try {
      parse_scenario(R"({"seed": 1, "statoin": {}})");
    } catch (const ConfigError& e) {
      bool mentions = false;
      for (const auto& d : e.details()) {
        if (d.find("statoin") != std::string::npos) mentions = true;
      }
      CHECK(mentions);
    }
  }
  SUBCASE("bad ranges are flagged") {
    const char* text = R"({
      "duration_s": -5,
      "station": { "survey_position": {"lat_deg": 95, "lon_deg": 0} },
      "rover": { "truth_position": {"lat_deg": 45, "lon_deg": 11} }
    })";
    try {
      parse_scenario(text);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.details().size() >= 2);
    }
  }
  SUBCASE("rover more than 50 km away is rejected") {
    const char* text = R"({
      "station": { "survey_position": {"lat_deg": 45, "lon_deg": 11} },
      "rover": { "truth_position": {"lat_deg": 46, "lon_deg": 11} }
    })";
    CHECK_THROWS_AS(parse_scenario(text), ConfigError);
  }
  SUBCASE("async spoof requires a spoofed position") {
    const char* text = R"({
      "station": { "survey_position": {"lat_deg": 45, "lon_deg": 11} },
      "rover": { "truth_position": {"lat_deg": 45, "lon_deg": 11.01} },
      "attack": { "mode": "ASYNC_SPOOF", "start_s": 10, "end_s": 20 }
    })";
    CHECK_THROWS_AS(parse_scenario(text), ConfigError);
  }
}

TEST_CASE("distance warning beyond 10 km") {
  ScenarioConfig cfg = small_nominal();
  cfg.rover_truth = GeodeticCoord::from_degrees(45.0, 11.3, 60.0);  // ~23 km
  std::vector<std::string> warnings;
  CHECK(validate_scenario(cfg, &warnings).empty());
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("10 km") != std::string::npos);
}

TEST_CASE("nominal run at desk scale fixes nearly every epoch") {
  const RunResult r = run_scenario(small_nominal());
  CHECK(r.records.size() == 40);
  CHECK(r.overall.fix_rate >= 0.95);
  CHECK(r.overall.rms_3d < 0.05);
  CHECK(!r.attack_window.has_value());
}

TEST_CASE("nominal full run, frozen goldens") {
  // First validated run of the shipped scenario gave fix_rate = 1.0 and
  // rms_3d = 0.00164 m; kept as a regression band.
  ScenarioConfig cfg = load_scenario(scenario_path("nominal.json"));
  cfg.outputs = {};
  const RunResult r = run_scenario(cfg);
  CHECK(r.records.size() == 600);
  CHECK(r.overall.fix_rate >= 0.99);
  CHECK(r.overall.rms_3d > 0.0005);
  CHECK(r.overall.rms_3d < 0.01);
  CHECK(r.overall.max_3d < 0.05);
  CHECK(r.overall.status_histogram.at("FIX") >= 594);
}

TEST_CASE("kinematic rover follows waypoints and keeps its fix") {
  const char* text = R"({
    "seed": 7, "duration_s": 60, "epoch_interval_s": 1.0,
    "station": { "survey_position": {"lat_deg": 45.0, "lon_deg": 11.0, "height_m": 64} },
    "rover": {
      "waypoints": [
        { "t_s": 0,  "lat_deg": 45.0, "lon_deg": 11.0127, "height_m": 58 },
        { "t_s": 60, "lat_deg": 45.0010, "lon_deg": 11.0127, "height_m": 58 }
      ]
    }
  })";
  const ScenarioConfig cfg = parse_scenario(text);
  REQUIRE(cfg.rover_waypoints.size() == 2);

  // interpolation is linear and clamped
  const EcefCoord a = geodetic_to_ecef(rover_position_at(cfg, -5.0));
  const EcefCoord mid = geodetic_to_ecef(rover_position_at(cfg, 30.0));
  const EcefCoord b = geodetic_to_ecef(rover_position_at(cfg, 600.0));
  CHECK((a - geodetic_to_ecef(cfg.rover_waypoints[0].second)).norm() < 1e-9);
  CHECK((b - geodetic_to_ecef(cfg.rover_waypoints[1].second)).norm() < 1e-9);
  CHECK((mid - 0.5 * (a + b)).norm() < 1e-6);
  CHECK((b - a).norm() > 100.0);  // the track actually moves ~110 m

  const RunResult r = run_scenario(cfg);
  CHECK(r.overall.fix_rate >= 0.9);
  CHECK(r.overall.rms_3d < 0.05);  // errors measured against the moving truth
}

TEST_CASE("waypoints must be strictly increasing in time") {
  const char* text = R"({
    "seed": 7, "duration_s": 10,
    "station": { "survey_position": {"lat_deg": 45.0, "lon_deg": 11.0} },
    "rover": {
      "waypoints": [
        { "t_s": 10, "lat_deg": 45.0, "lon_deg": 11.01 },
        { "t_s": 5,  "lat_deg": 45.0, "lon_deg": 11.02 }
      ]
    }
  })";
  CHECK_THROWS_AS(parse_scenario(text), ConfigError);
}

TEST_CASE("determinism: identical seeds give identical csv bytes") {
  const ScenarioConfig cfg = small_nominal();
  const std::string a = records_to_csv(run_scenario(cfg).records);
  const std::string b = records_to_csv(run_scenario(cfg).records);
  CHECK(a == b);

  ScenarioConfig other = cfg;
  other.seed += 1;
  const std::string c = records_to_csv(run_scenario(other).records);
  CHECK(a != c);
}

TEST_CASE("epochs before the attack window match the nominal run bit for bit") {
  ScenarioConfig spoof = load_scenario(scenario_path("async_spoof.json"));
  spoof.duration = 120.0;
  spoof.outputs = {};
  ScenarioConfig nominal = spoof;
  nominal.attack.reset();

  const RunResult ra = run_scenario(spoof);
  const RunResult rn = run_scenario(nominal);
  REQUIRE(ra.records.size() == rn.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    if (ra.records[i].t >= spoof.attack->start) break;
    CHECK(ra.records[i].err_e == rn.records[i].err_e);
    CHECK(ra.records[i].err_n == rn.records[i].err_n);
    CHECK(ra.records[i].err_u == rn.records[i].err_u);
    CHECK(ra.records[i].status == rn.records[i].status);
    CHECK(ra.records[i].ratio == rn.records[i].ratio);
  }
}

TEST_CASE("compute_metrics") {
  SUBCASE("empty run throws") {
    CHECK_THROWS_AS(compute_metrics({}), EmptyRunError);
  }

  auto rec = [](SolutionStatus st, double e3, bool avail) {
    EpochRecord r;
    r.status = st;
    r.error_3d = e3;
    r.err_e = e3;
    r.corrections_available = avail;
    if (!std::isfinite(e3)) r.err_e = r.err_n = r.err_u = e3;
    return r;
  };

  SUBCASE("all fix means zero fail fraction") {
    std::vector<EpochRecord> rs(10, rec(SolutionStatus::Fix, 0.01, true));
    const MetricsSummary m = compute_metrics(rs);
    CHECK(m.fail_fraction == 0.0);
    CHECK(m.fix_rate == 1.0);
    CHECK(m.status_histogram.at("FIX") == 10);
  }

  SUBCASE("half fix half float gives one half") {
    std::vector<EpochRecord> rs;
    for (int i = 0; i < 5; ++i) rs.push_back(rec(SolutionStatus::Fix, 0.01, true));
    for (int i = 0; i < 5; ++i) {
      rs.push_back(rec(SolutionStatus::Float, 0.3, true));
    }
    const MetricsSummary m = compute_metrics(rs);
    CHECK(m.fail_fraction == doctest::Approx(0.5));
    CHECK(m.fix_rate + m.fail_fraction == doctest::Approx(1.0));
  }

  SUBCASE("three-four-five error triangle") {
    EpochRecord r;
    r.status = SolutionStatus::Fix;
    r.corrections_available = true;
    r.err_e = 3.0;
    r.err_n = 4.0;
    r.err_u = 0.0;
    r.error_3d = 5.0;
    const MetricsSummary m = compute_metrics({r});
    CHECK(m.mean_3d == 5.0);
    CHECK(m.rms_3d == 5.0);
    CHECK(m.max_3d == 5.0);
    CHECK(m.p95_3d == 5.0);
  }

  SUBCASE("stale epochs leave the attempted denominator") {
    std::vector<EpochRecord> rs;
    for (int i = 0; i < 8; ++i) rs.push_back(rec(SolutionStatus::Fix, 0.01, true));
    for (int i = 0; i < 2; ++i) {
      rs.push_back(rec(SolutionStatus::Single, 1.0, false));
    }
    const MetricsSummary m = compute_metrics(rs);
    CHECK(m.n_attempted == 8);
    CHECK(m.fix_rate == 1.0);
  }

  SUBCASE("ordering invariants") {
    std::vector<EpochRecord> rs;
    for (int i = 1; i <= 100; ++i) {
      rs.push_back(rec(SolutionStatus::Fix, 0.001 * i, true));
    }
    const MetricsSummary m = compute_metrics(rs);
    CHECK(m.max_3d >= m.p95_3d);
    CHECK(m.p95_3d >= m.mean_3d);
    CHECK(m.max_3d == doctest::Approx(0.1));
    CHECK(m.p95_3d == doctest::Approx(0.095));
  }
}

TEST_CASE("csv output shape") {
  ScenarioConfig cfg = small_nominal();
  cfg.duration = 5.0;
  const RunResult r = run_scenario(cfg);
  const std::string csv = records_to_csv(r.records);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,status,err_e,err_n,err_u,err_3d,n_sats,ratio,attack");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
  }
  CHECK(rows == 5);
}

TEST_CASE("summary json carries the metrics blocks") {
  ScenarioConfig cfg = load_scenario(scenario_path("jam.json"));
  cfg.duration = 130.0;
  cfg.outputs = {};
  const RunResult r = run_scenario(cfg);
  const std::string json = summary_to_json(r);
  CHECK(json.find("\"overall\"") != std::string::npos);
  CHECK(json.find("\"attack_window\"") != std::string::npos);
  CHECK(json.find("\"outside_window\"") != std::string::npos);
  CHECK(json.find("\"fail_fraction\"") != std::string::npos);
}

TEST_CASE("metric consistency against raw records") {
  ScenarioConfig cfg = load_scenario(scenario_path("jam.json"));
  cfg.duration = 200.0;
  cfg.outputs = {};
  const RunResult r = run_scenario(cfg);
  std::size_t fix = 0, attempted = 0;
  for (const auto& rec : r.records) {
    if (rec.corrections_available) {
      ++attempted;
      if (rec.status == SolutionStatus::Fix) ++fix;
    }
  }
  CHECK(r.overall.n_attempted == attempted);
  CHECK(r.overall.fix_rate ==
        doctest::Approx(static_cast<double>(fix) / attempted));
  CHECK(r.overall.fix_rate + r.overall.fail_fraction == doctest::Approx(1.0));
}

TEST_CASE("write_outputs produces the files") {
  ScenarioConfig cfg = small_nominal();
  cfg.duration = 3.0;
  cfg.outputs.epochs_csv = "/tmp/rtksim_test_epochs.csv";
  cfg.outputs.summary_json = "/tmp/rtksim_test_summary.json";
  const RunResult r = run_scenario(cfg);
  write_outputs(cfg, r);
  std::ifstream csv(cfg.outputs.epochs_csv);
  std::ifstream js(cfg.outputs.summary_json);
  CHECK(csv.good());
  CHECK(js.good());
  std::string first;
  std::getline(csv, first);
  CHECK(first.rfind("t,status", 0) == 0);
}
