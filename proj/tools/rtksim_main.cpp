#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "rtksim/caster.hpp"
#include "rtksim/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

rtksim::ScenarioConfig load_or_exit(const std::string& path) {
  try {
    rtksim::ScenarioConfig cfg = rtksim::load_scenario(path);
    std::vector<std::string> warnings;
    rtksim::validate_scenario(cfg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return cfg;
  } catch (const rtksim::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
    std::exit(kExitConfig);
  }
}

void print_summary(const rtksim::RunResult& result) {
  std::cout << rtksim::summary_to_json(result);
}

int cmd_run(const std::string& path, const std::string& csv_override,
            const std::string& summary_override) {
  rtksim::ScenarioConfig cfg = load_or_exit(path);
  if (!csv_override.empty()) cfg.outputs.epochs_csv = csv_override;
  if (!summary_override.empty()) cfg.outputs.summary_json = summary_override;
  try {
    const rtksim::RunResult result = rtksim::run_scenario(cfg);
    rtksim::write_outputs(cfg, result);
    print_summary(result);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_caster(const std::string& path, double speed) {
  rtksim::ScenarioConfig cfg = load_or_exit(path);
  try {
    rtksim::CasterServer::Options opts;
    opts.bind_address = cfg.caster.bind_address;
    opts.port = cfg.caster.port;
    opts.mountpoint = cfg.caster.mountpoint;
    opts.token = cfg.caster.token;
    opts.stall_timeout = cfg.caster.stall_timeout;
    rtksim::CasterServer caster(opts);
    caster.start();
    std::cerr << "caster listening on " << cfg.caster.bind_address << ":"
              << caster.port() << "/" << cfg.caster.mountpoint << "\n";
    const std::size_t frames =
        rtksim::run_live_station(caster, cfg, speed, &g_stop);
    std::cerr << "published " << frames << " frames, served "
              << caster.clients_accepted() << " clients\n";
    caster.stop();
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run_client(const std::string& address, int port,
               const std::string& mountpoint, const std::string& scenario_path,
               const std::string& token, double speed,
               const rtksim::GeodeticCoord& position,
               const std::string& receiver_id, const std::string& csv_path,
               bool quiet, bool follow_waypoints) {
  rtksim::ScenarioConfig cfg = load_or_exit(scenario_path);
  try {
    rtksim::CorrectionClient::Options copts;
    copts.host = address;
    copts.port = port;
    copts.mountpoint = mountpoint;
    copts.token = !token.empty() ? token : cfg.caster.token;
    rtksim::CorrectionClient client(copts);
    client.connect();

    rtksim::LiveRunOptions lopts;
    lopts.position = position;
    if (follow_waypoints) lopts.waypoints = cfg.rover_waypoints;
    lopts.receiver_id = receiver_id;
    lopts.speed = speed;
    lopts.print_epochs = !quiet;
    const rtksim::RunResult result =
        rtksim::run_live_rover(client, cfg, lopts);
    if (!csv_path.empty()) {
      std::ofstream out(csv_path, std::ios::binary);
      out << rtksim::records_to_csv(result.records);
    }
    print_summary(result);
    return kExitOk;
  } catch (const rtksim::ClientException& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_validate(const std::string& path) {
  rtksim::ScenarioConfig cfg = load_or_exit(path);
  std::cout << "ok: " << cfg.name << " (" << cfg.constellations.size()
            << " constellations, " << cfg.duration << " s, seed " << cfg.seed
            << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);

  CLI::App app{"network RTK attack simulator"};
  app.require_subcommand(1);

  std::string scenario_path, address = "127.0.0.1", mountpoint = "SIM";
  std::string csv_path, summary_path, token;
  int port = 2101;
  double speed = 1.0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "run a scenario end to end");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--csv", csv_path, "override per-epoch CSV path");
  run->add_option("--summary", summary_path, "override summary JSON path");

  auto* caster = app.add_subcommand("caster", "serve live corrections");
  caster->add_option("scenario", scenario_path, "scenario JSON file")->required();
  caster->add_option("--speed", speed, "time acceleration factor");

  auto* rover = app.add_subcommand("rover", "standalone client and solver");
  rover->add_option("address", address, "caster host")->required();
  rover->add_option("mountpoint", mountpoint, "caster mountpoint")->required();
  rover->add_option("--scenario", scenario_path,
                    "scenario file with the rover's receiver setup")
      ->required();
  rover->add_option("--port", port, "caster TCP port");
  rover->add_option("--token", token, "bearer token");
  rover->add_option("--speed", speed, "time acceleration factor");
  rover->add_option("--csv", csv_path, "write per-epoch CSV here");
  rover->add_flag("--quiet", quiet, "suppress per-epoch output");

  auto* monitor =
      app.add_subcommand("attack-monitor", "attacker-side feedback rover");
  monitor->add_option("address", address, "caster host")->required();
  monitor->add_option("mountpoint", mountpoint, "caster mountpoint")->required();
  monitor->add_option("--scenario", scenario_path,
                      "scenario file with the monitor setup")
      ->required();
  monitor->add_option("--port", port, "caster TCP port");
  monitor->add_option("--token", token, "bearer token");
  monitor->add_option("--speed", speed, "time acceleration factor");
  monitor->add_option("--csv", csv_path, "write per-epoch CSV here");
  monitor->add_flag("--quiet", quiet, "suppress per-epoch output");

  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("scenario", scenario_path, "scenario JSON file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(scenario_path, csv_path, summary_path);
  if (caster->parsed()) return cmd_caster(scenario_path, speed);
  if (rover->parsed()) {
    rtksim::ScenarioConfig cfg = load_or_exit(scenario_path);
    return run_client(address, port, mountpoint, scenario_path, token, speed,
                      cfg.rover_truth, "rover", csv_path, quiet, true);
  }
  if (monitor->parsed()) {
    rtksim::ScenarioConfig cfg = load_or_exit(scenario_path);
    const rtksim::GeodeticCoord pos =
        cfg.monitor_position ? *cfg.monitor_position : cfg.station_survey;
    return run_client(address, port, mountpoint, scenario_path, token, speed,
                      pos, "attacker-monitor", csv_path, quiet, false);
  }
  if (validate->parsed()) return cmd_validate(scenario_path);
  return kExitConfig;
}
