#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rtksim/scenario.hpp"
#include "rtksim/wire.hpp"

namespace rtksim {

/// NTRIP-like correction caster. Clients send a plain-text
/// "GET /<mountpoint> HTTP/1.1" handshake (optional
/// "Authorization: Bearer <token>" line) terminated by a blank line and
/// then receive the frame stream. Joins are frame-aligned. The station
/// publisher never blocks on clients: frames go into an append-only log
/// and each client consumes at its own pace; a client making no progress
/// for stall_timeout seconds is dropped.
class CasterServer {
 public:
  struct Options {
    std::string bind_address = "127.0.0.1";
    int port = 0;  // 0: ephemeral, see port() after start()
    std::string mountpoint = "SIM";
    std::string token;          // empty: no authentication
    double stall_timeout = 5.0;  // s
    int send_buffer = 0;        // bytes, 0 = OS default (tests shrink it)
  };

  explicit CasterServer(Options options);
  ~CasterServer();

  void start();  // throws std::system_error when the address is not bindable
  void stop();

  int port() const { return port_; }

  /// Appends one complete frame to the broadcast log.
  void publish(const std::vector<std::uint8_t>& frame);

  /// Closes the stream for all clients after the log drains (end of run).
  void finish();

  std::size_t clients_accepted() const { return clients_accepted_; }
  std::size_t clients_dropped_stalled() const { return dropped_stalled_; }

 private:
  void accept_loop();
  void serve_client(int fd);

  Options options_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::thread accept_thread_;
  std::vector<std::thread> client_threads_;
  std::mutex clients_mutex_;

  std::mutex log_mutex_;
  std::condition_variable log_cv_;
  std::vector<std::vector<std::uint8_t>> log_;
  bool finished_ = false;

  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> clients_accepted_{0};
  std::atomic<std::size_t> dropped_stalled_{0};
};

enum class ClientError { ConnectionRefused, HandshakeRejected };

class ClientException : public std::runtime_error {
 public:
  ClientException(ClientError kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ClientError kind() const { return kind_; }

 private:
  ClientError kind_;
};

/// Correction stream client: connects, performs the text handshake, and
/// yields decoded messages. On connection loss it reconnects with
/// exponential backoff (0.5 s doubling up to 8 s). Decode errors are
/// counted and skipped, never fatal.
class CorrectionClient {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 2101;
    std::string mountpoint = "SIM";
    std::string token;
    bool reconnect = true;
    double backoff_initial = 0.5;  // s
    double backoff_cap = 8.0;      // s
  };

  explicit CorrectionClient(Options options);
  ~CorrectionClient();

  /// Establishes the first connection; throws ClientException.
  void connect();

  /// Next decoded message, waiting up to timeout_s. nullopt on timeout or
  /// when the stream ended and reconnection is disabled/failing.
  std::optional<CorrectionMessage> next_message(double timeout_s);

  /// Age bookkeeping: seconds between `t` and the newest usable
  /// observation epoch seen on the stream.
  double correction_age(double t) const;

  bool connected() const { return fd_ >= 0; }
  std::size_t decode_errors() const;
  std::size_t reconnects() const { return reconnects_; }
  void close();

 private:
  bool try_connect(std::string* reason);

  Options options_;
  int fd_ = -1;
  StreamDecoder decoder_;
  double last_usable_t_ = -1e18;
  std::size_t reconnects_ = 0;
  double backoff_ = 0.5;
};

struct LiveRunOptions {
  GeodeticCoord position;       // where this rover sits
  std::vector<std::pair<double, GeodeticCoord>> waypoints;  // kinematic track
  std::string receiver_id = "rover";
  double speed = 1.0;           // stream pacing multiplier (matches caster)
  double stream_timeout = 0.0;  // s without data before self-ticking;
                                // 0 picks max(2*interval/speed, 0.5)
  bool print_epochs = false;
};

/// Drives a RoverPipeline from a live correction stream: each observation
/// message advances one epoch; when the stream stalls the pipeline keeps
/// ticking on the local clock so staleness is visible (FIX degrades to
/// SINGLE after max_age). Runs until the scenario duration is covered.
/// This is both the victim rover loop and the attacker's monitor.
RunResult run_live_rover(CorrectionClient& client, const ScenarioConfig& cfg,
                         const LiveRunOptions& options);

/// Station side of the live mode: replays the scenario through the caster
/// at `speed` times real time. Returns the epochs published.
std::size_t run_live_station(CasterServer& caster, const ScenarioConfig& cfg,
                             double speed,
                             const std::atomic<bool>* stop = nullptr);

}  // namespace rtksim
