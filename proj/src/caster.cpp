#include "rtksim/caster.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <system_error>
#include <thread>

namespace rtksim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void set_nonblocking(int fd) {
  // poll-driven I/O with short slices; sockets stay blocking except for
  // the send path, where we manage the stall budget ourselves.
  int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

/// Reads until a blank line or timeout; returns the raw request text.
std::optional<std::string> read_request(int fd, double timeout_s) {
  std::string req;
  const auto t0 = Clock::now();
  char buf[512];
  while (seconds_since(t0) < timeout_s) {
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc < 0) return std::nullopt;
    if (rc == 0) continue;
    const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n <= 0) return std::nullopt;
    req.append(buf, static_cast<std::size_t>(n));
    if (req.find("\r\n\r\n") != std::string::npos ||
        req.find("\n\n") != std::string::npos) {
      return req;
    }
    if (req.size() > 8192) return std::nullopt;
  }
  return std::nullopt;
}

bool send_all_blocking(int fd, const char* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t n = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        pollfd p{fd, POLLOUT, 0};
        if (::poll(&p, 1, 1000) <= 0) return false;
        continue;
      }
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

struct ParsedRequest {
  std::string mountpoint;
  std::string bearer;
};

std::optional<ParsedRequest> parse_request(const std::string& req) {
  const auto line_end = req.find_first_of("\r\n");
  const std::string first = req.substr(0, line_end);
  if (first.rfind("GET /", 0) != 0) return std::nullopt;
  const auto path_start = 4;  // index of '/'
  const auto path_end = first.find(' ', path_start + 1);
  if (path_end == std::string::npos) return std::nullopt;
  ParsedRequest out;
  out.mountpoint = first.substr(path_start + 1, path_end - path_start - 1);

  const std::string auth_key = "Authorization:";
  std::size_t pos = 0;
  while (pos < req.size()) {
    auto eol = req.find('\n', pos);
    if (eol == std::string::npos) eol = req.size();
    std::string line = req.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind(auth_key, 0) == 0) {
      std::string v = line.substr(auth_key.size());
      const std::string bearer = "Bearer ";
      const auto b = v.find(bearer);
      if (b != std::string::npos) out.bearer = v.substr(b + bearer.size());
    }
    pos = eol + 1;
  }
  return out;
}

int open_client_socket(const std::string& host, int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return -1;
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    return -1;
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    return -1;
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

}  // namespace

CasterServer::CasterServer(Options options) : options_(std::move(options)) {}

CasterServer::~CasterServer() { stop(); }

void CasterServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) {
    throw std::system_error(errno, std::generic_category(), "socket");
  }
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    throw std::system_error(EINVAL, std::generic_category(),
                            "bad bind address " + options_.bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::system_error(err, std::generic_category(),
                            "bind " + options_.bind_address);
  }
  if (::listen(listen_fd_, 16) != 0) {
    throw std::system_error(errno, std::generic_category(), "listen");
  }
  sockaddr_in bound{};
  socklen_t blen = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
  port_ = ntohs(bound.sin_port);

  stopping_ = false;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void CasterServer::stop() {
  if (listen_fd_ < 0 && !accept_thread_.joinable()) return;
  stopping_ = true;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  log_cv_.notify_all();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> clients;
  {
    std::lock_guard<std::mutex> lock(clients_mutex_);
    clients.swap(client_threads_);
  }
  for (auto& t : clients) {
    if (t.joinable()) t.join();
  }
}

void CasterServer::publish(const std::vector<std::uint8_t>& frame) {
  {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_.push_back(frame);
  }
  log_cv_.notify_all();
}

void CasterServer::finish() {
  {
    std::lock_guard<std::mutex> lock(log_mutex_);
    finished_ = true;
  }
  log_cv_.notify_all();
}

void CasterServer::accept_loop() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 200);
    if (stopping_) break;
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard<std::mutex> lock(clients_mutex_);
    client_threads_.emplace_back([this, fd] { serve_client(fd); });
  }
}

void CasterServer::serve_client(int fd) {
  const auto request = read_request(fd, 5.0);
  if (!request) {
    ::close(fd);
    return;
  }
  const auto parsed = parse_request(*request);
  if (!parsed) {
    ::close(fd);
    return;
  }
  if (!options_.token.empty() && parsed->bearer != options_.token) {
    const char* resp = "HTTP/1.1 401 Unauthorized\r\n\r\n";
    send_all_blocking(fd, resp, std::strlen(resp));
    ::close(fd);
    return;
  }
  if (parsed->mountpoint != options_.mountpoint) {
    const char* resp = "SOURCETABLE 200 OK\r\n\r\nENDSOURCETABLE\r\n";
    send_all_blocking(fd, resp, std::strlen(resp));
    ::close(fd);
    return;
  }

  // Frame-aligned join: snapshot the log end before acknowledging, so
  // everything published after the client sees the handshake response is
  // guaranteed to be delivered.
  std::size_t cursor;
  {
    std::lock_guard<std::mutex> lock(log_mutex_);
    cursor = log_.size();
  }

  const char* ok = "ICY 200 OK\r\n\r\n";
  if (!send_all_blocking(fd, ok, std::strlen(ok))) {
    ::close(fd);
    return;
  }
  ++clients_accepted_;

  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  if (options_.send_buffer > 0) {
    ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &options_.send_buffer,
                 sizeof(options_.send_buffer));
  }
  set_nonblocking(fd);

  std::vector<std::uint8_t> pending;
  std::size_t pending_off = 0;
  auto last_progress = Clock::now();

  while (!stopping_) {
    if (pending_off == pending.size()) {
      std::unique_lock<std::mutex> lock(log_mutex_);
      log_cv_.wait_for(lock, std::chrono::milliseconds(100), [&] {
        return stopping_ || finished_ || log_.size() > cursor;
      });
      if (stopping_) break;
      if (log_.size() > cursor) {
        pending.clear();
        pending_off = 0;
        // Batch what is available; keeps syscalls low at high rates.
        while (cursor < log_.size()) {
          pending.insert(pending.end(), log_[cursor].begin(), log_[cursor].end());
          ++cursor;
        }
        last_progress = Clock::now();
      } else if (finished_) {
        break;
      } else {
        continue;
      }
    }

    const ssize_t n = ::send(fd, pending.data() + pending_off,
                             pending.size() - pending_off, MSG_NOSIGNAL);
    if (n > 0) {
      pending_off += static_cast<std::size_t>(n);
      last_progress = Clock::now();
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      if (seconds_since(last_progress) > options_.stall_timeout) {
        ++dropped_stalled_;  // slow client must not hold the broadcast
        break;
      }
      pollfd p{fd, POLLOUT, 0};
      ::poll(&p, 1, 100);
      continue;
    }
    break;  // peer closed or hard error
  }
  ::close(fd);
}

CorrectionClient::CorrectionClient(Options options)
    : options_(std::move(options)), backoff_(options_.backoff_initial) {}

CorrectionClient::~CorrectionClient() { close(); }

void CorrectionClient::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

bool CorrectionClient::try_connect(std::string* reason) {
  const int fd = open_client_socket(options_.host, options_.port);
  if (fd < 0) {
    if (reason) *reason = "connect failed";
    return false;
  }
  std::string req = "GET /" + options_.mountpoint + " HTTP/1.1\r\n";
  req += "User-Agent: rtksim-client/1.0\r\n";
  if (!options_.token.empty()) {
    req += "Authorization: Bearer " + options_.token + "\r\n";
  }
  req += "\r\n";
  if (!send_all_blocking(fd, req.data(), req.size())) {
    ::close(fd);
    if (reason) *reason = "handshake send failed";
    return false;
  }

  // Expect "ICY 200 OK" terminated by a blank line.
  std::string resp;
  char buf[256];
  const auto t0 = Clock::now();
  while (seconds_since(t0) < 5.0) {
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n <= 0) break;
    resp.append(buf, static_cast<std::size_t>(n));
    const auto end = resp.find("\r\n\r\n");
    if (end != std::string::npos) {
      if (resp.rfind("ICY 200 OK", 0) == 0) {
        fd_ = fd;
        // Bytes after the header already belong to the stream.
        const std::string rest = resp.substr(end + 4);
        decoder_.push(reinterpret_cast<const std::uint8_t*>(rest.data()),
                      rest.size());
        return true;
      }
      ::close(fd);
      if (reason) {
        *reason = "rejected: " + resp.substr(0, resp.find_first_of("\r\n"));
      }
      return false;
    }
  }
  ::close(fd);
  if (reason) *reason = "no handshake response";
  return false;
}

void CorrectionClient::connect() {
  std::string reason;
  if (!try_connect(&reason)) {
    if (reason.rfind("rejected", 0) == 0) {
      throw ClientException(ClientError::HandshakeRejected, reason);
    }
    throw ClientException(ClientError::ConnectionRefused, reason);
  }
  backoff_ = options_.backoff_initial;
}

std::optional<CorrectionMessage> CorrectionClient::next_message(
    double timeout_s) {
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                            std::chrono::duration<double>(timeout_s));
  while (true) {
    if (auto msg = decoder_.next()) {
      if (const auto* om = std::get_if<ObservationsMsg>(&*msg)) {
        for (const auto& e : om->entries) {
          if (e.lock) {
            last_usable_t_ = om->t();
            break;
          }
        }
      }
      return msg;
    }
    if (Clock::now() >= deadline) return std::nullopt;

    if (fd_ < 0) {
      if (!options_.reconnect) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::duration<double>(
          std::min(backoff_, std::chrono::duration<double>(deadline - Clock::now()).count())));
      if (try_connect(nullptr)) {
        ++reconnects_;
        backoff_ = options_.backoff_initial;
      } else {
        backoff_ = std::min(backoff_ * 2.0, options_.backoff_cap);
      }
      continue;
    }

    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc <= 0) continue;
    std::uint8_t buf[4096];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n <= 0) {
      ::close(fd_);
      fd_ = -1;  // dropped; reconnect path takes over
      continue;
    }
    decoder_.push(buf, static_cast<std::size_t>(n));
  }
}

double CorrectionClient::correction_age(double t) const {
  return t - last_usable_t_;
}

std::size_t CorrectionClient::decode_errors() const {
  return decoder_.bad_frames();
}

RunResult run_live_rover(CorrectionClient& client, const ScenarioConfig& cfg,
                         const LiveRunOptions& options) {
  RoverPipeline pipeline(cfg, options.position, options.receiver_id);
  pipeline.set_waypoints(options.waypoints);
  const double dt = cfg.epoch_interval;
  const long n_epochs = static_cast<long>(std::ceil(cfg.duration / dt - 1e-9));
  const double wait_s = options.stream_timeout > 0.0
                            ? options.stream_timeout
                            : std::max(2.0 * dt / options.speed, 0.5);

  RunResult result;
  long next_k = 0;
  while (next_k < n_epochs) {
    std::optional<double> epoch_t;
    const auto msg = client.next_message(wait_s);
    if (msg) {
      pipeline.on_correction(*msg);
      if (const auto* om = std::get_if<ObservationsMsg>(&*msg)) {
        epoch_t = om->t();
      } else {
        continue;  // station coordinates: keep reading
      }
    } else {
      // Stream is stalled: tick the local clock so staleness shows up.
      epoch_t = static_cast<double>(next_k) * dt;
    }

    // Catch up if the stream jumped (or we were slow): every epoch index
    // up to the received one gets solved exactly once.
    const long k_target = std::lround(*epoch_t / dt);
    if (k_target < next_k) continue;  // stale/duplicate message
    for (long k = next_k; k <= std::min(k_target, n_epochs - 1); ++k) {
      EpochRecord rec = pipeline.step(static_cast<double>(k) * dt);
      rec.station_under_attack =
          cfg.attack && cfg.attack->active(static_cast<double>(k) * dt);
      result.records.push_back(rec);
      if (options.print_epochs) {
        std::fprintf(stderr, "t=%8.1f  %-6s  n=%2d  ratio=%6.2f\n", rec.t,
                     to_string(rec.status).c_str(), rec.n_sats, rec.ratio);
      }
    }
    next_k = std::min(k_target, n_epochs - 1) + 1;
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

std::size_t run_live_station(CasterServer& caster, const ScenarioConfig& cfg,
                             double speed, const std::atomic<bool>* stop) {
  std::size_t published = 0;
  const auto t0 = Clock::now();
  const double dt = cfg.epoch_interval;

  // The scenario runner does all the work; we pace its frames onto the
  // wire so epoch k leaves at wall time k*dt/speed.
  long k = 0;
  run_scenario(cfg, [&](const std::vector<std::uint8_t>& frame) {
    // Two frames per epoch (coords + observations): pace on the first.
    if (published % 2 == 0) {
      const double due = static_cast<double>(k) * dt / speed;
      const double now = seconds_since(t0);
      if (due > now) {
        std::this_thread::sleep_for(std::chrono::duration<double>(due - now));
      }
      ++k;
    }
    if (stop && stop->load()) return;
    caster.publish(frame);
    ++published;
  });
  caster.finish();
  return published;
}

}  // namespace rtksim
