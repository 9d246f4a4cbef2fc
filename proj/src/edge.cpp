#include "edge_mpc/edge.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include <spdlog/spdlog.h>

#include "edge_mpc/delay_channel.hpp"
#include "edge_mpc/harness.hpp"

namespace edge_mpc {

// ---------------------------------------------------------------------------
// Controller

EdgeController::EdgeController(MpcProblem problem, TrajectorySpec trajectory)
  : solver_(std::move(problem)), trajectory_(std::move(trajectory)),
    safe_input_(hover_input(solver_.problem().params))
{
  trajectory_.validate();
}

EdgeController::Decision EdgeController::decide(const StateMsg& state, double t_ref)
{
  const auto& problem = solver_.problem();
  const int n = problem.config.horizon;

  MpcReference ref;
  ref.u_d = hover_input(problem.params).to_vector();
  if (!state.ref_window.empty()) {
    if (state.ref_window.size() != 1 && state.ref_window.size() != static_cast<std::size_t>(n)) {
      throw ProtocolError("ref_window must hold 1 or horizon states");
    }
    ref.x_d = state.ref_window;
  } else {
    const double t = std::clamp(t_ref, 0.0, trajectory_.duration);
    for (const auto& point : sample_horizon(trajectory_, t, n, problem.config.dt)) {
      ref.x_d.push_back(point.x_d);
    }
  }

  const ControlInput u_prev = state.u_applied ? ControlInput::from_vector(*state.u_applied) : hover_input(problem.params);
  std::optional<InputSequence> warm;
  if (last_) {
    warm = warm_shift(*last_);
  }

  Decision d;
  const auto started = std::chrono::steady_clock::now();
  try {
    MpcSolution sol = solver_.solve(VehicleState::from_vector(state.x), ref, u_prev, warm);
    d.u = sol.first_input;
    d.solve_time_s = sol.solve_time_s;
    safe_input_ = sol.first_input;
    last_ = sol;
    d.solution = std::move(sol);
  } catch (const SolverDiverged& e) {
    spdlog::warn("solver diverged after {} iterations: {}", e.history_length(), e.what());
    d.u = safe_input_;
    d.error = true;
    d.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    last_.reset();
  }
  return d;
}

double monotonic_seconds()
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// Sockets

namespace {

class Socket
{
public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept
  {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }

  void reset()
  {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  void shutdown_write() const
  {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
    }
  }

  void send_all(std::string_view bytes) const
  {
    while (!bytes.empty()) {
      const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw ConnectionError(std::string("send failed: ") + std::strerror(errno));
      }
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  /// Reads some bytes into `decoder`; false on orderly shutdown by the peer.
  bool read_into(FrameDecoder& decoder) const
  {
    char buf[4096];
    for (;;) {
      const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
      if (n < 0 && errno == EINTR) {
        continue;
      }
      if (n < 0) {
        throw ConnectionError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        return false;
      }
      decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
      return true;
    }
  }

private:
  int fd_ = -1;
};

void set_nodelay(int fd)
{
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port)
{
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) {
    return addr;
  }
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw ConnectionError("cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

Socket listen_tcp(const std::string& host, std::uint16_t port, std::uint16_t& bound_port)
{
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s) {
    throw ConnectionError(std::string("socket failed: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(host, port);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw ConnectionError("cannot bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  if (::listen(s.fd(), 1) != 0) {
    throw ConnectionError(std::string("listen failed: ") + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port = ntohs(addr.sin_port);
  return s;
}

Socket connect_tcp(const std::string& host, std::uint16_t port, double timeout_s)
{
  const sockaddr_in addr = resolve(host, port);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  for (;;) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s) {
      throw ConnectionError(std::string("socket failed: ") + std::strerror(errno));
    }
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      set_nodelay(s.fd());
      return s;
    }
    const int err = errno;
    if (std::chrono::steady_clock::now() >= deadline) {
      throw ConnectionError("cannot connect to " + host + ":" + std::to_string(port) + ": " + std::strerror(err));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

/// Blocks until a full message arrives; std::nullopt on orderly close.
std::optional<Message> read_message(const Socket& s, FrameDecoder& decoder)
{
  for (;;) {
    if (auto msg = decoder.next()) {
      return msg;
    }
    if (!s.read_into(decoder)) {
      if (decoder.buffered() > 0) {
        throw ProtocolError("connection closed inside a frame");
      }
      return std::nullopt;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Edge side

SessionStats serve(const ServeOptions& options, const MpcProblem& problem)
{
  std::uint16_t port = 0;
  Socket listener = listen_tcp(options.host, options.port, port);
  spdlog::info("edge listening on {}:{}", options.host, port);
  if (options.on_listening) {
    options.on_listening(port);
  }

  sockaddr_in peer{};
  socklen_t peer_len = sizeof(peer);
  Socket conn(::accept(listener.fd(), reinterpret_cast<sockaddr*>(&peer), &peer_len));
  if (!conn) {
    throw ConnectionError(std::string("accept failed: ") + std::strerror(errno));
  }
  set_nodelay(conn.fd());
  listener.reset();

  FrameDecoder decoder;
  auto reject = [&](const std::string& reason) {
    try {
      conn.send_all(encode(ErrorMsg{reason}));
    } catch (const ConnectionError&) {
    }
  };

  std::optional<Message> first;
  try {
    first = read_message(conn, decoder);
  } catch (const ProtocolError& e) {
    reject(e.what());
    throw;
  }
  if (!first) {
    throw ConnectionError("peer closed before the handshake");
  }
  const auto* hello = std::get_if<HelloMsg>(&*first);
  if (hello == nullptr) {
    reject("expected hello");
    throw ProtocolError("expected hello as the first message");
  }
  if (hello->protocol_version != options.protocol_version) {
    const std::string reason = "protocol version mismatch: peer " + std::to_string(hello->protocol_version) +
                               ", edge " + std::to_string(options.protocol_version);
    reject(reason);
    throw VersionMismatch(reason);
  }
  if (hello->horizon != problem.config.horizon || hello->dt != problem.config.dt) {
    spdlog::warn("plant expects horizon {} / dt {}, edge runs horizon {} / dt {}", hello->horizon, hello->dt,
                 problem.config.horizon, problem.config.dt);
  }
  const double t0 = hello->t0;
  EdgeController controller(problem, hello->trajectory);
  conn.send_all(encode(HelloAckMsg{options.protocol_version}));

  SessionStats stats;
  double last_in = -std::numeric_limits<double>::infinity();
  for (;;) {
    std::optional<Message> msg;
    try {
      msg = read_message(conn, decoder);
    } catch (const ProtocolError& e) {
      reject(e.what());
      throw;
    }
    if (!msg) {
      break;
    }
    const auto* state = std::get_if<StateMsg>(&*msg);
    if (state == nullptr) {
      reject("unexpected message");
      throw ProtocolError("unexpected message type during session");
    }
    ++stats.states;
    CommandMsg cmd;
    cmd.seq = state->seq;
    cmd.t_plant_echo = state->t_plant;
    cmd.t_edge_in = std::max(monotonic_seconds(), last_in);
    const auto decision = controller.decide(*state, cmd.t_edge_in - t0);
    cmd.t_edge_out = std::max(monotonic_seconds(), cmd.t_edge_in);
    last_in = cmd.t_edge_in;
    cmd.u = decision.u.to_vector();
    cmd.error = decision.error;
    stats.solver_errors += decision.error ? 1 : 0;
    conn.send_all(encode(cmd));
    ++stats.commands;
  }
  spdlog::info("session closed after {} states", stats.states);
  return stats;
}

// ---------------------------------------------------------------------------
// Plant side

RunReport fly(const FlyOptions& options, const RunConfig& config)
{
  config.validate();
  Socket sock = connect_tcp(options.host, options.port, options.connect_timeout_s);
  if (options.host != "127.0.0.1" && options.host != "localhost" && options.host != "::1") {
    // d3 and exec are skew-free; the d1/downlink split assumes one clock.
    spdlog::warn("edge at {} may be another host; ledger d1 and downlink are clock-skew-sensitive", options.host);
  }
  const double dt = config.mpc.dt;
  const double plant_dt = dt / config.plant_substeps;
  const auto ticks = static_cast<std::int64_t>(std::llround(config.duration / dt));

  FrameDecoder decoder;
  const double t0 = monotonic_seconds();
  HelloMsg hello;
  hello.protocol_version = options.protocol_version;
  hello.horizon = config.mpc.horizon;
  hello.dt = dt;
  hello.trajectory = config.trajectory;
  hello.t0 = t0;
  sock.send_all(encode(hello));

  const auto reply = read_message(sock, decoder);
  if (!reply) {
    throw ConnectionError("edge closed the connection during the handshake");
  }
  if (const auto* err = std::get_if<ErrorMsg>(&*reply)) {
    if (err->reason.find("version") != std::string::npos) {
      throw VersionMismatch(err->reason);
    }
    throw ProtocolError("edge rejected session: " + err->reason);
  }
  const auto* ack = std::get_if<HelloAckMsg>(&*reply);
  if (ack == nullptr) {
    throw ProtocolError("expected hello-ack");
  }
  if (ack->protocol_version != options.protocol_version) {
    throw VersionMismatch("edge speaks protocol version " + std::to_string(ack->protocol_version));
  }

  DelayModel up = config.uplink;
  up.seed ^= config.seed * 0x9e3779b97f4a7c15ull + 1;
  DelayModel down = config.downlink;
  down.seed ^= config.seed * 0x9e3779b97f4a7c15ull + 2;
  DelayChannel<StateMsg> uplink(up);
  // Commands become visible to the plant after the injected downlink delay.
  DelayChannel<CommandMsg> mailbox(down);

  std::atomic<bool> connection_lost{false};
  std::thread reader([&] {
    try {
      for (;;) {
        auto msg = read_message(sock, decoder);
        if (!msg) {
          break;
        }
        if (const auto* cmd = std::get_if<CommandMsg>(&*msg)) {
          mailbox.send(*cmd, monotonic_seconds());
        } else {
          spdlog::warn("ignoring unexpected message from edge");
        }
      }
    } catch (const std::exception& e) {
      spdlog::error("edge connection lost: {}", e.what());
    }
    connection_lost = true;
  });

  ReportBuilder builder(config);
  VehicleState x = start_state(config.trajectory);
  ControlInput u = hover_input(config.vehicle);
  std::uint64_t applied_seq = 0;
  bool held_error = false;
  LedgerRow held_ledger;
  bool fresh = false;
  bool aborted = false;

  auto flush_uplink = [&](double now) {
    for (const auto& m : uplink.poll(now)) {
      builder.record_uplink(m.payload.seq, m.delay_applied);
      sock.send_all(encode(m.payload));
    }
  };
  auto take_commands = [&](double now) {
    for (const auto& m : mailbox.poll(now)) {
      builder.record_downlink(m.payload.seq, m.delay_applied);
      if (m.payload.seq <= applied_seq) {
        continue;
      }
      applied_seq = m.payload.seq;
      u = ControlInput::from_vector(m.payload.u);
      held_error = m.payload.error;
      // One-way terms rely on both processes sharing the host monotonic clock.
      held_ledger = make_ledger_row(applied_seq, std::max(0.0, m.payload.t_edge_in - m.payload.t_plant_echo),
                                    std::max(0.0, m.payload.t_edge_out - m.payload.t_edge_in),
                                    std::max(0.0, m.t_deliver - m.payload.t_edge_out));
      fresh = true;
    }
  };

  try {
    for (std::int64_t k = 0; k <= ticks; ++k) {
      const double tick_time = t0 + static_cast<double>(k) * dt;
      for (double now = monotonic_seconds(); now < tick_time; now = monotonic_seconds()) {
        flush_uplink(now);
        take_commands(now);
        std::this_thread::sleep_for(std::chrono::microseconds(200));
      }
      if (connection_lost) {
        aborted = true;
        break;
      }
      const double now = monotonic_seconds();
      StateMsg state;
      state.seq = static_cast<std::uint64_t>(k) + 1;
      state.t_plant = now;
      state.x = x.to_vector();
      state.u_applied = u.to_vector();
      uplink.send(std::move(state), now);
      flush_uplink(now);
      take_commands(now);

      const double exec_ms = 1e3 * held_ledger.exec;
      builder.add(static_cast<double>(k) * dt, x, u, applied_seq, fresh, held_error, held_ledger, fresh ? exec_ms : 0.0);
      if (fresh) {
        builder.report().solve_wall_s.push_back(held_ledger.exec);
      }
      fresh = false;

      if (k < ticks) {
        for (int s = 0; s < config.plant_substeps; ++s) {
          x = euler_step(x, u, config.vehicle, plant_dt);
        }
      }
    }
  } catch (const ConnectionError& e) {
    spdlog::error("aborting run: {}", e.what());
    aborted = true;
  }

  sock.shutdown_write();
  reader.join();
  return builder.finish(aborted);
}

}  // namespace edge_mpc
