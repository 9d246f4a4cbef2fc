#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <future>
#include <set>
#include <thread>

#include <doctest.h>

#include "edge_mpc/edge.hpp"
#include "edge_mpc/harness.hpp"

using namespace edge_mpc;

namespace {

const std::filesystem::path kConfigDir = EDGE_MPC_CONFIG_DIR;

// Starts `serve` on an ephemeral port and returns the port plus the session future.
struct EdgeThread
{
  std::future<SessionStats> session;
  std::uint16_t port = 0;

  EdgeThread(const MpcProblem& problem, int version = kProtocolVersion)
  {
    std::promise<std::uint16_t> bound;
    auto bound_future = bound.get_future();
    ServeOptions options;
    options.port = 0;
    options.protocol_version = version;
    options.on_listening = [p = std::make_shared<std::promise<std::uint16_t>>(std::move(bound))](std::uint16_t port) {
      p->set_value(port);
    };
    session = std::async(std::launch::async, [options, problem] { return serve(options, problem); });
    port = bound_future.get();
  }
};

class RawClient
{
public:
  explicit RawClient(std::uint16_t port)
  {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  }
  ~RawClient() { close(); }

  void close()
  {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  void send(const Message& m)
  {
    const std::string frame = encode(m);
    std::size_t off = 0;
    while (off < frame.size()) {
      const auto n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      REQUIRE(n > 0);
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<Message> receive()
  {
    for (;;) {
      if (auto m = decoder_.next()) {
        return m;
      }
      char buf[4096];
      const auto n = ::recv(fd_, buf, sizeof(buf), 0);
      if (n <= 0) {
        return std::nullopt;
      }
      decoder_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
  }

private:
  int fd_ = -1;
  FrameDecoder decoder_;
};

HelloMsg hover_hello(const MpcProblem& problem)
{
  HelloMsg hello;
  hello.horizon = problem.config.horizon;
  hello.dt = problem.config.dt;
  hello.trajectory.kind = TrajectoryKind::kHover;
  hello.t0 = monotonic_seconds();
  return hello;
}

}  // namespace

TEST_CASE("controller answers the equilibrium with hover thrust")
{
  const MpcProblem problem;
  TrajectorySpec hover;
  hover.kind = TrajectoryKind::kHover;
  EdgeController edge(problem, hover);
  StateMsg state;
  state.seq = 1;
  state.x = start_state(hover).to_vector();
  const auto d = edge.decide(state, 0.0);
  CHECK_FALSE(d.error);
  CHECK((d.u.to_vector() - InputVector(9.81, 0, 0)).norm() <= 1e-3);
}

TEST_CASE("controller falls back to the last safe input on divergence")
{
  const MpcProblem problem;
  TrajectorySpec hover;
  hover.kind = TrajectoryKind::kHover;
  EdgeController edge(problem, hover);
  StateMsg state;
  state.seq = 1;
  state.x = start_state(hover).to_vector();
  state.x(kPx) += 0.5;
  const auto good = edge.decide(state, 0.0);
  REQUIRE_FALSE(good.error);

  state.seq = 2;
  state.x(kPx) = 1e300;
  const auto bad = edge.decide(state, 0.02);
  CHECK(bad.error);
  CHECK(bad.u == good.u);
}

TEST_CASE("handshake and session trace")
{
  MpcProblem problem;
  problem.config.horizon = 20;
  EdgeThread edge(problem);
  RawClient client(edge.port);

  client.send(hover_hello(problem));
  const auto ack = client.receive();
  REQUIRE(ack.has_value());
  REQUIRE(std::holds_alternative<HelloAckMsg>(*ack));
  CHECK(std::get<HelloAckMsg>(*ack).protocol_version == kProtocolVersion);

  std::set<std::uint64_t> sent, echoed;
  double last_in = -1.0, last_out = -1.0;
  VehicleState x;
  x.p = {0, 0, 2};
  for (std::uint64_t seq = 1; seq <= 1000; ++seq) {
    StateMsg state;
    state.seq = seq;
    state.t_plant = monotonic_seconds();
    state.x = x.to_vector();
    client.send(state);
    sent.insert(seq);

    const auto reply = client.receive();
    REQUIRE(reply.has_value());
    REQUIRE(std::holds_alternative<CommandMsg>(*reply));
    const auto& cmd = std::get<CommandMsg>(*reply);
    CHECK(cmd.seq == seq);
    CHECK(echoed.insert(cmd.seq).second);
    CHECK(cmd.t_plant_echo == state.t_plant);
    CHECK(cmd.t_edge_out >= cmd.t_edge_in);
    CHECK(cmd.t_edge_in >= last_in);
    CHECK(cmd.t_edge_out >= last_out);
    const InputBounds bounds;
    CHECK((cmd.u.array() >= bounds.lo.array()).all());
    CHECK((cmd.u.array() <= bounds.hi.array()).all());
    last_in = cmd.t_edge_in;
    last_out = cmd.t_edge_out;
    if (seq == 1) {
      CHECK((cmd.u - InputVector(9.81, 0, 0)).norm() <= 1e-3);
    }
  }
  CHECK(std::includes(sent.begin(), sent.end(), echoed.begin(), echoed.end()));
  client.close();
  const SessionStats stats = edge.session.get();
  CHECK(stats.states == 1000);
  CHECK(stats.commands == 1000);
  CHECK(stats.solver_errors == 0);
}

TEST_CASE("loopback fly against serve on hover")
{
  RunConfig config = load_run_config(kConfigDir / "hover.json");
  config.duration = 2.0;
  EdgeThread edge(config.problem());
  FlyOptions options;
  options.port = edge.port;
  const RunReport report = fly(options, config);
  const SessionStats stats = edge.session.get();

  CHECK_FALSE(report.aborted);
  CHECK_FALSE(report.failed());
  CHECK(report.rows.size() == 101);
  CHECK(report.summary.error_max <= 1e-2);
  REQUIRE(report.summary.commands > 0);
  CHECK(stats.states >= report.summary.commands);

  std::uint64_t last_seq = 0;
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    const auto& row = report.rows[k];
    if (row.fresh) {
      CHECK(row.cmd_seq > last_seq);
      last_seq = row.cmd_seq;
      CHECK(row.ledger.d1 >= 0.0);
      CHECK(row.ledger.d1 <= row.ledger.d2);
      CHECK(row.ledger.d2 <= row.ledger.d3);
    } else if (k > 0) {
      CHECK(row.u == report.rows[k - 1].u);
    }
  }
}

TEST_CASE("version skew is rejected on both ends")
{
  const RunConfig config = load_run_config(kConfigDir / "hover.json");
  EdgeThread edge(config.problem(), kProtocolVersion);
  FlyOptions options;
  options.port = edge.port;
  options.protocol_version = kProtocolVersion + 1;
  CHECK_THROWS_AS(fly(options, config), VersionMismatch);
  CHECK_THROWS_AS(edge.session.get(), VersionMismatch);
}

TEST_CASE("no server is a connection error")
{
  const RunConfig config = load_run_config(kConfigDir / "hover.json");
  std::uint16_t free_port = 0;
  {
    // Bind and release an ephemeral port so nothing is listening on it.
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    free_port = ntohs(addr.sin_port);
    ::close(fd);
  }
  FlyOptions options;
  options.port = free_port;
  options.connect_timeout_s = 0.2;
  CHECK_THROWS_AS(fly(options, config), ConnectionError);
}
