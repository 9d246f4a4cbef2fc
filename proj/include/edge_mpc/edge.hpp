#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "edge_mpc/config.hpp"
#include "edge_mpc/mpc.hpp"
#include "edge_mpc/protocol.hpp"
#include "edge_mpc/trajectory.hpp"

namespace edge_mpc {

struct RunReport;

/// Receding-horizon controller behind the edge endpoint. Holds the warm
/// start and the last input it considers safe.
class EdgeController
{
public:
  EdgeController(MpcProblem problem, TrajectorySpec trajectory);

  struct Decision
  {
    ControlInput u;
    bool error = false;
    double solve_time_s = 0.0;
    std::optional<MpcSolution> solution;
  };

  /// Solves for `state` against the reference window starting at trajectory
  /// time `t_ref` (or the state's explicit window).
  Decision decide(const StateMsg& state, double t_ref);

  const MpcSolver& solver() const { return solver_; }
  const TrajectorySpec& trajectory() const { return trajectory_; }
  void set_trajectory(const TrajectorySpec& trajectory) { trajectory_ = trajectory; }

private:
  MpcSolver solver_;
  TrajectorySpec trajectory_;
  std::optional<MpcSolution> last_;
  ControlInput safe_input_;
};

/// Seconds on the host's monotonic clock, comparable across processes on the same machine.
double monotonic_seconds();

struct ServeOptions
{
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
  int protocol_version = kProtocolVersion;
  /// Called once the listening socket is bound, with the actual port.
  std::function<void(std::uint16_t)> on_listening;
};

struct SessionStats
{
  std::uint64_t states = 0;
  std::uint64_t commands = 0;
  std::uint64_t solver_errors = 0;
};

/// Version mismatch during the handshake.
class VersionMismatch : public ProtocolError
{
public:
  using ProtocolError::ProtocolError;
};

/// Socket-level failure (bind, connect, lost connection).
class ConnectionError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Accepts one session and serves commands until the peer disconnects.
SessionStats serve(const ServeOptions& options, const MpcProblem& problem);

struct FlyOptions
{
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
  int protocol_version = kProtocolVersion;
  double connect_timeout_s = 2.0;
};

/// Runs the plant in wall-clock time against a remote edge. Uplink and
/// downlink delays from the config are injected on the plant side.
RunReport fly(const FlyOptions& options, const RunConfig& config);

}  // namespace edge_mpc
