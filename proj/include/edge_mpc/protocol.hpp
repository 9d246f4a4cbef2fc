#pragma once

// Wire protocol between the plant ("UAV") process and the edge controller.
// A frame is a 4-byte big-endian length followed by a UTF-8 JSON object with
// a "type" field.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "edge_mpc/dynamics.hpp"
#include "edge_mpc/trajectory.hpp"

namespace edge_mpc {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 7501;
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

struct HelloMsg
{
  int protocol_version = kProtocolVersion;
  int horizon = 0;
  double dt = 0.0;
  TrajectorySpec trajectory;
  /// Plant clock value corresponding to trajectory time zero.
  double t0 = 0.0;
};

struct HelloAckMsg
{
  int protocol_version = kProtocolVersion;
};

struct StateMsg
{
  std::uint64_t seq = 0;
  double t_plant = 0.0;
  StateVector x = StateVector::Zero();
  /// Input the plant was applying when the state was sampled.
  std::optional<InputVector> u_applied;
  /// Explicit desired states; when absent the edge samples its trajectory.
  std::vector<StateVector> ref_window;
};

struct CommandMsg
{
  std::uint64_t seq = 0;  // echoes StateMsg::seq
  double t_plant_echo = 0.0;
  double t_edge_in = 0.0;
  double t_edge_out = 0.0;
  InputVector u = InputVector::Zero();
  /// Set when the solver failed and `u` is the previous safe input.
  bool error = false;
};

struct ErrorMsg
{
  std::string reason;
};

using Message = std::variant<HelloMsg, HelloAckMsg, StateMsg, CommandMsg, ErrorMsg>;

bool operator==(const HelloMsg& a, const HelloMsg& b);
bool operator==(const HelloAckMsg& a, const HelloAckMsg& b);
bool operator==(const StateMsg& a, const StateMsg& b);
bool operator==(const CommandMsg& a, const CommandMsg& b);
bool operator==(const ErrorMsg& a, const ErrorMsg& b);

/// Malformed frame, unknown type, or handshake failure; the session must close.
class ProtocolError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const Message& msg);
/// Throws ProtocolError on schema violations.
Message message_from_json(const nlohmann::json& doc);

/// Length-prefixed frame for `msg`.
std::string encode(const Message& msg);

/// Decodes the first frame in `bytes`. Returns std::nullopt when the frame is
/// incomplete; otherwise sets `consumed` to the frame size.
std::optional<Message> decode(std::string_view bytes, std::size_t& consumed);

/// Reassembles frames from arbitrarily segmented reads.
class FrameDecoder
{
public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete message, or std::nullopt if more bytes are needed.
  std::optional<Message> next();
  std::size_t buffered() const { return buffer_.size(); }

private:
  std::string buffer_;
};

}  // namespace edge_mpc
