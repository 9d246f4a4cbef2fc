#pragma once

// Randomized wire messages for codec property checks.

#include <cmath>
#include <random>
#include <string>

#include "edge_mpc/protocol.hpp"

namespace edge_mpc::testing {

class MessageFactory
{
public:
  explicit MessageFactory(std::uint64_t seed) : rng_(seed) {}

  double number()
  {
    // Mix of ordinary magnitudes and awkward ones.
    switch (pick(6)) {
      case 0:
        return 0.0;
      case 1:
        return std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
      case 2:
        return std::ldexp(std::uniform_real_distribution<double>(-1.0, 1.0)(rng_), pick(2000) - 1000);
      case 3:
        return -0.0;
      default:
        return std::uniform_real_distribution<double>(-1e4, 1e4)(rng_);
    }
  }

  std::uint64_t seq() { return pick(2) == 0 ? std::uniform_int_distribution<std::uint64_t>()(rng_) : pick(100000); }

  std::string text()
  {
    static const char* pieces[] = {"a", "Z", " ", "\"", "\\", "\n", "\t", "{", "}", "0", "\xc3\xa9", "\xe2\x82\xac",
                                   "\xf0\x9f\x9a\x81"};
    std::string out;
    const int n = pick(40);
    for (int i = 0; i < n; ++i) {
      out += pieces[pick(static_cast<int>(std::size(pieces)))];
    }
    return out;
  }

  StateVector state()
  {
    StateVector x;
    for (int i = 0; i < 8; ++i) {
      x(i) = number();
    }
    return x;
  }

  HelloMsg hello()
  {
    HelloMsg m;
    m.protocol_version = pick(5);
    m.horizon = 1 + pick(500);
    m.dt = std::abs(number()) + 1e-6;
    m.trajectory.kind = static_cast<TrajectoryKind>(pick(4));
    m.trajectory.radius = std::abs(number());
    m.trajectory.angular_rate = number();
    m.trajectory.center = {number(), number(), number()};
    m.trajectory.climb_rate = number();
    m.trajectory.radial_rate = number();
    m.trajectory.duration = std::abs(number()) + 1.0;
    m.t0 = number();
    return m;
  }

  HelloAckMsg hello_ack() { return {pick(5)}; }

  StateMsg state_msg()
  {
    StateMsg m;
    m.seq = seq();
    m.t_plant = number();
    m.x = state();
    if (pick(2) == 0) {
      m.u_applied = InputVector(number(), number(), number());
    }
    const int window = pick(3) == 0 ? pick(6) : 0;
    for (int i = 0; i < window; ++i) {
      m.ref_window.push_back(state());
    }
    return m;
  }

  CommandMsg command()
  {
    CommandMsg m;
    m.seq = seq();
    m.t_plant_echo = number();
    m.t_edge_in = number();
    m.t_edge_out = number();
    m.u = {number(), number(), number()};
    m.error = pick(2) == 0;
    return m;
  }

  ErrorMsg error() { return {text()}; }

  std::string bytes(int max_len)
  {
    std::string out(static_cast<std::size_t>(pick(max_len + 1)), '\0');
    for (auto& c : out) {
      c = static_cast<char>(pick(256));
    }
    return out;
  }

  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

  std::mt19937_64& rng() { return rng_; }

private:
  std::mt19937_64 rng_;
};

inline bool round_trips(const Message& m)
{
  const std::string frame = encode(m);
  std::size_t consumed = 0;
  const auto back = decode(frame, consumed);
  return back && consumed == frame.size() && *back == m;
}

}  // namespace edge_mpc::testing
