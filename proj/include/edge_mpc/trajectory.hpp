#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "edge_mpc/dynamics.hpp"

namespace edge_mpc {

enum class TrajectoryKind { kHover, kCircular, kSpiral, kHelical };

std::string_view to_string(TrajectoryKind kind);
/// Throws std::invalid_argument for unknown names.
TrajectoryKind trajectory_kind_from_string(std::string_view name);

struct TrajectorySpec
{
  TrajectoryKind kind = TrajectoryKind::kCircular;
  double radius = 2.0;        // m
  double angular_rate = 0.4;  // rad/s
  Eigen::Vector3d center{0.0, 0.0, 2.0};
  double climb_rate = 0.05;   // m/s, helical only
  double radial_rate = 0.02;  // m/s, spiral only
  double duration = 60.0;     // s

  void validate() const;
};

struct ReferencePoint
{
  StateVector x_d = StateVector::Zero();
  double t = 0.0;

  Eigen::Vector3d position() const { return x_d.segment<3>(kPx); }
};

/// Reference at time t in [0, duration]. Desired attitude is zero; desired
/// velocity is the exact time derivative of the position curve.
ReferencePoint sample(const TrajectorySpec& spec, double t);

/// Points at t + j*dt for j = 1..n, with times past the duration clamped to it.
std::vector<ReferencePoint> sample_horizon(const TrajectorySpec& spec, double t, int n, double dt);

/// Initial vehicle state resting on the trajectory at t = 0.
VehicleState start_state(const TrajectorySpec& spec);

}  // namespace edge_mpc
