#pragma once

#include <Eigen/Core>

namespace edge_mpc {

using StateVector = Eigen::Matrix<double, 8, 1>;
using InputVector = Eigen::Vector3d;
using StateJacobian = Eigen::Matrix<double, 8, 8>;
using InputJacobian = Eigen::Matrix<double, 8, 3>;

// State layout inside StateVector: [px, py, pz, vx, vy, vz, phi, theta].
enum StateIndex : int { kPx = 0, kPy, kPz, kVx, kVy, kVz, kPhi, kTheta };
// Input layout inside InputVector: [T, phi_d, theta_d].
enum InputIndex : int { kThrust = 0, kPhiCmd, kThetaCmd };

/// World-frame vehicle state. Angles are kept in [-pi, pi].
struct VehicleState
{
  Eigen::Vector3d p = Eigen::Vector3d::Zero();  // m
  Eigen::Vector3d v = Eigen::Vector3d::Zero();  // m/s
  double phi = 0.0;                             // roll, rad
  double theta = 0.0;                           // pitch, rad

  StateVector to_vector() const;
  static VehicleState from_vector(const StateVector& x);

  bool operator==(const VehicleState&) const = default;
};

/// Mass-normalized thrust plus desired roll/pitch.
struct ControlInput
{
  double thrust = 0.0;   // m/s^2
  double phi_d = 0.0;    // rad
  double theta_d = 0.0;  // rad

  InputVector to_vector() const { return {thrust, phi_d, theta_d}; }
  static ControlInput from_vector(const InputVector& u) { return {u(0), u(1), u(2)}; }

  bool operator==(const ControlInput&) const = default;
};

struct VehicleParams
{
  double gravity = 9.81;
  Eigen::Vector3d damping{0.1, 0.1, 0.2};  // A_x, A_y, A_z, 1/s
  double k_phi = 1.0;
  double k_theta = 1.0;
  double tau_phi = 0.5;    // s
  double tau_theta = 0.5;  // s

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct StateDerivative
{
  Eigen::Vector3d dp = Eigen::Vector3d::Zero();
  Eigen::Vector3d dv = Eigen::Vector3d::Zero();
  double dphi = 0.0;
  double dtheta = 0.0;

  StateVector to_vector() const;
};

/// Hover input [g, 0, 0] for the given parameters.
ControlInput hover_input(const VehicleParams& params);

/// Wraps an angle into [-pi, pi].
double wrap_angle(double angle);

/// Attitude rotation R_y(theta) * R_x(phi), yaw fixed at zero.
Eigen::Matrix3d attitude_rotation(double phi, double theta);

/// World-frame acceleration produced by mass-normalized thrust T at the given
/// attitude: T * [sin(theta) cos(phi), -sin(phi), cos(theta) cos(phi)].
Eigen::Vector3d thrust_acceleration(double phi, double theta, double thrust);

StateDerivative derivative(const VehicleState& x, const ControlInput& u, const VehicleParams& params);

/// One forward-Euler step of length dt; angles are wrapped afterwards.
VehicleState euler_step(const VehicleState& x, const ControlInput& u, const VehicleParams& params, double dt);

// Vector-form kernels used by the optimizer. No validation; callers own the checks.
StateVector derivative_vec(const StateVector& x, const InputVector& u, const VehicleParams& params);
StateVector euler_step_vec(const StateVector& x, const InputVector& u, const VehicleParams& params, double dt);

/// Jacobians of euler_step_vec with respect to state and input.
void euler_step_jacobians(const StateVector& x, const InputVector& u, const VehicleParams& params, double dt,
                          StateJacobian& a, InputJacobian& b);

}  // namespace edge_mpc
