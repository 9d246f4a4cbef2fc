#include "edge_mpc/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace edge_mpc {

namespace {

void require_finite(double value, const char* what)
{
  if (!std::isfinite(value)) {
    throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

void require_finite_state(const VehicleState& x)
{
  if (!x.to_vector().allFinite()) {
    throw std::invalid_argument("vehicle state must be finite");
  }
}

void require_valid_input(const ControlInput& u)
{
  require_finite(u.thrust, "thrust");
  require_finite(u.phi_d, "phi_d");
  require_finite(u.theta_d, "theta_d");
  if (u.thrust < 0.0) {
    throw std::invalid_argument("thrust must be non-negative");
  }
}

}  // namespace

StateVector VehicleState::to_vector() const
{
  StateVector x;
  x << p, v, phi, theta;
  return x;
}

VehicleState VehicleState::from_vector(const StateVector& x)
{
  VehicleState s;
  s.p = x.segment<3>(kPx);
  s.v = x.segment<3>(kVx);
  s.phi = x(kPhi);
  s.theta = x(kTheta);
  return s;
}

StateVector StateDerivative::to_vector() const
{
  StateVector d;
  d << dp, dv, dphi, dtheta;
  return d;
}

void VehicleParams::validate() const
{
  auto positive = [](double value, const char* name) {
    if (!(std::isfinite(value) && value > 0.0)) {
      throw std::invalid_argument(std::string(name) + " must be positive");
    }
  };
  positive(gravity, "gravity");
  positive(k_phi, "k_phi");
  positive(k_theta, "k_theta");
  positive(tau_phi, "tau_phi");
  positive(tau_theta, "tau_theta");
  for (int i = 0; i < 3; ++i) {
    if (!(std::isfinite(damping(i)) && damping(i) >= 0.0)) {
      throw std::invalid_argument("damping must be non-negative");
    }
  }
}

ControlInput hover_input(const VehicleParams& params)
{
  return {params.gravity, 0.0, 0.0};
}

double wrap_angle(double angle)
{
  return std::remainder(angle, 2.0 * std::numbers::pi);
}

Eigen::Matrix3d attitude_rotation(double phi, double theta)
{
  const double cp = std::cos(phi), sp = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);
  Eigen::Matrix3d rx;
  rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
  Eigen::Matrix3d ry;
  ry << ct, 0, st, 0, 1, 0, -st, 0, ct;
  return ry * rx;
}

Eigen::Vector3d thrust_acceleration(double phi, double theta, double thrust)
{
  require_finite(phi, "phi");
  require_finite(theta, "theta");
  require_finite(thrust, "thrust");
  if (thrust < 0.0) {
    throw std::invalid_argument("thrust must be non-negative");
  }
  const double cp = std::cos(phi);
  return thrust * Eigen::Vector3d(std::sin(theta) * cp, -std::sin(phi), std::cos(theta) * cp);
}

StateVector derivative_vec(const StateVector& x, const InputVector& u, const VehicleParams& params)
{
  const double phi = x(kPhi), theta = x(kTheta), thrust = u(kThrust);
  const double cp = std::cos(phi);

  StateVector d;
  d.segment<3>(kPx) = x.segment<3>(kVx);
  d(kVx) = thrust * std::sin(theta) * cp - params.damping(0) * x(kVx);
  d(kVy) = -thrust * std::sin(phi) - params.damping(1) * x(kVy);
  d(kVz) = thrust * std::cos(theta) * cp - params.gravity - params.damping(2) * x(kVz);
  d(kPhi) = (params.k_phi * u(kPhiCmd) - phi) / params.tau_phi;
  d(kTheta) = (params.k_theta * u(kThetaCmd) - theta) / params.tau_theta;
  return d;
}

StateVector euler_step_vec(const StateVector& x, const InputVector& u, const VehicleParams& params, double dt)
{
  StateVector next = x + dt * derivative_vec(x, u, params);
  next(kPhi) = wrap_angle(next(kPhi));
  next(kTheta) = wrap_angle(next(kTheta));
  return next;
}

void euler_step_jacobians(const StateVector& x, const InputVector& u, const VehicleParams& params, double dt,
                          StateJacobian& a, InputJacobian& b)
{
  const double phi = x(kPhi), theta = x(kTheta), thrust = u(kThrust);
  const double cp = std::cos(phi), sp = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);

  a.setIdentity();
  a.block<3, 3>(kPx, kVx).diagonal().setConstant(dt);
  for (int i = 0; i < 3; ++i) {
    a(kVx + i, kVx + i) -= dt * params.damping(i);
  }
  a(kVx, kPhi) = -dt * thrust * st * sp;
  a(kVx, kTheta) = dt * thrust * ct * cp;
  a(kVy, kPhi) = -dt * thrust * cp;
  a(kVz, kPhi) = -dt * thrust * ct * sp;
  a(kVz, kTheta) = -dt * thrust * st * cp;
  a(kPhi, kPhi) -= dt / params.tau_phi;
  a(kTheta, kTheta) -= dt / params.tau_theta;

  b.setZero();
  b(kVx, kThrust) = dt * st * cp;
  b(kVy, kThrust) = -dt * sp;
  b(kVz, kThrust) = dt * ct * cp;
  b(kPhi, kPhiCmd) = dt * params.k_phi / params.tau_phi;
  b(kTheta, kThetaCmd) = dt * params.k_theta / params.tau_theta;
}

StateDerivative derivative(const VehicleState& x, const ControlInput& u, const VehicleParams& params)
{
  require_finite_state(x);
  require_valid_input(u);
  const StateVector d = derivative_vec(x.to_vector(), u.to_vector(), params);
  StateDerivative out;
  out.dp = d.segment<3>(kPx);
  out.dv = d.segment<3>(kVx);
  out.dphi = d(kPhi);
  out.dtheta = d(kTheta);
  return out;
}

VehicleState euler_step(const VehicleState& x, const ControlInput& u, const VehicleParams& params, double dt)
{
  if (!(dt >= 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("dt must be a finite non-negative step");
  }
  require_finite_state(x);
  require_valid_input(u);
  if (dt == 0.0) {
    return x;
  }
  return VehicleState::from_vector(euler_step_vec(x.to_vector(), u.to_vector(), params, dt));
}

}  // namespace edge_mpc
