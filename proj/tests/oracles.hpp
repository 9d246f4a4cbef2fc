#pragma once

// Independent reference computations shared by unit tests and the acceptance binary.

#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "edge_mpc/mpc.hpp"

namespace edge_mpc::oracle {

/// Central finite-difference gradient of the cost with respect to every input component.
inline InputSequence finite_difference_gradient(const VehicleState& x0, const InputSequence& u, const MpcReference& ref,
                                                const MpcProblem& problem, const ControlInput& u_prev, double h)
{
  InputSequence g(3, u.cols());
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    for (int i = 0; i < 3; ++i) {
      InputSequence up = u, down = u;
      up(i, j) += h;
      down(i, j) -= h;
      g(i, j) = (cost(x0, up, ref, problem, u_prev) - cost(x0, down, ref, problem, u_prev)) / (2 * h);
    }
  }
  return g;
}

inline double relative_error(const InputSequence& got, const InputSequence& want)
{
  return (got - want).norm() / std::max(want.norm(), 1e-8);
}

/// Random problem instance around a hover-like operating point.
struct Instance
{
  MpcProblem problem;
  VehicleState x0;
  MpcReference ref;
  ControlInput u_prev;
  InputSequence u;
};

inline Instance random_instance(std::mt19937_64& rng, int horizon)
{
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  Instance in;
  in.problem.config.horizon = horizon;
  in.problem.config.dt = 0.02 + 0.03 * pos(rng);
  in.problem.params.damping = {0.05 + 0.2 * pos(rng), 0.05 + 0.2 * pos(rng), 0.05 + 0.2 * pos(rng)};
  in.problem.params.tau_phi = 0.3 + 0.4 * pos(rng);
  in.problem.params.tau_theta = 0.3 + 0.4 * pos(rng);

  // Random PSD weights built as L * L^T.
  Eigen::Matrix<double, 8, 8> lx;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      lx(r, c) = unit(rng);
    }
  }
  Eigen::Matrix3d lu, ldu;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      lu(r, c) = unit(rng);
      ldu(r, c) = unit(rng);
    }
  }
  in.problem.weights.q_x = lx * lx.transpose();
  in.problem.weights.q_u = lu * lu.transpose();
  in.problem.weights.q_du = ldu * ldu.transpose();

  in.x0.p = {unit(rng), unit(rng), 2 + unit(rng)};
  in.x0.v = {unit(rng), unit(rng), unit(rng)};
  in.x0.phi = 0.3 * unit(rng);
  in.x0.theta = 0.3 * unit(rng);
  in.ref.u_d = hover_input(in.problem.params).to_vector();
  for (int j = 0; j < horizon; ++j) {
    StateVector xd = StateVector::Zero();
    xd.head<3>() = Eigen::Vector3d(unit(rng), unit(rng), 2 + unit(rng));
    xd.segment<3>(kVx) = Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
    in.ref.x_d.push_back(xd);
  }
  in.u_prev = {9.81 + 2 * unit(rng), 0.3 * unit(rng), 0.3 * unit(rng)};
  in.u.resize(3, horizon);
  for (int j = 0; j < horizon; ++j) {
    in.u.col(j) = InputVector(9.81 + 3 * unit(rng), 0.35 * unit(rng), 0.35 * unit(rng));
  }
  return in;
}

/// Exhaustive search over `levels` evenly spaced values per input component on
/// an N = 2 problem with diagonal weights.
///
/// The second input acts on x2 only through thrust (velocity), phi_d (phi) and
/// theta_d (theta) separately, so for each first input the best second input is
/// found one component at a time. This equals the full levels^6 enumeration.
inline double grid_search_n2(const VehicleState& x0, const MpcReference& ref, const MpcProblem& problem,
                             const ControlInput& u_prev, int levels)
{
  const auto& lo = problem.config.bounds.lo;
  const auto& hi = problem.config.bounds.hi;
  auto level = [&](int comp, int i) { return lo(comp) + (hi(comp) - lo(comp)) * i / (levels - 1); };

  const auto& w = problem.weights;
  const double dt = problem.config.dt;
  const auto& p = problem.params;
  const StateVector xd1 = ref.at(0), xd2 = ref.at(1);
  const InputVector ud = ref.u_d;
  const InputVector u0 = u_prev.to_vector();

  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < levels; ++a) {
    for (int b = 0; b < levels; ++b) {
      for (int c = 0; c < levels; ++c) {
        const InputVector u1(level(0, a), level(1, b), level(2, c));
        const StateVector x1 = euler_step_vec(x0.to_vector(), u1, p, dt);
        const StateVector e1 = xd1 - x1;
        const InputVector eu1 = ud - u1, du1 = u1 - u0;
        double j1 = e1.dot(w.q_x * e1) + eu1.dot(w.q_u * eu1) + du1.dot(w.q_du * du1);

        // Terms of x2 that do not depend on u2.
        StateVector x2_base = x1 + dt * derivative_vec(x1, ud, p);
        double fixed = 0.0;
        for (int i = kPx; i <= kPz; ++i) {
          fixed += w.q_x(i, i) * std::pow(xd2(i) - x2_base(i), 2);
        }

        std::array<double, 3> best_comp{};
        for (int comp = 0; comp < 3; ++comp) {
          best_comp[static_cast<std::size_t>(comp)] = std::numeric_limits<double>::infinity();
          for (int k = 0; k < levels; ++k) {
            InputVector u2 = ud;
            u2(comp) = level(comp, k);
            const StateVector x2 = x1 + dt * derivative_vec(x1, u2, p);
            double term = 0.0;
            if (comp == kThrust) {
              for (int i = kVx; i <= kVz; ++i) {
                term += w.q_x(i, i) * std::pow(xd2(i) - x2(i), 2);
              }
            } else {
              const int s = comp == kPhiCmd ? kPhi : kTheta;
              term += w.q_x(s, s) * std::pow(xd2(s) - x2(s), 2);
            }
            const double v = u2(comp);
            term += w.q_u(comp, comp) * std::pow(ud(comp) - v, 2) + w.q_du(comp, comp) * std::pow(v - u1(comp), 2);
            best_comp[static_cast<std::size_t>(comp)] = std::min(best_comp[static_cast<std::size_t>(comp)], term);
          }
        }
        j1 += fixed + best_comp[0] + best_comp[1] + best_comp[2];
        best = std::min(best, j1);
      }
    }
  }
  return best;
}

/// Plain enumeration over levels^(3N) input sequences; only practical for tiny grids.
inline double grid_search_naive(const VehicleState& x0, const MpcReference& ref, const MpcProblem& problem,
                                const ControlInput& u_prev, int levels)
{
  const int n = problem.config.horizon;
  const auto& lo = problem.config.bounds.lo;
  const auto& hi = problem.config.bounds.hi;
  const int vars = 3 * n;
  long total = 1;
  for (int i = 0; i < vars; ++i) {
    total *= levels;
  }
  double best = std::numeric_limits<double>::infinity();
  InputSequence u(3, n);
  for (long idx = 0; idx < total; ++idx) {
    long rest = idx;
    for (int v = 0; v < vars; ++v) {
      const int comp = v % 3;
      const int k = static_cast<int>(rest % levels);
      rest /= levels;
      u(comp, v / 3) = lo(comp) + (hi(comp) - lo(comp)) * k / (levels - 1);
    }
    best = std::min(best, cost(x0, u, ref, problem, u_prev));
  }
  return best;
}

/// Random N = 2 instance with diagonal weights and coarse bounds for the grid oracle.
inline Instance random_grid_instance(std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Instance in;
  in.problem.config.horizon = 2;
  in.problem.config.dt = 0.1;
  in.problem.config.bounds.lo = {5.0, -0.4, -0.4};
  in.problem.config.bounds.hi = {15.0, 0.4, 0.4};
  in.problem.config.step_size = 1e-2;
  in.problem.config.max_iterations = 20000;
  in.problem.config.gradient_tolerance = 1e-9;
  in.x0.p = {0.3 * unit(rng), 0.3 * unit(rng), 2 + 0.3 * unit(rng)};
  in.x0.v = {unit(rng), unit(rng), unit(rng)};
  in.x0.phi = 0.2 * unit(rng);
  in.x0.theta = 0.2 * unit(rng);
  in.ref.u_d = hover_input(in.problem.params).to_vector();
  for (int j = 0; j < 2; ++j) {
    StateVector xd = StateVector::Zero();
    xd.head<3>() = Eigen::Vector3d(0.3 * unit(rng), 0.3 * unit(rng), 2 + 0.3 * unit(rng));
    xd.segment<3>(kVx) = Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
    in.ref.x_d.push_back(xd);
  }
  in.u_prev = {9.81 + unit(rng), 0.2 * unit(rng), 0.2 * unit(rng)};
  return in;
}

}  // namespace edge_mpc::oracle
