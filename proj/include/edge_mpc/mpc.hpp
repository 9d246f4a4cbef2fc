#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "edge_mpc/dynamics.hpp"

namespace edge_mpc {

/// Input sequence, one column per horizon step: column j is u_{k+j+1|k}.
using InputSequence = Eigen::Matrix<double, 3, Eigen::Dynamic>;
/// Predicted states, column j is x_{k+j+1|k}.
using StateSequence = Eigen::Matrix<double, 8, Eigen::Dynamic>;

struct InputBounds
{
  InputVector lo{0.0, -0.4, -0.4};
  InputVector hi{20.0, 0.4, 0.4};

  void validate() const;
};

struct MpcWeights
{
  Eigen::Matrix<double, 8, 8> q_x = Eigen::Matrix<double, 8, 1>{8, 8, 8, 1.5, 1.5, 1.5, 5, 5}.asDiagonal();
  Eigen::Matrix3d q_u = Eigen::Vector3d{2, 10, 10}.asDiagonal();
  Eigen::Matrix3d q_du = Eigen::Vector3d{3, 20, 20}.asDiagonal();

  /// Symmetry to 1e-12 and eigenvalues >= -1e-10, otherwise std::invalid_argument.
  void validate() const;

  static MpcWeights zero();
};

struct MpcConfig
{
  int horizon = 40;
  double dt = 0.02;
  InputBounds bounds;
  int max_iterations = 200;
  double step_size = 1e-3;
  double gradient_tolerance = 1e-3;
  int max_halvings = 20;

  void validate() const;
};

struct MpcProblem
{
  VehicleParams params;
  MpcConfig config;
  MpcWeights weights;

  void validate() const;
};

/// Desired states over the horizon plus the steady-state input.
struct MpcReference
{
  /// Either one state used for every step, or exactly `horizon` states.
  std::vector<StateVector> x_d;
  InputVector u_d = InputVector::Zero();

  const StateVector& at(int j) const { return x_d.size() == 1 ? x_d.front() : x_d[static_cast<std::size_t>(j)]; }

  /// Constant reference holding `x_d` with u_d = [g, 0, 0].
  static MpcReference hold(const StateVector& x_d, const VehicleParams& params);
};

struct MpcSolution
{
  InputSequence u_seq;
  ControlInput first_input;
  double cost = 0.0;
  double initial_cost = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  double solve_time_s = 0.0;
};

/// Thrown when the cost becomes non-finite while iterating.
class SolverDiverged : public std::runtime_error
{
public:
  SolverDiverged(const std::string& what, int history_length)
    : std::runtime_error(what), history_length_(history_length)
  {}

  int history_length() const noexcept { return history_length_; }

private:
  int history_length_;
};

StateSequence rollout(const VehicleState& x0, const InputSequence& u_seq, const MpcProblem& problem);

double cost(const VehicleState& x0, const InputSequence& u_seq, const MpcReference& ref, const MpcProblem& problem,
            const ControlInput& u_prev);

/// Gradient of `cost` with respect to u_seq, by reverse accumulation through the Euler rollout.
InputSequence cost_gradient(const VehicleState& x0, const InputSequence& u_seq, const MpcReference& ref,
                            const MpcProblem& problem, const ControlInput& u_prev);

/// Cost and gradient from a single forward/backward sweep.
double cost_and_gradient(const VehicleState& x0, const InputSequence& u_seq, const MpcReference& ref,
                         const MpcProblem& problem, const ControlInput& u_prev, InputSequence* gradient);

InputSequence project_inputs(const InputSequence& u_seq, const InputBounds& bounds);

/// Drops the first input and repeats the last one.
InputSequence warm_shift(const MpcSolution& prev);

/// Box-constrained projected-gradient MPC solver.
class MpcSolver
{
public:
  explicit MpcSolver(MpcProblem problem);

  const MpcProblem& problem() const { return problem_; }

  /// Solves from `warm_start` if given, otherwise from u_d repeated over the horizon.
  /// `u_prev` anchors the first smoothness term.
  MpcSolution solve(const VehicleState& x0, const MpcReference& ref, const ControlInput& u_prev,
                    const std::optional<InputSequence>& warm_start = std::nullopt) const;

private:
  MpcProblem problem_;
};

}  // namespace edge_mpc
