#include "edge_mpc/mpc.hpp"

#include <cassert>
#include <chrono>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace edge_mpc {

namespace {

void check_psd(const Eigen::MatrixXd& m, const char* name)
{
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(name) + " must be finite");
  }
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    throw std::invalid_argument(std::string(name) + " must be positive semidefinite");
  }
}

void check_problem_inputs(const VehicleState& x0, const InputSequence& u_seq, const MpcReference& ref,
                          const MpcProblem& problem)
{
  const int n = problem.config.horizon;
  if (u_seq.cols() != n) {
    throw std::invalid_argument("input sequence length " + std::to_string(u_seq.cols()) +
                                " does not match horizon " + std::to_string(n));
  }
  if (ref.x_d.size() != 1 && ref.x_d.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("reference must hold 1 or horizon desired states");
  }
  for (const auto& xd : ref.x_d) {
    if (!xd.allFinite()) {
      throw std::invalid_argument("reference states must be finite");
    }
  }
  if (!x0.to_vector().allFinite() || !u_seq.allFinite() || !ref.u_d.allFinite()) {
    throw std::invalid_argument("initial state, inputs and u_d must be finite");
  }
}

}  // namespace

void InputBounds::validate() const
{
  if (!lo.allFinite() || !hi.allFinite()) {
    throw std::invalid_argument("input bounds must be finite");
  }
  if ((lo.array() > hi.array()).any()) {
    throw std::invalid_argument("input bounds require lo <= hi");
  }
  if (lo(kThrust) < 0.0) {
    throw std::invalid_argument("thrust lower bound must be >= 0");
  }
}

void MpcWeights::validate() const
{
  check_psd(q_x, "q_x");
  check_psd(q_u, "q_u");
  check_psd(q_du, "q_du");
}

MpcWeights MpcWeights::zero()
{
  MpcWeights w;
  w.q_x.setZero();
  w.q_u.setZero();
  w.q_du.setZero();
  return w;
}

void MpcConfig::validate() const
{
  if (horizon < 1) {
    throw std::invalid_argument("horizon must be >= 1");
  }
  if (!(std::isfinite(dt) && dt > 0.0)) {
    throw std::invalid_argument("dt must be positive");
  }
  bounds.validate();
  if (max_iterations < 0) {
    throw std::invalid_argument("max_iterations must be >= 0");
  }
  if (!(std::isfinite(step_size) && step_size > 0.0)) {
    throw std::invalid_argument("step_size must be positive");
  }
  if (!(gradient_tolerance >= 0.0)) {
    throw std::invalid_argument("gradient_tolerance must be >= 0");
  }
  if (max_halvings < 0) {
    throw std::invalid_argument("max_halvings must be >= 0");
  }
}

void MpcProblem::validate() const
{
  params.validate();
  config.validate();
  weights.validate();
}

MpcReference MpcReference::hold(const StateVector& x_d, const VehicleParams& params)
{
  return {{x_d}, hover_input(params).to_vector()};
}

StateSequence rollout(const VehicleState& x0, const InputSequence& u_seq, const MpcProblem& problem)
{
  if (u_seq.cols() != problem.config.horizon) {
    throw std::invalid_argument("input sequence length does not match horizon");
  }
  StateSequence xs(8, u_seq.cols());
  StateVector x = x0.to_vector();
  for (Eigen::Index j = 0; j < u_seq.cols(); ++j) {
    x = euler_step_vec(x, u_seq.col(j), problem.params, problem.config.dt);
    xs.col(j) = x;
  }
  return xs;
}

double cost_and_gradient(const VehicleState& x0, const InputSequence& u_seq, const MpcReference& ref,
                         const MpcProblem& problem, const ControlInput& u_prev, InputSequence* gradient)
{
  check_problem_inputs(x0, u_seq, ref, problem);
  const int n = problem.config.horizon;
  const double dt = problem.config.dt;
  const auto& w = problem.weights;
  const InputVector u_before = u_prev.to_vector();

  // xs.col(0) = x0, xs.col(j) = x_{k+j|k}
  StateSequence xs(8, n + 1);
  xs.col(0) = x0.to_vector();
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    xs.col(j + 1) = euler_step_vec(xs.col(j), u_seq.col(j), problem.params, dt);
    const StateVector ex = ref.at(j) - xs.col(j + 1);
    const InputVector eu = ref.u_d - u_seq.col(j);
    const InputVector du = u_seq.col(j) - (j == 0 ? u_before : InputVector(u_seq.col(j - 1)));
    total += ex.dot(w.q_x * ex) + eu.dot(w.q_u * eu) + du.dot(w.q_du * du);
  }

  if (gradient == nullptr) {
    return total;
  }

  const Eigen::Matrix<double, 8, 8> qx_sym = w.q_x + w.q_x.transpose();
  const Eigen::Matrix3d qu_sym = w.q_u + w.q_u.transpose();
  const Eigen::Matrix3d qdu_sym = w.q_du + w.q_du.transpose();

  InputSequence& g = *gradient;
  g.resize(3, n);
  StateJacobian a;
  InputJacobian b;
  // lambda holds dJ/dx_{k+j+1|k} while processing step j.
  StateVector lambda = -qx_sym * (ref.at(n - 1) - xs.col(n));
  for (int j = n - 1; j >= 0; --j) {
    euler_step_jacobians(xs.col(j), u_seq.col(j), problem.params, dt, a, b);
    g.col(j) = b.transpose() * lambda - qu_sym * (ref.u_d - u_seq.col(j));
    const InputVector du = u_seq.col(j) - (j == 0 ? u_before : InputVector(u_seq.col(j - 1)));
    g.col(j) += qdu_sym * du;
    if (j + 1 < n) {
      const InputVector du_next = u_seq.col(j + 1) - u_seq.col(j);
      g.col(j) -= qdu_sym * du_next;
    }
    if (j > 0) {
      lambda = a.transpose() * lambda - qx_sym * (ref.at(j - 1) - xs.col(j));
    }
  }
  return total;
}

double cost(const VehicleState& x0, const InputSequence& u_seq, const MpcReference& ref, const MpcProblem& problem,
            const ControlInput& u_prev)
{
  return cost_and_gradient(x0, u_seq, ref, problem, u_prev, nullptr);
}

InputSequence cost_gradient(const VehicleState& x0, const InputSequence& u_seq, const MpcReference& ref,
                            const MpcProblem& problem, const ControlInput& u_prev)
{
  InputSequence g;
  cost_and_gradient(x0, u_seq, ref, problem, u_prev, &g);
  return g;
}

InputSequence project_inputs(const InputSequence& u_seq, const InputBounds& bounds)
{
  InputSequence out(3, u_seq.cols());
  for (Eigen::Index j = 0; j < u_seq.cols(); ++j) {
    out.col(j) = u_seq.col(j).cwiseMax(bounds.lo).cwiseMin(bounds.hi);
  }
  return out;
}

InputSequence warm_shift(const MpcSolution& prev)
{
  const Eigen::Index n = prev.u_seq.cols();
  InputSequence out(3, n);
  if (n == 0) {
    return out;
  }
  out.leftCols(n - 1) = prev.u_seq.rightCols(n - 1);
  out.col(n - 1) = prev.u_seq.col(n - 1);
  return out;
}

MpcSolver::MpcSolver(MpcProblem problem) : problem_(std::move(problem))
{
  problem_.validate();
}

MpcSolution MpcSolver::solve(const VehicleState& x0, const MpcReference& ref, const ControlInput& u_prev,
                             const std::optional<InputSequence>& warm_start) const
{
  const auto started = std::chrono::steady_clock::now();
  const auto& cfg = problem_.config;
  if (warm_start && warm_start->cols() != cfg.horizon) {
    throw std::invalid_argument("warm start length does not match horizon");
  }

  InputSequence u = warm_start ? *warm_start : InputSequence(ref.u_d.replicate(1, cfg.horizon));
  u = project_inputs(u, cfg.bounds);

  InputSequence grad;
  double j_cur = cost_and_gradient(x0, u, ref, problem_, u_prev, &grad);
  if (!std::isfinite(j_cur)) {
    throw SolverDiverged("non-finite cost at the initial iterate", 0);
  }

  MpcSolution sol;
  sol.initial_cost = j_cur;

  // Convergence is measured on the projected gradient, which vanishes at
  // box-constrained stationary points.
  auto projected_gradient_norm = [&](const InputSequence& uu, const InputSequence& gg) {
    return (uu - project_inputs(uu - gg, cfg.bounds)).norm();
  };

  double gnorm = projected_gradient_norm(u, grad);
  int it = 0;
  for (; it < cfg.max_iterations && gnorm > cfg.gradient_tolerance; ++it) {
    double step = cfg.step_size;
    InputSequence trial = project_inputs(u - step * grad, cfg.bounds);
    double j_trial = cost(x0, trial, ref, problem_, u_prev);
    int halvings = 0;
    while (!(j_trial <= j_cur) && halvings < cfg.max_halvings) {
      step *= 0.5;
      ++halvings;
      trial = project_inputs(u - step * grad, cfg.bounds);
      j_trial = cost(x0, trial, ref, problem_, u_prev);
    }
    if (!std::isfinite(j_trial)) {
      throw SolverDiverged("non-finite cost during projected-gradient iteration", it + 1);
    }
    if (j_trial > j_cur) {
      // No descent along the projected gradient within the halving budget.
      break;
    }
    u = std::move(trial);
    const double j_next = cost_and_gradient(x0, u, ref, problem_, u_prev, &grad);
    assert(j_next <= j_cur);
    j_cur = j_next;
    gnorm = projected_gradient_norm(u, grad);
  }

  sol.u_seq = std::move(u);
  sol.first_input = ControlInput::from_vector(sol.u_seq.col(0));
  sol.cost = j_cur;
  sol.iterations = it;
  sol.gradient_norm = gnorm;
  sol.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return sol;
}

}  // namespace edge_mpc
