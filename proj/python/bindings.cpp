#include <cstdlib>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "edge_mpc/config.hpp"
#include "edge_mpc/dynamics.hpp"
#include "edge_mpc/harness.hpp"
#include "edge_mpc/mpc.hpp"
#include "edge_mpc/protocol.hpp"
#include "edge_mpc/trajectory.hpp"

namespace py = pybind11;
using namespace edge_mpc;

namespace {

MpcReference make_reference(const Eigen::MatrixXd& x_d, const MpcProblem& problem)
{
  MpcReference ref;
  ref.u_d = hover_input(problem.params).to_vector();
  if (x_d.rows() != 8) {
    throw std::invalid_argument("x_d must have 8 rows");
  }
  for (Eigen::Index j = 0; j < x_d.cols(); ++j) {
    ref.x_d.push_back(x_d.col(j));
  }
  return ref;
}

InputSequence as_inputs(const Eigen::MatrixXd& u)
{
  if (u.rows() != 3) {
    throw std::invalid_argument("input sequence must have 3 rows");
  }
  return u;
}

py::dict summary_dict(const RunSummary& summary)
{
  auto json = py::module_::import("json");
  return json.attr("loads")(to_json(summary).dump());
}

void configure_logging()
{
  spdlog::set_default_logger(spdlog::stderr_logger_mt("edge_mpc.python"));
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("EDGE_MPC_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

RunConfig parse_config(const std::string& text)
{
  return run_config_from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
  m.doc() = "Quadrotor MPC with a delay-injecting edge link";
  configure_logging();

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);
  py::register_exception<SolverDiverged>(m, "SolverDiverged", PyExc_RuntimeError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  m.attr("DEFAULT_TOLERANCE") = kDefaultTolerance;
  m.attr("PROTOCOL_VERSION") = kProtocolVersion;

  py::class_<VehicleParams>(m, "VehicleParams")
      .def(py::init<>())
      .def_readwrite("gravity", &VehicleParams::gravity)
      .def_readwrite("damping", &VehicleParams::damping)
      .def_readwrite("k_phi", &VehicleParams::k_phi)
      .def_readwrite("k_theta", &VehicleParams::k_theta)
      .def_readwrite("tau_phi", &VehicleParams::tau_phi)
      .def_readwrite("tau_theta", &VehicleParams::tau_theta);

  py::class_<MpcConfig>(m, "MpcConfig")
      .def(py::init<>())
      .def_readwrite("horizon", &MpcConfig::horizon)
      .def_readwrite("dt", &MpcConfig::dt)
      .def_property(
          "bounds_lo", [](const MpcConfig& c) { return c.bounds.lo; },
          [](MpcConfig& c, const InputVector& lo) { c.bounds.lo = lo; })
      .def_property(
          "bounds_hi", [](const MpcConfig& c) { return c.bounds.hi; },
          [](MpcConfig& c, const InputVector& hi) { c.bounds.hi = hi; })
      .def_readwrite("max_iterations", &MpcConfig::max_iterations)
      .def_readwrite("step_size", &MpcConfig::step_size)
      .def_readwrite("gradient_tolerance", &MpcConfig::gradient_tolerance)
      .def_readwrite("max_halvings", &MpcConfig::max_halvings);

  py::class_<MpcWeights>(m, "MpcWeights")
      .def(py::init<>())
      .def_readwrite("q_x", &MpcWeights::q_x)
      .def_readwrite("q_u", &MpcWeights::q_u)
      .def_readwrite("q_du", &MpcWeights::q_du)
      .def_static("zero", &MpcWeights::zero);

  py::class_<MpcProblem>(m, "MpcProblem")
      .def(py::init<>())
      .def_readwrite("params", &MpcProblem::params)
      .def_readwrite("config", &MpcProblem::config)
      .def_readwrite("weights", &MpcProblem::weights)
      .def("validate", &MpcProblem::validate);

  py::enum_<TrajectoryKind>(m, "TrajectoryKind")
      .value("hover", TrajectoryKind::kHover)
      .value("circular", TrajectoryKind::kCircular)
      .value("spiral", TrajectoryKind::kSpiral)
      .value("helical", TrajectoryKind::kHelical);

  py::class_<TrajectorySpec>(m, "TrajectorySpec")
      .def(py::init<>())
      .def(py::init([](const std::string& kind) {
             TrajectorySpec s;
             s.kind = trajectory_kind_from_string(kind);
             return s;
           }),
           py::arg("kind"))
      .def_readwrite("kind", &TrajectorySpec::kind)
      .def_readwrite("radius", &TrajectorySpec::radius)
      .def_readwrite("angular_rate", &TrajectorySpec::angular_rate)
      .def_readwrite("center", &TrajectorySpec::center)
      .def_readwrite("climb_rate", &TrajectorySpec::climb_rate)
      .def_readwrite("radial_rate", &TrajectorySpec::radial_rate)
      .def_readwrite("duration", &TrajectorySpec::duration);

  m.def("thrust_acceleration", &thrust_acceleration, py::arg("phi"), py::arg("theta"), py::arg("thrust"),
        "World-frame acceleration of mass-normalized thrust at the given attitude.");

  m.def(
      "derivative",
      [](const StateVector& x, const InputVector& u, const VehicleParams& params) {
        return derivative(VehicleState::from_vector(x), ControlInput::from_vector(u), params).to_vector();
      },
      py::arg("x"), py::arg("u"), py::arg("params") = VehicleParams{},
      "Time derivative of the 8-state [p, v, phi, theta] under input [T, phi_d, theta_d].");

  m.def(
      "euler_step",
      [](const StateVector& x, const InputVector& u, double dt, const VehicleParams& params) {
        return euler_step(VehicleState::from_vector(x), ControlInput::from_vector(u), params, dt).to_vector();
      },
      py::arg("x"), py::arg("u"), py::arg("dt"), py::arg("params") = VehicleParams{});

  m.def(
      "rollout",
      [](const StateVector& x0, const Eigen::MatrixXd& u_seq, const MpcProblem& problem) -> Eigen::MatrixXd {
        return rollout(VehicleState::from_vector(x0), as_inputs(u_seq), problem);
      },
      py::arg("x0"), py::arg("u_seq"), py::arg("problem"), "Predicted states, one column per horizon step.");

  m.def(
      "cost",
      [](const StateVector& x0, const Eigen::MatrixXd& u_seq, const Eigen::MatrixXd& x_d, const MpcProblem& problem,
         const InputVector& u_prev) {
        return cost(VehicleState::from_vector(x0), as_inputs(u_seq), make_reference(x_d, problem), problem,
                    ControlInput::from_vector(u_prev));
      },
      py::arg("x0"), py::arg("u_seq"), py::arg("x_d"), py::arg("problem"), py::arg("u_prev"));

  m.def(
      "cost_gradient",
      [](const StateVector& x0, const Eigen::MatrixXd& u_seq, const Eigen::MatrixXd& x_d, const MpcProblem& problem,
         const InputVector& u_prev) -> Eigen::MatrixXd {
        return cost_gradient(VehicleState::from_vector(x0), as_inputs(u_seq), make_reference(x_d, problem), problem,
                             ControlInput::from_vector(u_prev));
      },
      py::arg("x0"), py::arg("u_seq"), py::arg("x_d"), py::arg("problem"), py::arg("u_prev"));

  m.def(
      "solve",
      [](const StateVector& x0, const Eigen::MatrixXd& x_d, const MpcProblem& problem, const InputVector& u_prev,
         const std::optional<Eigen::MatrixXd>& warm_start) {
        std::optional<InputSequence> warm;
        if (warm_start) {
          warm = as_inputs(*warm_start);
        }
        const MpcSolution sol = MpcSolver(problem).solve(VehicleState::from_vector(x0), make_reference(x_d, problem),
                                                         ControlInput::from_vector(u_prev), warm);
        py::dict out;
        out["u_seq"] = Eigen::MatrixXd(sol.u_seq);
        out["first_input"] = sol.first_input.to_vector();
        out["cost"] = sol.cost;
        out["initial_cost"] = sol.initial_cost;
        out["iterations"] = sol.iterations;
        out["gradient_norm"] = sol.gradient_norm;
        out["solve_time_s"] = sol.solve_time_s;
        return out;
      },
      py::arg("x0"), py::arg("x_d"), py::arg("problem"), py::arg("u_prev"), py::arg("warm_start") = py::none(),
      "Projected-gradient MPC solve. x_d is 8x1 (held) or 8xN.");

  m.def(
      "sample",
      [](const TrajectorySpec& spec, double t) { return sample(spec, t).x_d; }, py::arg("spec"), py::arg("t"),
      "Desired 8-state on the trajectory at time t.");

  m.def("euclidean_error", &euclidean_error, py::arg("p"), py::arg("ref_p"));

  m.def(
      "encode_json",
      [](const std::string& text) { return py::bytes(encode(message_from_json(nlohmann::json::parse(text)))); },
      py::arg("message_json"), "Length-prefixed frame for a JSON message.");

  m.def(
      "decode_json",
      [](const py::bytes& frame) -> std::optional<std::pair<std::string, std::size_t>> {
        std::size_t consumed = 0;
        auto msg = decode(std::string(frame), consumed);
        if (!msg) {
          return std::nullopt;
        }
        return std::make_pair(to_json(*msg).dump(), consumed);
      },
      py::arg("frame"), "Decodes the first frame: (message JSON, bytes consumed), or None if incomplete.");

  m.def(
      "check_config", [](const std::string& text) { parse_config(text); }, py::arg("config_json"),
      "Raises ConfigError naming the failing key path.");

  m.def(
      "simulate",
      [](const std::string& text, std::optional<std::uint64_t> seed) {
        RunConfig config = parse_config(text);
        if (seed) {
          config.seed = *seed;
        }
        RunReport report;
        {
          py::gil_scoped_release release;
          report = run_closed_loop(config);
        }
        std::ostringstream csv;
        write_csv(csv, report.rows);
        return py::make_tuple(summary_dict(report.summary), csv.str());
      },
      py::arg("config_json"), py::arg("seed") = py::none(),
      "Runs the simulated-clock closed loop; returns (summary dict, CSV text).");

  m.def(
      "report",
      [](const std::string& csv, double tolerance, double transient) {
        std::istringstream in(csv);
        return summary_dict(summarize(read_csv(in), tolerance, transient));
      },
      py::arg("csv"), py::arg("tolerance") = kDefaultTolerance, py::arg("transient") = 3.0);
}
