#include "edge_mpc/config.hpp"

#include <fstream>
#include <set>
#include <vector>

namespace edge_mpc {

using nlohmann::json;

namespace {

// Reads one JSON object block, tracking which keys were consumed so unknown
// keys can be rejected.
class Block
{
public:
  Block(const json& doc, std::string path) : doc_(doc), path_(std::move(path))
  {
    if (!doc_.is_object()) {
      throw ConfigError(path_, "expected an object");
    }
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return doc_.contains(key); }

  const json& required(const std::string& key)
  {
    if (!doc_.contains(key)) {
      throw ConfigError(key_path(key), "missing required key");
    }
    seen_.insert(key);
    return doc_.at(key);
  }

  const json* optional(const std::string& key)
  {
    if (!doc_.contains(key)) {
      return nullptr;
    }
    seen_.insert(key);
    return &doc_.at(key);
  }

  double number(const std::string& key, double fallback)
  {
    const json* v = optional(key);
    return v ? as_number(*v, key_path(key)) : fallback;
  }

  double required_number(const std::string& key) { return as_number(required(key), key_path(key)); }

  int integer(const std::string& key, int fallback)
  {
    const json* v = optional(key);
    return v ? as_integer(*v, key_path(key)) : fallback;
  }

  int required_integer(const std::string& key) { return as_integer(required(key), key_path(key)); }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback)
  {
    const json* v = optional(key);
    if (!v) {
      return fallback;
    }
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      throw ConfigError(key_path(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  std::string string(const json& v, const std::string& key) const
  {
    if (!v.is_string()) {
      throw ConfigError(key_path(key), "expected a string");
    }
    return v.get<std::string>();
  }

  void finish() const
  {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError(key_path(key), "unknown key");
      }
    }
  }

  static double as_number(const json& v, const std::string& path)
  {
    if (!v.is_number()) {
      throw ConfigError(path, "expected a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      throw ConfigError(path, "expected a finite number");
    }
    return d;
  }

  static int as_integer(const json& v, const std::string& path)
  {
    if (!v.is_number_integer()) {
      throw ConfigError(path, "expected an integer");
    }
    return v.get<int>();
  }

  static std::vector<double> as_vector(const json& v, const std::string& path, std::size_t n)
  {
    if (!v.is_array() || v.size() != n) {
      throw ConfigError(path, "expected an array of " + std::to_string(n) + " numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

// Square weight matrix from either its diagonal or its full row-major nesting.
template <int N>
Eigen::Matrix<double, N, N> weight_matrix(const json& v, const std::string& path)
{
  Eigen::Matrix<double, N, N> m = Eigen::Matrix<double, N, N>::Zero();
  if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
    throw ConfigError(path, "expected " + std::to_string(N) + " diagonal entries or an " + std::to_string(N) + "x" +
                                std::to_string(N) + " matrix");
  }
  if (v[0].is_array()) {
    for (int r = 0; r < N; ++r) {
      const auto row = Block::as_vector(v[static_cast<std::size_t>(r)], path + "[" + std::to_string(r) + "]", N);
      for (int c = 0; c < N; ++c) {
        m(r, c) = row[static_cast<std::size_t>(c)];
      }
    }
  } else {
    const auto diag = Block::as_vector(v, path, N);
    for (int i = 0; i < N; ++i) {
      m(i, i) = diag[static_cast<std::size_t>(i)];
    }
  }
  return m;
}

template <int N>
json matrix_to_json(const Eigen::Matrix<double, N, N>& m)
{
  if (m.isDiagonal(0.0)) {
    json diag = json::array();
    for (int i = 0; i < N; ++i) {
      diag.push_back(m(i, i));
    }
    return diag;
  }
  json rows = json::array();
  for (int r = 0; r < N; ++r) {
    json row = json::array();
    for (int c = 0; c < N; ++c) {
      row.push_back(m(r, c));
    }
    rows.push_back(row);
  }
  return rows;
}

json vec3(const Eigen::Vector3d& v)
{
  return json::array({v.x(), v.y(), v.z()});
}

Eigen::Vector3d read_vec3(const json& v, const std::string& path)
{
  const auto xs = Block::as_vector(v, path, 3);
  return {xs[0], xs[1], xs[2]};
}

VehicleParams vehicle_from_json(const json& doc)
{
  Block b(doc, "vehicle");
  VehicleParams p;
  p.gravity = b.number("gravity", p.gravity);
  if (const json* d = b.optional("damping")) {
    p.damping = read_vec3(*d, "vehicle.damping");
  }
  p.k_phi = b.number("k_phi", p.k_phi);
  p.k_theta = b.number("k_theta", p.k_theta);
  p.tau_phi = b.number("tau_phi", p.tau_phi);
  p.tau_theta = b.number("tau_theta", p.tau_theta);
  b.finish();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("vehicle", e.what());
  }
  return p;
}

MpcConfig mpc_from_json(const json& doc)
{
  Block b(doc, "mpc");
  MpcConfig c;
  c.horizon = b.required_integer("horizon");
  c.dt = b.required_number("dt");
  if (const json* bounds = b.optional("bounds")) {
    Block bb(*bounds, "mpc.bounds");
    const char* names[] = {"thrust", "phi_d", "theta_d"};
    for (int i = 0; i < 3; ++i) {
      if (const json* range = bb.optional(names[i])) {
        const auto lohi = Block::as_vector(*range, bb.key_path(names[i]), 2);
        c.bounds.lo(i) = lohi[0];
        c.bounds.hi(i) = lohi[1];
      }
    }
    bb.finish();
    try {
      c.bounds.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("mpc.bounds", e.what());
    }
  }
  c.max_iterations = b.integer("max_iterations", c.max_iterations);
  c.step_size = b.number("step_size", c.step_size);
  c.gradient_tolerance = b.number("gradient_tolerance", c.gradient_tolerance);
  c.max_halvings = b.integer("max_halvings", c.max_halvings);
  b.finish();
  if (c.horizon < 1) {
    throw ConfigError("mpc.horizon", "must be >= 1");
  }
  if (!(c.dt > 0.0)) {
    throw ConfigError("mpc.dt", "must be > 0");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("mpc", e.what());
  }
  return c;
}

MpcWeights weights_from_json(const json& doc)
{
  Block b(doc, "weights");
  MpcWeights w;
  if (const json* v = b.optional("q_x")) {
    w.q_x = weight_matrix<8>(*v, "weights.q_x");
  }
  if (const json* v = b.optional("q_u")) {
    w.q_u = weight_matrix<3>(*v, "weights.q_u");
  }
  if (const json* v = b.optional("q_du")) {
    w.q_du = weight_matrix<3>(*v, "weights.q_du");
  }
  b.finish();
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("weights", e.what());
  }
  return w;
}

DelayModel delay_from_json(const json& doc, const std::string& path)
{
  Block b(doc, path);
  DelayModel m;
  const json& dist = b.required("distribution");
  try {
    m.kind = delay_kind_from_string(b.string(dist, "distribution"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(b.key_path("distribution"), e.what());
  }
  m.mean = b.required_number("mean");
  m.max = b.number("max", m.mean);
  m.seed = b.seed("seed", 0);
  b.finish();
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return m;
}

json delay_to_json(const DelayModel& m)
{
  return {{"distribution", std::string(to_string(m.kind))}, {"mean", m.mean}, {"max", m.max}, {"seed", m.seed}};
}

}  // namespace

TrajectorySpec trajectory_from_json(const json& block, const std::string& path)
{
  Block b(block, path);
  TrajectorySpec s;
  const json& kind = b.required("kind");
  try {
    s.kind = trajectory_kind_from_string(b.string(kind, "kind"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(b.key_path("kind"), e.what());
  }
  s.radius = b.number("radius", s.radius);
  s.angular_rate = b.number("angular_rate", s.angular_rate);
  if (const json* c = b.optional("center")) {
    s.center = read_vec3(*c, b.key_path("center"));
  }
  s.climb_rate = b.number("climb_rate", s.climb_rate);
  s.radial_rate = b.number("radial_rate", s.radial_rate);
  s.duration = b.number("duration", s.duration);
  b.finish();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return s;
}

json to_json(const TrajectorySpec& s)
{
  return {{"kind", std::string(to_string(s.kind))},
          {"radius", s.radius},
          {"angular_rate", s.angular_rate},
          {"center", vec3(s.center)},
          {"climb_rate", s.climb_rate},
          {"radial_rate", s.radial_rate},
          {"duration", s.duration}};
}

void RunConfig::validate() const
{
  auto wrap = [](const char* path, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
  };
  wrap("vehicle", [&] { vehicle.validate(); });
  wrap("mpc", [&] { mpc.validate(); });
  wrap("weights", [&] { weights.validate(); });
  wrap("trajectory", [&] { trajectory.validate(); });
  wrap("network.uplink", [&] { uplink.validate(); });
  wrap("network.downlink", [&] { downlink.validate(); });
  if (!exec.measured && !(std::isfinite(exec.constant_s) && exec.constant_s >= 0.0)) {
    throw ConfigError("network.exec.seconds", "must be >= 0");
  }
  if (!(std::isfinite(duration) && duration > 0.0)) {
    throw ConfigError("run.duration", "must be > 0");
  }
  if (!(std::isfinite(tolerance) && tolerance > 0.0)) {
    throw ConfigError("run.tolerance", "must be > 0");
  }
  if (!(std::isfinite(transient) && transient >= 0.0)) {
    throw ConfigError("run.transient", "must be >= 0");
  }
  if (plant_substeps < 1) {
    throw ConfigError("run.plant_substeps", "must be >= 1");
  }
}

RunConfig run_config_from_json(const json& doc)
{
  Block root(doc, "");
  RunConfig c;
  c.vehicle = vehicle_from_json(root.required("vehicle"));
  c.mpc = mpc_from_json(root.required("mpc"));
  c.weights = weights_from_json(root.required("weights"));
  c.trajectory = trajectory_from_json(root.required("trajectory"));

  Block net(root.required("network"), "network");
  c.uplink = delay_from_json(net.required("uplink"), "network.uplink");
  c.downlink = delay_from_json(net.required("downlink"), "network.downlink");
  if (const json* exec = net.optional("exec")) {
    Block e(*exec, "network.exec");
    const std::string mode = e.string(e.required("mode"), "mode");
    if (mode == "measured") {
      c.exec = ExecModel::wall_time();
    } else if (mode == "constant") {
      c.exec = ExecModel::constant(e.number("seconds", ExecModel{}.constant_s));
    } else {
      throw ConfigError("network.exec.mode", "expected 'measured' or 'constant'");
    }
    e.finish();
  }
  net.finish();

  Block run(root.required("run"), "run");
  c.duration = run.required_number("duration");
  c.seed = run.seed("seed", c.seed);
  c.tolerance = run.number("tolerance", c.tolerance);
  c.transient = run.number("transient", c.transient);
  c.plant_substeps = run.integer("plant_substeps", c.plant_substeps);
  run.finish();
  root.finish();

  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("", "cannot open config file " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return run_config_from_json(doc);
}

json to_json(const RunConfig& c)
{
  json bounds = {{"thrust", {c.mpc.bounds.lo(0), c.mpc.bounds.hi(0)}},
                 {"phi_d", {c.mpc.bounds.lo(1), c.mpc.bounds.hi(1)}},
                 {"theta_d", {c.mpc.bounds.lo(2), c.mpc.bounds.hi(2)}}};
  json exec = c.exec.measured ? json{{"mode", "measured"}} : json{{"mode", "constant"}, {"seconds", c.exec.constant_s}};
  return {
      {"vehicle",
       {{"gravity", c.vehicle.gravity},
        {"damping", vec3(c.vehicle.damping)},
        {"k_phi", c.vehicle.k_phi},
        {"k_theta", c.vehicle.k_theta},
        {"tau_phi", c.vehicle.tau_phi},
        {"tau_theta", c.vehicle.tau_theta}}},
      {"mpc",
       {{"horizon", c.mpc.horizon},
        {"dt", c.mpc.dt},
        {"bounds", bounds},
        {"max_iterations", c.mpc.max_iterations},
        {"step_size", c.mpc.step_size},
        {"gradient_tolerance", c.mpc.gradient_tolerance},
        {"max_halvings", c.mpc.max_halvings}}},
      {"weights",
       {{"q_x", matrix_to_json<8>(c.weights.q_x)},
        {"q_u", matrix_to_json<3>(c.weights.q_u)},
        {"q_du", matrix_to_json<3>(c.weights.q_du)}}},
      {"trajectory", to_json(c.trajectory)},
      {"network", {{"uplink", delay_to_json(c.uplink)}, {"downlink", delay_to_json(c.downlink)}, {"exec", exec}}},
      {"run",
       {{"duration", c.duration},
        {"seed", c.seed},
        {"tolerance", c.tolerance},
        {"transient", c.transient},
        {"plant_substeps", c.plant_substeps}}},
  };
}

}  // namespace edge_mpc
