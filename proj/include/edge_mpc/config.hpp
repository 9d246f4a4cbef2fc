#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "edge_mpc/delay_channel.hpp"
#include "edge_mpc/dynamics.hpp"
#include "edge_mpc/mpc.hpp"
#include "edge_mpc/trajectory.hpp"

namespace edge_mpc {

/// Total position tolerance, 0.4 m per axis as printed: sqrt(0.68) m.
inline const double kDefaultTolerance = std::sqrt(0.68);

/// How the simulated clock accounts for controller execution time.
struct ExecModel
{
  bool measured = false;
  double constant_s = 0.0141;

  static ExecModel constant(double seconds) { return {false, seconds}; }
  static ExecModel wall_time() { return {true, 0.0}; }
};

struct RunConfig
{
  VehicleParams vehicle;
  MpcConfig mpc;
  MpcWeights weights;
  TrajectorySpec trajectory;
  DelayModel uplink;
  DelayModel downlink;
  ExecModel exec;
  std::uint64_t seed = 0;
  double duration = 60.0;
  double tolerance = kDefaultTolerance;
  double transient = 3.0;
  int plant_substeps = 1;

  MpcProblem problem() const { return {vehicle, mpc, weights}; }

  /// Throws ConfigError naming the offending key path.
  void validate() const;
};

/// Invalid configuration. `key_path()` names the failing key, e.g. "mpc.horizon".
class ConfigError : public std::runtime_error
{
public:
  ConfigError(std::string key_path, const std::string& message)
    : std::runtime_error(key_path + ": " + message), key_path_(std::move(key_path))
  {}

  const std::string& key_path() const noexcept { return key_path_; }

private:
  std::string key_path_;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

TrajectorySpec trajectory_from_json(const nlohmann::json& block, const std::string& path = "trajectory");
nlohmann::json to_json(const TrajectorySpec& spec);

}  // namespace edge_mpc
