// edge_mpc: closed-loop quadrotor MPC over a delay-injecting link.
//
// Exit codes:
//   0  success
//   1  run completed but was marked failed (too many flagged steps, or aborted)
//   2  invalid configuration, CSV schema mismatch, or bad command line
//   3  bind/connect failure or lost connection
//   4  protocol version mismatch

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "edge_mpc/config.hpp"
#include "edge_mpc/edge.hpp"
#include "edge_mpc/harness.hpp"
#include "edge_mpc/protocol.hpp"

namespace {

enum ExitCode : int { kOk = 0, kRunFailed = 1, kBadInput = 2, kConnection = 3, kVersion = 4 };

void setup_logging()
{
  auto logger = spdlog::stderr_logger_mt("edge_mpc");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("EDGE_MPC_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") {
      spdlog::warn("ignoring unknown EDGE_MPC_LOG level '{}'", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

std::optional<edge_mpc::RunConfig> load_config(const std::string& path)
{
  try {
    return edge_mpc::load_run_config(path);
  } catch (const edge_mpc::ConfigError& e) {
    std::cerr << "invalid config: " << (e.key_path().empty() ? "<document>" : e.key_path()) << ": " << e.what()
              << "\n";
    return std::nullopt;
  }
}

void print_summary(const edge_mpc::RunSummary& summary)
{
  std::cout << edge_mpc::to_json(summary).dump(2) << "\n";
}

int finish_run(const edge_mpc::RunReport& report, const std::string& out_dir)
{
  if (!out_dir.empty()) {
    try {
      edge_mpc::export_report(report, out_dir);
    } catch (const std::exception& e) {
      std::cerr << "cannot write report: " << e.what() << "\n";
      return kBadInput;
    }
  }
  print_summary(report.summary);
  return report.failed() ? kRunFailed : kOk;
}

std::pair<std::string, std::uint16_t> split_address(const std::string& addr)
{
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    return {addr, edge_mpc::kDefaultPort};
  }
  return {addr.substr(0, colon), static_cast<std::uint16_t>(std::stoul(addr.substr(colon + 1)))};
}

}  // namespace

int main(int argc, char** argv)
{
  setup_logging();

  CLI::App app{"Closed-loop quadrotor MPC with an offloaded edge controller"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run the in-process closed loop on a simulated clock");
  std::string sim_config, sim_out, sim_trajectory;
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--config", sim_config, "Run config (JSON)")->required();
  simulate->add_option("--out", sim_out, "Directory for run.csv and summary.json");
  simulate->add_option("--seed", sim_seed, "Override run.seed");
  simulate->add_option("--trajectory", sim_trajectory, "Override trajectory.kind (hover|circular|spiral|helical)");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the edge controller for one plant session");
  std::string serve_config, serve_host = "127.0.0.1";
  std::uint16_t serve_port = edge_mpc::kDefaultPort;
  int serve_version = edge_mpc::kProtocolVersion;
  serve->add_option("--config", serve_config, "Run config (JSON); mpc, weights and vehicle blocks are used")->required();
  serve->add_option("--port", serve_port, "TCP port")->capture_default_str();
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--protocol-version", serve_version, "Protocol version to speak")->capture_default_str();

  // fly
  auto* fly = app.add_subcommand("fly", "Run the plant against a remote edge controller in wall-clock time");
  std::string fly_config, fly_out, fly_addr = "127.0.0.1:" + std::to_string(edge_mpc::kDefaultPort);
  std::optional<std::uint64_t> fly_seed;
  int fly_version = edge_mpc::kProtocolVersion;
  double fly_timeout = 2.0;
  fly->add_option("--addr", fly_addr, "Edge address host:port")->capture_default_str();
  fly->add_option("--config", fly_config, "Run config (JSON)")->required();
  fly->add_option("--out", fly_out, "Directory for run.csv and summary.json");
  fly->add_option("--seed", fly_seed, "Override run.seed");
  fly->add_option("--connect-timeout", fly_timeout, "Seconds to keep retrying the connection")->capture_default_str();
  fly->add_option("--protocol-version", fly_version, "Protocol version to speak")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Recompute the summary of a run CSV");
  std::string report_in;
  double report_transient = 3.0;
  double report_tolerance = edge_mpc::kDefaultTolerance;
  report->add_option("--in", report_in, "run.csv produced by simulate or fly")->required();
  report->add_option("--transient", report_transient, "Seconds excluded from tolerance accounting")
      ->capture_default_str();
  report->add_option("--tolerance", report_tolerance, "Tolerance recorded in the summary (m)")->capture_default_str();

  // config-check
  auto* check = app.add_subcommand("config-check", "Validate a run config file");
  std::string check_config;
  check->add_option("--config", check_config, "Run config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  if (*simulate) {
    auto config = load_config(sim_config);
    if (!config) {
      return kBadInput;
    }
    if (sim_seed) {
      config->seed = *sim_seed;
    }
    if (!sim_trajectory.empty()) {
      try {
        config->trajectory.kind = edge_mpc::trajectory_kind_from_string(sim_trajectory);
      } catch (const std::invalid_argument& e) {
        std::cerr << "invalid config: trajectory.kind: " << e.what() << "\n";
        return kBadInput;
      }
    }
    return finish_run(edge_mpc::run_closed_loop(*config), sim_out);
  }

  if (*serve) {
    auto config = load_config(serve_config);
    if (!config) {
      return kBadInput;
    }
    edge_mpc::ServeOptions options;
    options.host = serve_host;
    options.port = serve_port;
    options.protocol_version = serve_version;
    try {
      const auto stats = edge_mpc::serve(options, config->problem());
      std::cerr << "session finished: " << stats.states << " states, " << stats.solver_errors << " solver errors\n";
      return kOk;
    } catch (const edge_mpc::VersionMismatch& e) {
      std::cerr << "version mismatch: " << e.what() << "\n";
      return kVersion;
    } catch (const edge_mpc::ProtocolError& e) {
      std::cerr << "protocol error: " << e.what() << "\n";
      return kBadInput;
    } catch (const edge_mpc::ConnectionError& e) {
      std::cerr << "connection error: " << e.what() << "\n";
      return kConnection;
    }
  }

  if (*fly) {
    auto config = load_config(fly_config);
    if (!config) {
      return kBadInput;
    }
    if (fly_seed) {
      config->seed = *fly_seed;
    }
    edge_mpc::FlyOptions options;
    try {
      std::tie(options.host, options.port) = split_address(fly_addr);
    } catch (const std::exception&) {
      std::cerr << "invalid --addr '" << fly_addr << "'\n";
      return kBadInput;
    }
    options.protocol_version = fly_version;
    options.connect_timeout_s = fly_timeout;
    try {
      const auto result = edge_mpc::fly(options, *config);
      const int code = finish_run(result, fly_out);
      return result.aborted ? kConnection : code;
    } catch (const edge_mpc::VersionMismatch& e) {
      std::cerr << "version mismatch: " << e.what() << "\n";
      return kVersion;
    } catch (const edge_mpc::ProtocolError& e) {
      std::cerr << "protocol error: " << e.what() << "\n";
      return kBadInput;
    } catch (const edge_mpc::ConnectionError& e) {
      std::cerr << "connection error: " << e.what() << "\n";
      return kConnection;
    }
  }

  if (*report) {
    std::ifstream in(report_in, std::ios::binary);
    if (!in) {
      std::cerr << "cannot open " << report_in << "\n";
      return kBadInput;
    }
    try {
      const auto rows = edge_mpc::read_csv(in);
      print_summary(edge_mpc::summarize(rows, report_tolerance, report_transient));
      return kOk;
    } catch (const edge_mpc::SchemaError& e) {
      std::cerr << "schema mismatch: " << e.what() << "\n";
      return kBadInput;
    }
  }

  if (*check) {
    if (!load_config(check_config)) {
      return kBadInput;
    }
    std::cout << "ok\n";
    return kOk;
  }
  return kBadInput;
}
