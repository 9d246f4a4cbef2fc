#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edge_mpc/config.hpp"
#include "edge_mpc/delay_channel.hpp"
#include "edge_mpc/dynamics.hpp"

namespace edge_mpc {

/// One closed-loop tick. Ledger fields describe the command being held;
/// `fresh` marks the tick at which it was first applied.
struct StepRow
{
  double t = 0.0;
  StateVector x = StateVector::Zero();
  StateVector ref = StateVector::Zero();
  InputVector u = InputVector::Zero();
  double error = 0.0;
  bool in_tol = false;
  std::uint64_t cmd_seq = 0;
  bool fresh = false;
  bool flagged = false;
  /// Injected transit of this tick's state message, NaN if it never arrived.
  double up_delay = std::numeric_limits<double>::quiet_NaN();
  /// Injected transit of the command answering this tick's state, NaN if none arrived.
  double down_delay = std::numeric_limits<double>::quiet_NaN();
  LedgerRow ledger;
  double solve_ms = 0.0;
};

struct DelayStat
{
  double avg = 0.0;
  double max = 0.0;
};

struct DelayStats
{
  std::size_t samples = 0;
  DelayStat d1, exec, downlink, d2, d3;
};

/// Transit statistics over every message that crossed a link.
struct LinkStats
{
  std::size_t samples = 0;
  double avg = 0.0;
  double max = 0.0;
};

struct RunSummary
{
  std::size_t steps = 0;
  std::size_t steps_after_transient = 0;
  double error_mean = 0.0;
  double error_max = 0.0;
  double pct_within_tolerance = 0.0;  // over steps with t >= transient
  std::size_t commands = 0;
  std::size_t flagged_steps = 0;
  bool failed = false;
  DelayStats delays;
  LinkStats uplink;
  LinkStats downlink;
  double solve_ms_mean = 0.0;
  double solve_ms_max = 0.0;
  double tolerance = kDefaultTolerance;
  double transient = 3.0;
};

struct RunReport
{
  std::vector<StepRow> rows;
  RunSummary summary;
  /// Measured solver wall time per solve, in call order. Not exported to CSV.
  std::vector<double> solve_wall_s;
  /// Set when a remote run lost its connection before finishing.
  bool aborted = false;

  bool failed() const { return aborted || summary.failed; }
};

/// CSV column order of an exported run.
const std::vector<std::string>& csv_columns();

double euclidean_error(const Eigen::Vector3d& p, const Eigen::Vector3d& ref_p);

/// Deterministic simulated-clock loop: plant, uplink channel, edge controller, downlink channel.
RunReport run_closed_loop(const RunConfig& config);

/// Mean and max of each ledger column over freshly applied commands.
/// Throws std::invalid_argument when the report holds no commands.
DelayStats delay_stats(const RunReport& report);
DelayStats delay_stats(const std::vector<StepRow>& rows);

RunSummary summarize(const std::vector<StepRow>& rows, double tolerance, double transient);

nlohmann::json to_json(const RunSummary& summary);

/// Schema violation while reading a run CSV.
class SchemaError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

void write_csv(std::ostream& out, const std::vector<StepRow>& rows);
std::vector<StepRow> read_csv(std::istream& in);

/// Writes `run.csv` and `summary.json` into `dir`, creating it if needed.
void export_report(const RunReport& report, const std::filesystem::path& dir);

/// Shared per-tick bookkeeping for the simulated and wall-clock loops.
class ReportBuilder
{
public:
  ReportBuilder(const RunConfig& config);

  void add(double t, const VehicleState& x, const ControlInput& u, std::uint64_t cmd_seq, bool fresh, bool flagged,
           const LedgerRow& ledger, double solve_ms);

  /// Link transit of the state (and the command answering it) with sequence number `seq` = tick + 1.
  void record_uplink(std::uint64_t seq, double delay);
  void record_downlink(std::uint64_t seq, double delay);

  RunReport finish(bool aborted = false);
  RunReport& report() { return report_; }

private:
  const RunConfig& config_;
  RunReport report_;
  std::vector<double> up_delays_;
  std::vector<double> down_delays_;
};

}  // namespace edge_mpc
