#include "edge_mpc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "edge_mpc/edge.hpp"
#include "edge_mpc/protocol.hpp"
#include "edge_mpc/trajectory.hpp"

namespace edge_mpc {

namespace {

// Distinct, seed-dependent streams for the two links.
std::uint64_t stream_seed(std::uint64_t run_seed, std::uint64_t model_seed, std::uint64_t stream)
{
  std::uint64_t z = run_seed * 0x9e3779b97f4a7c15ull + model_seed * 0xbf58476d1ce4e5b9ull + stream;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string format_number(double v)
{
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_number(std::string_view field, std::size_t line, std::string_view column)
{
  double v = 0.0;
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || end != field.data() + field.size()) {
    throw SchemaError("line " + std::to_string(line) + ": column '" + std::string(column) + "' is not a number");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view field, std::size_t line, std::string_view column)
{
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || end != field.data() + field.size()) {
    throw SchemaError("line " + std::to_string(line) + ": column '" + std::string(column) +
                      "' is not a non-negative integer");
  }
  return v;
}

bool parse_flag(std::string_view field, std::size_t line, std::string_view column)
{
  if (field == "0") {
    return false;
  }
  if (field == "1") {
    return true;
  }
  throw SchemaError("line " + std::to_string(line) + ": column '" + std::string(column) + "' must be 0 or 1");
}

std::vector<std::string_view> split(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) {
      return out;
    }
    start = comma + 1;
  }
}

}  // namespace

const std::vector<std::string>& csv_columns()
{
  static const std::vector<std::string> columns = {
      "t",      "px",     "py",     "pz",      "vx",     "vy",     "vz",        "phi",     "theta",
      "ref_px", "ref_py", "ref_pz", "ref_vx",  "ref_vy", "ref_vz", "ref_phi",   "ref_theta", "T",
      "phi_d",  "theta_d", "error", "in_tol",  "cmd_seq", "fresh", "flagged",   "up_delay", "down_delay", "d1",      "exec",
      "downlink", "d2",   "d3",     "solve_ms"};
  return columns;
}

double euclidean_error(const Eigen::Vector3d& p, const Eigen::Vector3d& ref_p)
{
  return (p - ref_p).norm();
}

DelayStats delay_stats(const std::vector<StepRow>& rows)
{
  DelayStats stats;
  DelayStat* columns[] = {&stats.d1, &stats.exec, &stats.downlink, &stats.d2, &stats.d3};
  double sums[5] = {0, 0, 0, 0, 0};
  for (const auto& row : rows) {
    if (!row.fresh) {
      continue;
    }
    const double values[] = {row.ledger.d1, row.ledger.exec, row.ledger.downlink, row.ledger.d2, row.ledger.d3};
    for (int i = 0; i < 5; ++i) {
      sums[i] += values[i];
      columns[i]->max = stats.samples == 0 ? values[i] : std::max(columns[i]->max, values[i]);
    }
    ++stats.samples;
  }
  if (stats.samples > 0) {
    for (int i = 0; i < 5; ++i) {
      columns[i]->avg = sums[i] / static_cast<double>(stats.samples);
    }
  }
  return stats;
}

DelayStats delay_stats(const RunReport& report)
{
  DelayStats stats = delay_stats(report.rows);
  if (stats.samples == 0) {
    throw std::invalid_argument("report holds no applied commands");
  }
  return stats;
}

namespace {

LinkStats link_stats(const std::vector<StepRow>& rows, double StepRow::*column)
{
  LinkStats stats;
  double sum = 0.0;
  for (const auto& row : rows) {
    const double d = row.*column;
    if (std::isnan(d)) {
      continue;
    }
    sum += d;
    stats.max = stats.samples == 0 ? d : std::max(stats.max, d);
    ++stats.samples;
  }
  if (stats.samples > 0) {
    stats.avg = sum / static_cast<double>(stats.samples);
  }
  return stats;
}

}  // namespace

RunSummary summarize(const std::vector<StepRow>& rows, double tolerance, double transient)
{
  RunSummary s;
  s.tolerance = tolerance;
  s.transient = transient;
  s.steps = rows.size();
  double error_sum = 0.0;
  double solve_sum = 0.0;
  std::size_t within = 0;
  for (const auto& row : rows) {
    error_sum += row.error;
    s.error_max = std::max(s.error_max, row.error);
    if (row.t >= transient) {
      ++s.steps_after_transient;
      within += row.in_tol ? 1 : 0;
    }
    if (row.fresh) {
      ++s.commands;
      solve_sum += row.solve_ms;
      s.solve_ms_max = std::max(s.solve_ms_max, row.solve_ms);
    }
    s.flagged_steps += row.flagged ? 1 : 0;
  }
  if (s.steps > 0) {
    s.error_mean = error_sum / static_cast<double>(s.steps);
  }
  if (s.steps_after_transient > 0) {
    s.pct_within_tolerance = 100.0 * static_cast<double>(within) / static_cast<double>(s.steps_after_transient);
  }
  if (s.commands > 0) {
    s.solve_ms_mean = solve_sum / static_cast<double>(s.commands);
  }
  s.delays = delay_stats(rows);
  s.uplink = link_stats(rows, &StepRow::up_delay);
  s.downlink = link_stats(rows, &StepRow::down_delay);
  s.failed = 10 * s.flagged_steps > s.steps;
  return s;
}

nlohmann::json to_json(const RunSummary& s)
{
  auto stat = [](const DelayStat& d) { return nlohmann::json{{"avg", d.avg}, {"max", d.max}}; };
  auto link = [](const LinkStats& l) { return nlohmann::json{{"samples", l.samples}, {"avg", l.avg}, {"max", l.max}}; };
  return {{"steps", s.steps},
          {"steps_after_transient", s.steps_after_transient},
          {"error_mean", s.error_mean},
          {"error_max", s.error_max},
          {"pct_within_tolerance", s.pct_within_tolerance},
          {"tolerance", s.tolerance},
          {"transient", s.transient},
          {"commands", s.commands},
          {"flagged_steps", s.flagged_steps},
          {"failed", s.failed},
          {"solve_ms_mean", s.solve_ms_mean},
          {"solve_ms_max", s.solve_ms_max},
          {"delays",
           {{"samples", s.delays.samples},
            {"d1", stat(s.delays.d1)},
            {"exec", stat(s.delays.exec)},
            {"downlink", stat(s.delays.downlink)},
            {"d2", stat(s.delays.d2)},
            {"d3", stat(s.delays.d3)}}},
          {"links", {{"uplink", link(s.uplink)}, {"downlink", link(s.downlink)}}}};
}

void write_csv(std::ostream& out, const std::vector<StepRow>& rows)
{
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out << (i ? "," : "") << cols[i];
  }
  out << '\n';
  std::string line;
  for (const auto& r : rows) {
    line.clear();
    auto num = [&line](double v) {
      if (!line.empty()) {
        line += ',';
      }
      line += format_number(v);
    };
    auto integer = [&line](std::uint64_t v) {
      line += ',';
      line += std::to_string(v);
    };
    num(r.t);
    for (int i = 0; i < 8; ++i) num(r.x(i));
    for (int i = 0; i < 8; ++i) num(r.ref(i));
    for (int i = 0; i < 3; ++i) num(r.u(i));
    num(r.error);
    integer(r.in_tol ? 1 : 0);
    integer(r.cmd_seq);
    integer(r.fresh ? 1 : 0);
    integer(r.flagged ? 1 : 0);
    num(r.up_delay);
    num(r.down_delay);
    num(r.ledger.d1);
    num(r.ledger.exec);
    num(r.ledger.downlink);
    num(r.ledger.d2);
    num(r.ledger.d3);
    num(r.solve_ms);
    out << line << '\n';
  }
}

std::vector<StepRow> read_csv(std::istream& in)
{
  const auto& cols = csv_columns();
  std::string line;
  if (!std::getline(in, line)) {
    return {};  // empty file: zero steps
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  const auto header = split(line);
  if (header.size() != cols.size()) {
    throw SchemaError("expected " + std::to_string(cols.size()) + " columns, found " + std::to_string(header.size()));
  }
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (header[i] != cols[i]) {
      throw SchemaError("column " + std::to_string(i) + " is '" + std::string(header[i]) + "', expected '" + cols[i] +
                        "'");
    }
  }

  std::vector<StepRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto f = split(line);
    if (f.size() != cols.size()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) + " fields");
    }
    std::size_t c = 0;
    auto num = [&] { const auto& name = cols[c]; return parse_number(f[c++], lineno, name); };
    StepRow r;
    r.t = num();
    for (int i = 0; i < 8; ++i) r.x(i) = num();
    for (int i = 0; i < 8; ++i) r.ref(i) = num();
    for (int i = 0; i < 3; ++i) r.u(i) = num();
    r.error = num();
    r.in_tol = parse_flag(f[c], lineno, cols[c]);
    ++c;
    r.cmd_seq = parse_unsigned(f[c], lineno, cols[c]);
    ++c;
    r.fresh = parse_flag(f[c], lineno, cols[c]);
    ++c;
    r.flagged = parse_flag(f[c], lineno, cols[c]);
    ++c;
    r.up_delay = num();
    r.down_delay = num();
    r.ledger.seq = r.cmd_seq;
    r.ledger.d1 = num();
    r.ledger.exec = num();
    r.ledger.downlink = num();
    r.ledger.d2 = num();
    r.ledger.d3 = num();
    r.solve_ms = num();
    rows.push_back(r);
  }
  return rows;
}

void export_report(const RunReport& report, const std::filesystem::path& dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw std::filesystem::filesystem_error("cannot create output directory", dir, ec);
  }
  {
    std::ofstream csv(dir / "run.csv", std::ios::binary);
    if (!csv) {
      throw std::filesystem::filesystem_error("cannot write run.csv", dir / "run.csv",
                                              std::make_error_code(std::errc::permission_denied));
    }
    write_csv(csv, report.rows);
    if (!csv) {
      throw std::filesystem::filesystem_error("write failed", dir / "run.csv", std::make_error_code(std::errc::io_error));
    }
  }
  std::ofstream summary(dir / "summary.json", std::ios::binary);
  if (!summary) {
    throw std::filesystem::filesystem_error("cannot write summary.json", dir / "summary.json",
                                            std::make_error_code(std::errc::permission_denied));
  }
  summary << to_json(report.summary).dump(2) << '\n';
}

ReportBuilder::ReportBuilder(const RunConfig& config) : config_(config) {}

void ReportBuilder::add(double t, const VehicleState& x, const ControlInput& u, std::uint64_t cmd_seq, bool fresh,
                        bool flagged, const LedgerRow& ledger, double solve_ms)
{
  StepRow row;
  row.t = t;
  row.x = x.to_vector();
  row.ref = sample(config_.trajectory, std::clamp(t, 0.0, config_.trajectory.duration)).x_d;
  row.u = u.to_vector();
  row.error = euclidean_error(x.p, row.ref.segment<3>(kPx));
  row.in_tol = row.error <= config_.tolerance;
  row.cmd_seq = cmd_seq;
  row.fresh = fresh;
  row.flagged = flagged;
  row.ledger = ledger;
  row.ledger.seq = cmd_seq;
  row.solve_ms = solve_ms;
  report_.rows.push_back(row);
}

void ReportBuilder::record_uplink(std::uint64_t seq, double delay)
{
  if (seq == 0) {
    return;
  }
  if (up_delays_.size() < seq) {
    up_delays_.resize(seq, std::numeric_limits<double>::quiet_NaN());
  }
  up_delays_[seq - 1] = delay;
}

void ReportBuilder::record_downlink(std::uint64_t seq, double delay)
{
  if (seq == 0) {
    return;
  }
  if (down_delays_.size() < seq) {
    down_delays_.resize(seq, std::numeric_limits<double>::quiet_NaN());
  }
  down_delays_[seq - 1] = delay;
}

RunReport ReportBuilder::finish(bool aborted)
{
  for (std::size_t i = 0; i < report_.rows.size(); ++i) {
    if (i < up_delays_.size()) {
      report_.rows[i].up_delay = up_delays_[i];
    }
    if (i < down_delays_.size()) {
      report_.rows[i].down_delay = down_delays_[i];
    }
  }
  report_.aborted = aborted;
  report_.summary = summarize(report_.rows, config_.tolerance, config_.transient);
  return std::move(report_);
}

RunReport run_closed_loop(const RunConfig& config)
{
  config.validate();
  const double dt = config.mpc.dt;
  const double plant_dt = dt / config.plant_substeps;
  const auto ticks = static_cast<std::int64_t>(std::llround(config.duration / dt));

  DelayModel up = config.uplink;
  up.seed = stream_seed(config.seed, up.seed, 1);
  DelayModel down = config.downlink;
  down.seed = stream_seed(config.seed, down.seed, 2);
  DelayChannel<StateMsg> uplink(up);
  DelayChannel<CommandMsg> downlink(down);

  EdgeController edge(config.problem(), config.trajectory);
  ReportBuilder builder(config);

  VehicleState x = start_state(config.trajectory);
  ControlInput u = hover_input(config.vehicle);
  std::uint64_t applied_seq = 0;
  bool held_error = false;
  LedgerRow held_ledger;

  // Edge side: states that reached the edge but were not yet picked up.
  std::vector<ChannelMessage<StateMsg>> inbox;
  double busy_until = -std::numeric_limits<double>::infinity();
  std::uint64_t last_state_seq = 0;
  struct SolveRecord
  {
    std::uint64_t seq;
    double ms;
  };
  std::vector<SolveRecord> solve_log;

  for (std::int64_t k = 0; k <= ticks; ++k) {
    const double t = static_cast<double>(k) * dt;

    StateMsg state;
    state.seq = static_cast<std::uint64_t>(k) + 1;
    state.t_plant = t;
    state.x = x.to_vector();
    state.u_applied = u.to_vector();
    uplink.send(std::move(state), t);

    for (auto& m : uplink.poll(t)) {
      builder.record_uplink(m.payload.seq, m.delay_applied);
      inbox.push_back(std::move(m));
    }
    // The edge serves one state at a time; when several arrived while it was
    // busy, it takes the freshest and drops the rest.
    while (!inbox.empty()) {
      const double start = std::max(busy_until, inbox.front().t_deliver);
      if (start > t) {
        break;
      }
      auto end = std::find_if(inbox.begin(), inbox.end(), [start](const auto& m) { return m.t_deliver > start; });
      auto chosen = std::max_element(inbox.begin(), end,
                                     [](const auto& a, const auto& b) { return a.payload.seq < b.payload.seq; });
      const StateMsg msg = chosen->payload;
      inbox.erase(inbox.begin(), end);
      if (msg.seq <= last_state_seq) {
        continue;
      }
      last_state_seq = msg.seq;

      const auto decision = edge.decide(msg, std::clamp(start, 0.0, config.trajectory.duration));
      const double exec = config.exec.measured ? decision.solve_time_s : config.exec.constant_s;
      builder.report().solve_wall_s.push_back(decision.solve_time_s);
      solve_log.push_back({msg.seq, 1e3 * exec});

      CommandMsg cmd;
      cmd.seq = msg.seq;
      cmd.t_plant_echo = msg.t_plant;
      cmd.t_edge_in = start;
      cmd.t_edge_out = start + exec;
      cmd.u = decision.u.to_vector();
      cmd.error = decision.error;
      downlink.send(cmd, cmd.t_edge_out);
      busy_until = cmd.t_edge_out;
    }

    bool fresh = false;
    double solve_ms = 0.0;
    for (const auto& m : downlink.poll(t)) {
      builder.record_downlink(m.payload.seq, m.delay_applied);
      if (m.payload.seq <= applied_seq) {
        continue;  // stale
      }
      applied_seq = m.payload.seq;
      u = ControlInput::from_vector(m.payload.u);
      held_error = m.payload.error;
      held_ledger = make_ledger_row(applied_seq, m.payload.t_edge_in - m.payload.t_plant_echo,
                                    m.payload.t_edge_out - m.payload.t_edge_in, m.t_deliver - m.payload.t_edge_out);
      fresh = true;
    }
    if (fresh) {
      auto it = std::find_if(solve_log.rbegin(), solve_log.rend(),
                             [applied_seq](const SolveRecord& r) { return r.seq == applied_seq; });
      solve_ms = it != solve_log.rend() ? it->ms : 0.0;
    }

    builder.add(t, x, u, applied_seq, fresh, held_error, held_ledger, solve_ms);

    if (k < ticks) {
      for (int s = 0; s < config.plant_substeps; ++s) {
        x = euler_step(x, u, config.vehicle, plant_dt);
      }
    }
  }

  RunReport report = builder.finish();
  spdlog::info("run finished: {} steps, {:.1f}% within tolerance after {:.1f} s, max error {:.4f} m", report.summary.steps,
               report.summary.pct_within_tolerance, config.transient, report.summary.error_max);
  return report;
}

}  // namespace edge_mpc
