#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace edge_mpc {

enum class DelayKind { kConstant, kUniform, kTruncatedLognormal };

std::string_view to_string(DelayKind kind);
DelayKind delay_kind_from_string(std::string_view name);

struct DelayModel
{
  DelayKind kind = DelayKind::kConstant;
  double mean = 0.0;  // s
  double max = 0.0;   // s
  std::uint64_t seed = 0;

  /// Requires 0 <= mean <= max, finite.
  void validate() const;

  static DelayModel zero() { return {}; }
  static DelayModel constant(double seconds) { return {DelayKind::kConstant, seconds, seconds, 0}; }
};

/// Lognormal location/scale whose truncation to [0, max] has the requested mean.
/// The scale puts the untruncated 0.9999 quantile at max.
struct LognormalFit
{
  double mu = 0.0;
  double sigma = 0.0;
};

LognormalFit fit_truncated_lognormal(double mean, double max);

/// Seeded delay generator; draws are a deterministic function of (model, draw index).
class DelaySampler
{
public:
  explicit DelaySampler(DelayModel model);

  double operator()();
  const DelayModel& model() const { return model_; }

private:
  DelayModel model_;
  std::mt19937_64 rng_;
  LognormalFit fit_;
};

/// One-shot convenience draw: the `index`-th sample of a freshly seeded sampler.
double sample_delay(const DelayModel& model, std::uint64_t index = 0);

class ChannelClosed : public std::runtime_error
{
public:
  ChannelClosed() : std::runtime_error("channel closed") {}
};

template <typename Payload>
struct ChannelMessage
{
  std::uint64_t seq = 0;
  Payload payload{};
  double t_sent = 0.0;
  double t_deliver = 0.0;
  double delay_applied = 0.0;
};

/// Clock-stamped delaying queue. Each send draws a delay and schedules
/// delivery at t_sent + delay; messages may overtake each other. Safe for
/// concurrent senders and a single poller.
template <typename Payload>
class DelayChannel
{
public:
  using Message = ChannelMessage<Payload>;

  explicit DelayChannel(DelayModel model) : draw_(DelaySampler(model)), max_delay_(model.max) {}

  /// Custom delay source; draws must lie in [0, max_delay].
  DelayChannel(std::function<double()> draw, double max_delay) : draw_(std::move(draw)), max_delay_(max_delay) {}

  std::uint64_t send(Payload payload, double t_now)
  {
    std::lock_guard lock(mutex_);
    if (closed_) {
      throw ChannelClosed();
    }
    const double delay = draw_();
    if (!(delay >= 0.0 && delay <= max_delay_)) {
      throw std::logic_error("delay draw " + std::to_string(delay) + " outside [0, max]");
    }
    Message msg;
    msg.seq = ++last_seq_;
    msg.payload = std::move(payload);
    msg.t_sent = t_now;
    msg.delay_applied = delay;
    msg.t_deliver = t_now + delay;
    pending_.push_back(std::move(msg));
    return last_seq_;
  }

  /// Removes and returns every message with t_deliver <= t_now, ordered by
  /// (t_deliver, seq).
  std::vector<Message> poll(double t_now)
  {
    std::lock_guard lock(mutex_);
    auto due = std::stable_partition(pending_.begin(), pending_.end(),
                                     [t_now](const Message& m) { return m.t_deliver > t_now; });
    std::vector<Message> out(std::make_move_iterator(due), std::make_move_iterator(pending_.end()));
    pending_.erase(due, pending_.end());
    std::sort(out.begin(), out.end(), [](const Message& a, const Message& b) {
      return a.t_deliver != b.t_deliver ? a.t_deliver < b.t_deliver : a.seq < b.seq;
    });
    return out;
  }

  void close()
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }

  bool closed() const
  {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  std::size_t pending() const
  {
    std::lock_guard lock(mutex_);
    return pending_.size();
  }

  /// Earliest scheduled delivery, or +inf when empty.
  double next_delivery() const
  {
    std::lock_guard lock(mutex_);
    double t = std::numeric_limits<double>::infinity();
    for (const auto& m : pending_) {
      t = std::min(t, m.t_deliver);
    }
    return t;
  }

private:
  mutable std::mutex mutex_;
  std::function<double()> draw_;
  double max_delay_;
  std::vector<Message> pending_;
  std::uint64_t last_seq_ = 0;
  bool closed_ = false;
};

/// d1: state uplink, exec: controller compute, downlink: command return.
struct LedgerRow
{
  std::uint64_t seq = 0;
  double d1 = 0.0;
  double exec = 0.0;
  double downlink = 0.0;
  double d2 = 0.0;  // d1 + exec
  double d3 = 0.0;  // d2 + downlink
};

LedgerRow make_ledger_row(std::uint64_t seq, double d1, double exec, double downlink);

class DelayLedger
{
public:
  const LedgerRow& record(std::uint64_t seq, double d1, double exec, double downlink);
  const std::vector<LedgerRow>& rows() const { return rows_; }

private:
  std::vector<LedgerRow> rows_;
};

}  // namespace edge_mpc
