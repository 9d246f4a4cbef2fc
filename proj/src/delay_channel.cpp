#include "edge_mpc/delay_channel.hpp"

#include <cmath>
#include <limits>

namespace edge_mpc {

namespace {

// Standard normal quantile at 0.9999.
constexpr double kTailQuantileZ = 3.7190164854556804;

double normal_cdf(double z)
{
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double truncated_lognormal_mean(double mu, double sigma, double log_max)
{
  const double upper = normal_cdf((log_max - mu) / sigma);
  if (upper <= 0.0) {
    return std::exp(log_max);
  }
  return std::exp(mu + 0.5 * sigma * sigma) * normal_cdf((log_max - mu - sigma * sigma) / sigma) / upper;
}

}  // namespace

std::string_view to_string(DelayKind kind)
{
  switch (kind) {
  case DelayKind::kConstant: return "constant";
  case DelayKind::kUniform: return "uniform";
  case DelayKind::kTruncatedLognormal: return "truncated-lognormal";
  }
  return "unknown";
}

DelayKind delay_kind_from_string(std::string_view name)
{
  for (auto kind : {DelayKind::kConstant, DelayKind::kUniform, DelayKind::kTruncatedLognormal}) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  throw std::invalid_argument("unknown delay distribution '" + std::string(name) + "'");
}

void DelayModel::validate() const
{
  if (!std::isfinite(mean) || !std::isfinite(max) || mean < 0.0 || mean > max) {
    throw std::invalid_argument("delay model requires 0 <= mean <= max");
  }
}

LognormalFit fit_truncated_lognormal(double mean, double max)
{
  if (!(mean > 0.0 && mean < max)) {
    throw std::invalid_argument("lognormal fit requires 0 < mean < max");
  }
  const double log_ratio = std::log(max / mean);
  const double disc = kTailQuantileZ * kTailQuantileZ - 2.0 * log_ratio;
  LognormalFit fit;
  fit.sigma = disc > 0.0 ? kTailQuantileZ - std::sqrt(disc) : kTailQuantileZ;

  // The truncated mean increases monotonically with mu; bisect for the target.
  const double log_max = std::log(max);
  double lo = std::log(mean) - 0.5 * fit.sigma * fit.sigma - 20.0;
  double hi = log_max + 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (truncated_lognormal_mean(mid, fit.sigma, log_max) < mean) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  fit.mu = 0.5 * (lo + hi);
  return fit;
}

DelaySampler::DelaySampler(DelayModel model) : model_(model), rng_(model.seed)
{
  model_.validate();
  if (model_.kind == DelayKind::kTruncatedLognormal && model_.mean > 0.0 && model_.mean < model_.max) {
    fit_ = fit_truncated_lognormal(model_.mean, model_.max);
  }
}

double DelaySampler::operator()()
{
  switch (model_.kind) {
  case DelayKind::kConstant:
    return model_.mean;
  case DelayKind::kUniform: {
    const double lo = std::max(0.0, 2.0 * model_.mean - model_.max);
    const double hi = std::min(model_.max, 2.0 * model_.mean);
    if (hi <= lo) {
      return model_.mean;
    }
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  case DelayKind::kTruncatedLognormal: {
    if (model_.mean <= 0.0 || model_.mean >= model_.max) {
      return model_.mean;
    }
    std::normal_distribution<double> normal(fit_.mu, fit_.sigma);
    for (;;) {
      const double d = std::exp(normal(rng_));
      if (d <= model_.max) {
        return d;
      }
    }
  }
  }
  return model_.mean;
}

double sample_delay(const DelayModel& model, std::uint64_t index)
{
  DelaySampler sampler(model);
  for (std::uint64_t i = 0; i < index; ++i) {
    sampler();
  }
  return sampler();
}

LedgerRow make_ledger_row(std::uint64_t seq, double d1, double exec, double downlink)
{
  for (double d : {d1, exec, downlink}) {
    if (!(std::isfinite(d) && d >= 0.0)) {
      throw std::invalid_argument("ledger delays must be finite and non-negative");
    }
  }
  LedgerRow row{seq, d1, exec, downlink, 0.0, 0.0};
  row.d2 = d1 + exec;
  row.d3 = row.d2 + downlink;
  return row;
}

const LedgerRow& DelayLedger::record(std::uint64_t seq, double d1, double exec, double downlink)
{
  rows_.push_back(make_ledger_row(seq, d1, exec, downlink));
  return rows_.back();
}

}  // namespace edge_mpc
