#include "edge_mpc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edge_mpc {

std::string_view to_string(TrajectoryKind kind)
{
  switch (kind) {
  case TrajectoryKind::kHover: return "hover";
  case TrajectoryKind::kCircular: return "circular";
  case TrajectoryKind::kSpiral: return "spiral";
  case TrajectoryKind::kHelical: return "helical";
  }
  return "unknown";
}

TrajectoryKind trajectory_kind_from_string(std::string_view name)
{
  for (auto kind : {TrajectoryKind::kHover, TrajectoryKind::kCircular, TrajectoryKind::kSpiral,
                    TrajectoryKind::kHelical}) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  throw std::invalid_argument("unknown trajectory kind '" + std::string(name) + "'");
}

void TrajectorySpec::validate() const
{
  if (!(std::isfinite(radius) && radius >= 0.0)) {
    throw std::invalid_argument("trajectory radius must be >= 0");
  }
  if (!(std::isfinite(duration) && duration > 0.0)) {
    throw std::invalid_argument("trajectory duration must be > 0");
  }
  if (!std::isfinite(angular_rate) || !std::isfinite(climb_rate) || !std::isfinite(radial_rate) ||
      !center.allFinite()) {
    throw std::invalid_argument("trajectory parameters must be finite");
  }
}

ReferencePoint sample(const TrajectorySpec& spec, double t)
{
  if (!(t >= 0.0 && t <= spec.duration)) {
    throw std::invalid_argument("sample time " + std::to_string(t) + " outside [0, duration]");
  }

  ReferencePoint ref;
  ref.t = t;
  Eigen::Vector3d p = spec.center;
  Eigen::Vector3d v = Eigen::Vector3d::Zero();

  if (spec.kind != TrajectoryKind::kHover) {
    const double w = spec.angular_rate;
    const double c = std::cos(w * t), s = std::sin(w * t);
    double r = spec.radius;
    double dr = 0.0;
    if (spec.kind == TrajectoryKind::kSpiral) {
      r += spec.radial_rate * t;
      dr = spec.radial_rate;
    }
    p.x() += r * c;
    p.y() += r * s;
    v.x() = dr * c - r * w * s;
    v.y() = dr * s + r * w * c;
    if (spec.kind == TrajectoryKind::kHelical) {
      p.z() += spec.climb_rate * t;
      v.z() = spec.climb_rate;
    }
  }

  ref.x_d.segment<3>(kPx) = p;
  ref.x_d.segment<3>(kVx) = v;
  return ref;
}

std::vector<ReferencePoint> sample_horizon(const TrajectorySpec& spec, double t, int n, double dt)
{
  if (n < 1 || !(dt > 0.0)) {
    throw std::invalid_argument("horizon needs n >= 1 and dt > 0");
  }
  if (!(t >= 0.0 && t <= spec.duration)) {
    throw std::invalid_argument("horizon start outside [0, duration]");
  }
  std::vector<ReferencePoint> points;
  points.reserve(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) {
    points.push_back(sample(spec, std::min(t + j * dt, spec.duration)));
  }
  return points;
}

VehicleState start_state(const TrajectorySpec& spec)
{
  return VehicleState::from_vector(sample(spec, 0.0).x_d);
}

}  // namespace edge_mpc
