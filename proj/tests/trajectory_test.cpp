#include <cmath>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "edge_mpc/trajectory.hpp"

using namespace edge_mpc;

namespace {

TrajectorySpec spec_of(TrajectoryKind kind)
{
  TrajectorySpec spec;
  spec.kind = kind;
  return spec;
}

}  // namespace

TEST_CASE("sample examples")
{
  SUBCASE("circular phase zero")
  {
    const auto pt = sample(spec_of(TrajectoryKind::kCircular), 0.0);
    CHECK(pt.position() == Eigen::Vector3d(2.0, 0.0, 2.0));
    CHECK(pt.x_d.segment<3>(kVx).isApprox(Eigen::Vector3d(0.0, 0.8, 0.0)));
    CHECK(pt.x_d(kPhi) == 0.0);
    CHECK(pt.x_d(kTheta) == 0.0);
    CHECK(pt.t == 0.0);
  }

  SUBCASE("zero radius stays at the center")
  {
    TrajectorySpec spec = spec_of(TrajectoryKind::kCircular);
    spec.radius = 0.0;
    for (double t = 0.0; t <= spec.duration; t += 0.37) {
      CHECK(sample(spec, t).position() == spec.center);
      CHECK(sample(spec, t).x_d.segment<3>(kVx).isZero(0.0));
    }
  }

  SUBCASE("helical full turn")
  {
    const TrajectorySpec spec = spec_of(TrajectoryKind::kHelical);
    const double period = 2 * M_PI / spec.angular_rate;
    const auto start = sample(spec, 0.0), turn = sample(spec, period);
    CHECK(turn.position().x() == doctest::Approx(start.position().x()).epsilon(1e-12));
    CHECK(std::abs(turn.position().y() - start.position().y()) <= 1e-12);
    CHECK(turn.position().z() == doctest::Approx(2.7853981633974483).epsilon(1e-14));
    CHECK(turn.x_d(kVz) == doctest::Approx(0.05));
  }

  SUBCASE("spiral radius grows")
  {
    const TrajectorySpec spec = spec_of(TrajectoryKind::kSpiral);
    const auto pt = sample(spec, 10.0);
    const double r = (pt.position() - spec.center).norm();
    CHECK(r == doctest::Approx(2.0 + 0.02 * 10.0).epsilon(1e-14));
  }

  SUBCASE("hover is the center at rest")
  {
    const TrajectorySpec spec = spec_of(TrajectoryKind::kHover);
    for (double t : {0.0, 5.0, 60.0}) {
      const auto pt = sample(spec, t);
      CHECK(pt.position() == spec.center);
      CHECK(pt.x_d.tail<5>().isZero(0.0));
    }
  }

  SUBCASE("out of range")
  {
    const TrajectorySpec spec;
    CHECK_THROWS_AS(sample(spec, -1e-9), std::invalid_argument);
    CHECK_THROWS_AS(sample(spec, spec.duration + 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(sample(spec, NAN), std::invalid_argument);
  }
}

TEST_CASE("sample_horizon examples")
{
  SUBCASE("hover gives identical points")
  {
    const auto pts = sample_horizon(spec_of(TrajectoryKind::kHover), 1.0, 10, 0.02);
    REQUIRE(pts.size() == 10);
    for (const auto& p : pts) {
      CHECK(p.x_d == pts.front().x_d);
    }
  }

  SUBCASE("single point is one step ahead")
  {
    const TrajectorySpec spec;
    const auto pts = sample_horizon(spec, 3.0, 1, 0.02);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].x_d == sample(spec, 3.0 + 0.02).x_d);
  }

  SUBCASE("clamped at the end")
  {
    const TrajectorySpec spec = spec_of(TrajectoryKind::kHelical);
    const auto end = sample(spec, spec.duration);
    const auto pts = sample_horizon(spec, spec.duration, 7, 0.02);
    REQUIRE(pts.size() == 7);
    for (const auto& p : pts) {
      CHECK(p.x_d == end.x_d);
      CHECK(p.t == spec.duration);
    }
  }

  SUBCASE("points advance by dt")
  {
    const TrajectorySpec spec;
    const auto pts = sample_horizon(spec, 2.0, 5, 0.1);
    for (int j = 0; j < 5; ++j) {
      CHECK(pts[static_cast<std::size_t>(j)].t == doctest::Approx(2.0 + (j + 1) * 0.1));
    }
  }
}

TEST_CASE("continuity bound")
{
  std::mt19937_64 rng(31);
  for (auto kind : {TrajectoryKind::kCircular, TrajectoryKind::kSpiral, TrajectoryKind::kHelical}) {
    const TrajectorySpec spec = spec_of(kind);
    const double rho = kind == TrajectoryKind::kSpiral ? spec.radial_rate : 0.0;
    const double climb = kind == TrajectoryKind::kHelical ? spec.climb_rate : 0.0;
    const double speed =
        std::abs(spec.radius + rho * spec.duration) * std::abs(spec.angular_rate) + std::abs(rho) + std::abs(climb);
    std::uniform_real_distribution<double> t_dist(0.0, spec.duration - 0.02);
    std::uniform_real_distribution<double> h_dist(0.0, 0.02);
    for (int i = 0; i < 1000; ++i) {
      const double t = t_dist(rng), h = h_dist(rng);
      const double step = (sample(spec, t + h).position() - sample(spec, t).position()).norm();
      CHECK(step <= (speed + 1e-9) * h);
    }
  }
}

TEST_CASE("velocity matches finite differences of position")
{
  const double h = 1e-4;
  for (auto kind : {TrajectoryKind::kCircular, TrajectoryKind::kSpiral, TrajectoryKind::kHelical}) {
    const TrajectorySpec spec = spec_of(kind);
    for (double t = 0.5; t < spec.duration - 1.0; t += 1.3) {
      const Eigen::Vector3d fd = (sample(spec, t + h).position() - sample(spec, t).position()) / h;
      const Eigen::Vector3d v = sample(spec, t).x_d.segment<3>(kVx);
      CHECK((fd - v).norm() <= 0.01 * v.norm());
    }
  }
}

TEST_CASE("circular track is periodic")
{
  const TrajectorySpec spec;
  const double period = 2 * M_PI / spec.angular_rate;
  for (double t = 0.0; t + period <= spec.duration; t += 0.71) {
    CHECK((sample(spec, t).x_d - sample(spec, t + period).x_d).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("start state sits on the trajectory")
{
  for (auto kind : {TrajectoryKind::kHover, TrajectoryKind::kCircular, TrajectoryKind::kSpiral,
                    TrajectoryKind::kHelical}) {
    const TrajectorySpec spec = spec_of(kind);
    const VehicleState x = start_state(spec);
    CHECK(x.to_vector() == sample(spec, 0.0).x_d);
  }
}

TEST_CASE("kind names")
{
  for (auto kind : {TrajectoryKind::kHover, TrajectoryKind::kCircular, TrajectoryKind::kSpiral,
                    TrajectoryKind::kHelical}) {
    CHECK(trajectory_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(trajectory_kind_from_string("figure8"), std::invalid_argument);
}

TEST_CASE("spec validation")
{
  TrajectorySpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.radius = -1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = TrajectorySpec{};
  spec.duration = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = TrajectorySpec{};
  spec.angular_rate = INFINITY;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
