#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "locoplan/geometry.hpp"
#include "locoplan/robot.hpp"

using namespace locoplan;

namespace {

// Independent forward kinematics for one leg: hip roll about x, then a
// two-link planar chain in the leg's sagittal plane. Mirrored legs flip the
// roll sense. The link length is backed out of the nominal stance so the
// model agrees with the params by construction.
Vec3 leg_fk(const RobotParams& rp, int foot, const Vec3& q) {
  const double sy = foot % 2 == 0 ? 1.0 : -1.0;
  const double c_ref = std::cos(rp.q_ref.y()) + std::cos(rp.q_ref.y() + rp.q_ref.z());
  const double l = -rp.p_ref_fl.z() / c_ref;
  const double s2 = std::sin(q.y()), s23 = std::sin(q.y() + q.z());
  const double c2 = std::cos(q.y()), c23 = std::cos(q.y() + q.z());
  const Vec3 v(-(l * s2 + l * s23), 0.0, -(l * c2 + l * c23));
  const double a = sy * q.x();
  Eigen::Matrix3d rx;
  rx << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return rx * v;
}

}  // namespace

TEST_CASE("preset parameter tables") {
  const auto go2 = RobotParams::go2();
  CHECK(go2.mass == doctest::Approx(15.0));
  CHECK(go2.f_max == doctest::Approx(300.0));
  CHECK(go2.v_max == doctest::Approx(5.0));
  CHECK(go2.tau_leg_max.z() == doctest::Approx(45.4));
  CHECK(go2.p_ref_fl.x() == doctest::Approx(0.1805));
  CHECK(go2.inertia.x() == doctest::Approx(0.152));
  CHECK(go2.nominal_height() == doctest::Approx(0.29));

  const auto chotu = RobotParams::chotu();
  CHECK(chotu.mass == doctest::Approx(20.0));
  CHECK(chotu.tau_leg_max.z() == doctest::Approx(33.5));
  CHECK(chotu.p_ref_fl.y() == doctest::Approx(0.210));
  CHECK(chotu.inertia.z() == doctest::Approx(1.107));
  CHECK(chotu.nominal_height() == doctest::Approx(0.30));
}

TEST_CASE("foot offsets mirror the front-left leg") {
  const auto rp = RobotParams::go2();
  const Vec3 fl = rp.foot_offset(0);
  CHECK(fl.x() == doctest::Approx(0.1805));
  CHECK(fl.y() == doctest::Approx(0.1308));
  CHECK(fl.z() == doctest::Approx(-0.29));

  const Vec3 fr = rp.foot_offset(1);
  const Vec3 rl = rp.foot_offset(2);
  const Vec3 rr = rp.foot_offset(3);
  CHECK(fr.x() == doctest::Approx(fl.x()));
  CHECK(fr.y() == doctest::Approx(-fl.y()));
  CHECK(rl.x() == doctest::Approx(-fl.x()));
  CHECK(rl.y() == doctest::Approx(fl.y()));
  CHECK(rr.x() == doctest::Approx(-fl.x()));
  CHECK(rr.y() == doctest::Approx(-fl.y()));
  for (int foot = 0; foot < kNumFeet; ++foot)
    CHECK(rp.foot_offset(foot).z() == doctest::Approx(fl.z()));
}

TEST_CASE("leg jacobian matches finite differences of the fk model") {
  for (const auto& rp : {RobotParams::go2(), RobotParams::chotu()}) {
    for (int foot = 0; foot < kNumFeet; ++foot) {
      const Eigen::Matrix3d J = rp.leg_jacobian(foot);
      const double h = 1e-6;
      for (int k = 0; k < 3; ++k) {
        Vec3 qp = rp.q_ref, qm = rp.q_ref;
        qp(k) += h;
        qm(k) -= h;
        const Vec3 col = (leg_fk(rp, foot, qp) - leg_fk(rp, foot, qm)) / (2 * h);
        for (int r = 0; r < 3; ++r)
          CHECK(J(r, k) == doctest::Approx(col(r)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("jacobian structure at the nominal configuration") {
  const auto rp = RobotParams::go2();
  const Eigen::Matrix3d J = rp.leg_jacobian(0);
  // foot sits under the hip, so the thigh column is purely horizontal
  CHECK(J(0, 1) == doctest::Approx(-0.29));
  CHECK(J(2, 1) == doctest::Approx(0.0).epsilon(1e-12));
  // hip roll cannot move the foot along x
  CHECK(J(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(J(2, 0) == doctest::Approx(0.0).epsilon(1e-12));

  // supporting a quarter of the weight stays well inside the torque box
  const Vec3 f(0, 0, rp.mass * 9.81 / 4.0);
  const Vec3 tau = J.transpose() * f;
  for (int i = 0; i < 3; ++i) CHECK(std::abs(tau(i)) <= rp.tau_leg_max(i));
}
