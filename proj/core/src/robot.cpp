#include "locoplan/robot.hpp"

#include <cmath>

namespace locoplan {

Eigen::Vector3d RobotParams::foot_offset(int foot) const {
  const double sx = foot < 2 ? 1.0 : -1.0;       // front vs rear
  const double sy = foot % 2 == 0 ? 1.0 : -1.0;  // left vs right
  return {sx * p_ref_fl.x(), sy * p_ref_fl.y(), p_ref_fl.z()};
}

Eigen::Matrix3d RobotParams::leg_jacobian(int foot) const {
  // Two equal links; length solved so the leg at q_ref reaches p_ref_fl.z()
  // straight below the hip: z = -2 l cos(q2) when q3 = -2 q2.
  const double q2 = q_ref(1), q3 = q_ref(2);
  const double l = -p_ref_fl.z() / (std::cos(q2) + std::cos(q2 + q3));

  const double s2 = std::sin(q2), c2 = std::cos(q2);
  const double s23 = std::sin(q2 + q3), c23 = std::cos(q2 + q3);
  const double vx = -(l * s2 + l * s23);
  const double vz = -(l * c2 + l * c23);

  const double sy = foot % 2 == 0 ? 1.0 : -1.0;
  Eigen::Matrix3d J;
  // columns: d p / d(hip roll), d p / d(hip pitch), d p / d(knee)
  J.col(0) = Eigen::Vector3d(0.0, -vz * sy, 0.0);
  J.col(1) = Eigen::Vector3d(vz, 0.0, -vx);
  J.col(2) = Eigen::Vector3d(-l * c23, 0.0, l * s23);
  return J;
}

RobotParams RobotParams::go2() {
  RobotParams p;
  p.name = "go2";
  p.mass = 15.0;
  p.tau_leg_max = {23.5, 23.5, 45.4};
  p.q_ref = {0.0, 0.72, -1.44};
  p.p_ref_fl = {0.1805, 0.1308, -0.29};
  p.p_dev_max = {0.15, 0.1, 0.15};
  p.inertia = {0.152, 0.369, 0.388};
  return p;
}

RobotParams RobotParams::chotu() {
  RobotParams p;
  p.name = "chotu";
  p.mass = 20.0;
  p.tau_leg_max = {23.5, 23.5, 33.5};
  p.q_ref = {0.0, 0.72, -1.44};
  p.p_ref_fl = {0.2118, 0.210, -0.30};
  p.p_dev_max = {0.15, 0.1, 0.15};
  p.inertia = {0.396, 0.915, 1.107};
  return p;
}

}  // namespace locoplan
