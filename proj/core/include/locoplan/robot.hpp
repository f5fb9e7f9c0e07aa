#pragma once

#include <Eigen/Core>
#include <string>

namespace locoplan {

// Feet are indexed FL=0, FR=1, RL=2, RR=3.
inline constexpr int kNumFeet = 4;

// Single-rigid-body robot model plus a 3-DoF leg (hip roll, hip pitch,
// knee pitch) used only to map contact forces to joint torques at the
// nominal joint configuration.
struct RobotParams {
  std::string name;
  double mass = 15.0;                    // kg
  Eigen::Vector3d tau_leg_max{23.5, 23.5, 45.4};   // N m, per leg joint
  Eigen::Vector3d tau_base_max{30.0, 30.0, 30.0};  // N m, base angular actuation
  Eigen::Vector3d q_ref{0.0, 0.72, -1.44};         // rad
  Eigen::Vector3d p_ref_fl{0.1805, 0.1308, -0.29}; // nominal FL foot, body frame
  Eigen::Vector3d p_dev_max{0.15, 0.1, 0.15};      // foothold box half-extents
  Eigen::Vector3d inertia{0.152, 0.369, 0.388};    // diagonal body inertia
  double f_max = 300.0;        // per-component contact force bound, N
  double v_max = 5.0;          // base/foot velocity bound used for big-M boxes
  double nominal_height() const { return -p_ref_fl.z(); }

  // Nominal foot position in the body frame; legs mirror the FL values.
  Eigen::Vector3d foot_offset(int foot) const;

  // Foot Jacobian at q_ref for the parametric leg whose link lengths are
  // solved so the straight-down foot position matches p_ref_fl.z().
  Eigen::Matrix3d leg_jacobian(int foot) const;

  static RobotParams go2();
  static RobotParams chotu();
};

}  // namespace locoplan
