#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mrss/geometry.hpp"
#include "mrss/robot.hpp"
#include "mrss/world.hpp"

namespace mrss {

inline constexpr std::size_t kMaxActionDims = 5;

inline std::size_t action_dims(RobotKind k) { return k == RobotKind::Wheeled ? 3 : 5; }

struct RobotSpec {
  RobotKind kind = RobotKind::Wheeled;
  double radius = 0.3;
  std::array<double, kMaxActionDims> limits{};  // symmetric per-channel bound
  double sensor_range = 2.0;
  double sensor_height = 0.0;  // sensor origin offset above the body center

  std::size_t dims() const { return action_dims(kind); }
};

/// Wheeled: |v_fwd|,|v_lat| <= 0.2 m/s, |turn| <= 3 rad/s, 2 m cube-range sensor.
/// Quadcopter: |v_fwd|,|v_lat|,|v_up| <= 0.1 m/s, |pitch|,|yaw| <= 3 rad/s, 3.5 m sensor.
RobotSpec default_spec(RobotKind kind);

struct RobotState {
  RobotKind kind = RobotKind::Wheeled;
  Vec3 position;
  double yaw = 0.0;
  double pitch = 0.0;
  Vec3 velocity;  // last commanded velocity, world frame
  bool operator==(const RobotState&) const = default;
};

RobotState spawn_state(const SpawnPose& pose);

/// Wheeled channels: (v_fwd, v_lat, turn). Quadcopter: (v_fwd, v_lat, v_up, pitch, yaw).
struct Action {
  RobotKind kind = RobotKind::Wheeled;
  std::array<double, kMaxActionDims> u{};

  std::size_t dims() const { return action_dims(kind); }
  bool operator==(const Action&) const = default;
};

Action clamp_action(const Action& raw, const RobotSpec& spec);

/// Explicit Euler step of the kinematic model; body velocities are rotated by
/// the pre-step heading. Throws InvalidArgument for dt <= 0.
RobotState step_dynamics(const RobotState& s, const Action& a, double dt);

struct CollisionEvent {
  static constexpr int kObject = -1;
  int robot = 0;
  int other = kObject;  // other robot index (> robot), or kObject
  bool operator==(const CollisionEvent&) const = default;
};

bool collides_with_objects(const Scene& scene, const Vec3& position, double radius);

std::vector<CollisionEvent> check_collisions(const Scene& scene,
                                             const std::vector<RobotState>& states,
                                             const std::vector<RobotSpec>& specs);

bool in_safe_set(const RobotState& s, const Scene& scene, const RobotSpec& spec);

}  // namespace mrss
