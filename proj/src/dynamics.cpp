#include "mrss/dynamics.hpp"

#include <cmath>

#include "mrss/error.hpp"

namespace mrss {

RobotSpec default_spec(RobotKind kind) {
  RobotSpec s;
  s.kind = kind;
  if (kind == RobotKind::Wheeled) {
    s.limits = {0.2, 0.2, 3.0, 0.0, 0.0};
    s.sensor_range = 2.0;
    s.sensor_height = 0.5;
  } else {
    s.limits = {0.1, 0.1, 0.1, 3.0, 3.0};
    s.sensor_range = 3.5;
    s.sensor_height = 0.0;
  }
  return s;
}

RobotState spawn_state(const SpawnPose& pose) {
  RobotState s;
  s.kind = pose.kind;
  s.position = pose.position;
  s.yaw = pose.yaw;
  return s;
}

Action clamp_action(const Action& raw, const RobotSpec& spec) {
  Action out = raw;
  out.kind = spec.kind;
  for (std::size_t i = 0; i < kMaxActionDims; ++i) {
    double lim = i < spec.dims() ? spec.limits[i] : 0.0;
    out.u[i] = std::clamp(raw.u[i], -lim, lim);
  }
  return out;
}

RobotState step_dynamics(const RobotState& s, const Action& a, double dt) {
  if (!(dt > 0)) throw InvalidArgument("dt must be positive");
  RobotState n = s;
  double c = std::cos(s.yaw), sn = std::sin(s.yaw);
  double fwd = a.u[0], lat = a.u[1];
  Vec3 v{c * fwd - sn * lat, sn * fwd + c * lat, 0.0};
  if (s.kind == RobotKind::Wheeled) {
    n.yaw = wrap_angle(s.yaw + a.u[2] * dt);
  } else {
    v.z = a.u[2];
    n.pitch = wrap_angle(s.pitch + a.u[3] * dt);
    n.yaw = wrap_angle(s.yaw + a.u[4] * dt);
  }
  n.position = s.position + v * dt;
  n.velocity = v;
  if (s.kind == RobotKind::Wheeled) {
    n.position.z = 0.0;
    n.pitch = 0.0;
    n.velocity.z = 0.0;
  }
  return n;
}

bool collides_with_objects(const Scene& scene, const Vec3& p, double radius) {
  Int3 lo{int(std::floor(p.x - radius)), int(std::floor(p.y - radius)),
          int(std::floor(p.z - radius))};
  Int3 hi{int(std::floor(p.x + radius)), int(std::floor(p.y + radius)),
          int(std::floor(p.z + radius))};
  for (int z = lo.z; z <= hi.z; ++z)
    for (int y = lo.y; y <= hi.y; ++y)
      for (int x = lo.x; x <= hi.x; ++x) {
        Int3 v{x, y, z};
        if (scene.occupied(v) && point_box_distance(p, unit_voxel_box(v)) < radius) return true;
      }
  return false;
}

std::vector<CollisionEvent> check_collisions(const Scene& scene,
                                             const std::vector<RobotState>& states,
                                             const std::vector<RobotSpec>& specs) {
  if (states.size() != specs.size()) throw InvalidArgument("states/specs length mismatch");
  std::vector<CollisionEvent> events;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (collides_with_objects(scene, states[i].position, specs[i].radius))
      events.push_back({int(i), CollisionEvent::kObject});
    for (std::size_t j = i + 1; j < states.size(); ++j)
      if (norm(states[i].position - states[j].position) < specs[i].radius + specs[j].radius)
        events.push_back({int(i), int(j)});
  }
  return events;
}

bool in_safe_set(const RobotState& s, const Scene& scene, const RobotSpec& spec) {
  return scene.arena().contains(s.position) &&
         !collides_with_objects(scene, s.position, spec.radius);
}

}  // namespace mrss
