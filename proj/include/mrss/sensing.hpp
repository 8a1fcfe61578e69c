#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mrss/dynamics.hpp"
#include "mrss/world.hpp"

namespace mrss {

/// Angular lattice of a robot kind's ray sensor, in degrees relative to the
/// body frame. Rays are indexed elevation-major.
struct RayConfig {
  double angular_step = 5.0;
  double elevation_min = 0.0;
  double elevation_max = 60.0;
  double max_range = 2.0;
  bool cube_range = true;  // Chebyshev range test instead of Euclidean

  int azimuth_count() const;
  int elevation_count() const;
  int ray_count() const { return azimuth_count() * elevation_count(); }
};

RayConfig ray_config(RobotKind kind);
int ray_count(RobotKind kind);

/// World-frame unit directions of every ray for the given heading.
std::vector<Vec3> ray_directions(const RayConfig& rc, double yaw, double pitch);

struct RayHit {
  int ray = 0;
  bool hit = false;
  int cell = -1;
  double distance = 0.0;  // range-norm distance (cube norm for wheeled robots)
  std::uint8_t state = 0;
};

Vec3 sensor_origin(const RobotState& s, const RobotSpec& spec);

/// Marches every lattice ray through the voxel grid to the first voxel face
/// within range. A ray reports a hit only when that face carries a cell; the
/// reported state is the scene's current state of that cell.
std::vector<RayHit> cast_rays(const Scene& scene, const RobotState& s, const RobotSpec& spec);

/// Distinct scanned cell ids, ascending.
std::vector<int> scanned_cells(std::span<const RayHit> hits);

struct CommScheme {
  int index = 1;
  bool wheeled_positions = true;
  bool wheeled_velocity = true;
  bool quad_positions = false;
  bool quad_velocity = false;

  bool positions_for(RobotKind k) const {
    return k == RobotKind::Wheeled ? wheeled_positions : quad_positions;
  }
  bool velocity_for(RobotKind k) const {
    return k == RobotKind::Wheeled ? wheeled_velocity : quad_velocity;
  }
  bool operator==(const CommScheme&) const = default;
};

/// Communication schemes 1..7 of the ablation table.
CommScheme scheme_from_index(int index);

struct Observation {
  std::vector<float> values;
};

inline constexpr std::size_t kRayBlock = 3;
inline constexpr std::size_t kSelfBlock = 10;

/// Layout: ray blocks [unscanned, scanned, distance/range] in ray order, then
/// own normalized position (3), sin/cos yaw, sin/cos pitch, own velocity (3),
/// then teammate positions and teammate velocities (3 each, agent order,
/// self skipped) when the scheme grants them to this robot's kind.
std::size_t observation_size(RobotKind kind, const CommScheme& scheme, int n_robots);

struct ObservationContext {
  Box3 arena;
  std::vector<RobotSpec> specs;  // per agent
};

Observation encode_observation(std::span<const RayHit> hits, const std::vector<RobotState>& states,
                               int self_id, const CommScheme& scheme,
                               const ObservationContext& ctx);

}  // namespace mrss
