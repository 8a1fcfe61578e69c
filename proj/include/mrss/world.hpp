#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mrss/geometry.hpp"
#include "mrss/rng.hpp"
#include "mrss/robot.hpp"

namespace mrss {

struct IntRange {
  int lo = 1;
  int hi = 1;
  bool operator==(const IntRange&) const = default;
};

/// Distribution over scanning tasks: object count, size, shape and placement.
struct UncertaintyConfig {
  IntRange count_range{1, 2};
  IntRange size_range{2, 3};  // cube edge, meters
  Vec3 position_mean{6.0, 6.0, 0.0};
  Vec3 position_std{2.0, 2.0, 0.0};
  double shape_irregularity = 0.0;
  Box3 arena{{0, 0, 0}, {12, 12, 6}};  // integer-aligned, floor at z = min.z
  Roster roster;
  Box3 spawn_region{{0, 0, 0}, {12, 12, 6}};  // x/y sampling window for spawns
  double quad_spawn_height = 1.5;
  double spawn_clearance = 1.0;  // min distance from spawns to voxels and other spawns
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const UncertaintyConfig&) const = default;
};

/// One axis-aligned cuboid of a composite object, in object-local voxel units.
struct Cuboid {
  Int3 offset;
  Int3 dims;
  bool operator==(const Cuboid&) const = default;
};

enum class ShapeKind { Cube, Composite };

struct ObjectDesc {
  Int3 origin;  // voxel min corner in arena coordinates
  int edge = 0;
  ShapeKind shape = ShapeKind::Cube;
  std::vector<Cuboid> parts;

  Int3 bbox_dims() const;
  Vec3 center() const;
  std::vector<Int3> voxels() const;
  bool operator==(const ObjectDesc&) const = default;
};

struct SpawnPose {
  RobotKind kind = RobotKind::Wheeled;
  Vec3 position;
  double yaw = 0.0;
  bool operator==(const SpawnPose&) const = default;
};

struct TaskSpec {
  std::vector<ObjectDesc> objects;
  Box3 arena;
  std::vector<SpawnPose> spawns;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

/// Draws one task. Pure in (cfg, cfg.seed). Throws PlacementError when an
/// object or spawn cannot be placed within 1000 attempts.
TaskSpec sample_task(const UncertaintyConfig& cfg);

enum Face : int { kPosX = 0, kNegX, kPosY, kNegY, kPosZ, kNegZ };

Vec3 face_normal(int face);

struct Cell {
  int id = 0;
  Vec3 center;
  Vec3 normal;
  int object = 0;
  Int3 voxel;
  int face = 0;
};

struct SceneObject {
  std::vector<Int3> voxels;
  std::vector<int> cells;
};

/// Voxelized task plus mutable per-episode cell occupancy.
class Scene {
 public:
  explicit Scene(TaskSpec spec);

  const TaskSpec& spec() const { return spec_; }
  const Box3& arena() const { return spec_.arena; }
  const std::vector<SceneObject>& objects() const { return objects_; }
  const std::vector<Cell>& cells() const { return cells_; }
  int cell_count() const { return static_cast<int>(cells_.size()); }

  Int3 grid_min() const { return grid_min_; }
  Int3 grid_dims() const { return grid_dims_; }
  bool in_grid(const Int3& v) const;
  /// Object index owning voxel v, or -1.
  int voxel_object(const Int3& v) const;
  bool occupied(const Int3& v) const { return voxel_object(v) >= 0; }
  /// Cell attached to face `face` of voxel v, or -1.
  int face_cell(const Int3& v, int face) const;

  std::uint8_t state(int cell) const { return states_.at(cell); }
  std::span<const std::uint8_t> states() const { return states_; }
  int occupied_count() const { return occupied_; }

  /// Marks cells scanned; returns the number of 0->1 transitions.
  int mark_scanned(std::span<const int> cell_ids);
  double coverage_fraction() const;
  void reset_states();

 private:
  std::size_t index(const Int3& v) const;

  TaskSpec spec_;
  Int3 grid_min_;
  Int3 grid_dims_;
  std::vector<int> voxel_object_;
  std::vector<int> face_cell_;
  std::vector<SceneObject> objects_;
  std::vector<Cell> cells_;
  std::vector<std::uint8_t> states_;
  int occupied_ = 0;
};

Scene build_scene(const TaskSpec& spec);

inline int mark_scanned(Scene& scene, std::span<const int> ids) { return scene.mark_scanned(ids); }
inline double coverage_fraction(const Scene& scene) { return scene.coverage_fraction(); }

// Text formats. Both carry a "mrss-task 1" / "mrss-scene 1" version header.
void write_task(std::ostream& os, const TaskSpec& spec);
TaskSpec read_task(std::istream& is);
void save_task(const std::string& path, const TaskSpec& spec);
TaskSpec load_task(const std::string& path);

void write_scene(std::ostream& os, const Scene& scene);
Scene read_scene(std::istream& is);
void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);

}  // namespace mrss
