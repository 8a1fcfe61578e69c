#include "mrss/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mrss/error.hpp"

namespace mrss {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kMaxSpeed = 0.2;
}  // namespace

int RayConfig::azimuth_count() const { return int(std::lround(360.0 / angular_step)); }

int RayConfig::elevation_count() const {
  return int(std::lround((elevation_max - elevation_min) / angular_step)) + 1;
}

RayConfig ray_config(RobotKind kind) {
  RayConfig rc;
  if (kind == RobotKind::Wheeled) {
    rc.elevation_min = 0.0;
    rc.elevation_max = 60.0;
    rc.max_range = 2.0;
    rc.cube_range = true;
  } else {
    rc.elevation_min = -90.0;
    rc.elevation_max = 90.0;
    rc.max_range = 3.5;
    rc.cube_range = false;
  }
  return rc;
}

int ray_count(RobotKind kind) { return ray_config(kind).ray_count(); }

std::vector<Vec3> ray_directions(const RayConfig& rc, double yaw, double pitch) {
  const int n_az = rc.azimuth_count(), n_el = rc.elevation_count();
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  std::vector<Vec3> dirs;
  dirs.reserve(std::size_t(n_az) * n_el);
  for (int e = 0; e < n_el; ++e) {
    double el = (rc.elevation_min + e * rc.angular_step) * kDeg;
    for (int a = 0; a < n_az; ++a) {
      double az = a * rc.angular_step * kDeg;
      Vec3 b{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
      Vec3 p{b.x * cp - b.z * sp, b.y, b.x * sp + b.z * cp};
      dirs.push_back({p.x * cy - p.y * sy, p.x * sy + p.y * cy, p.z});
    }
  }
  return dirs;
}

Vec3 sensor_origin(const RobotState& s, const RobotSpec& spec) {
  return s.position + Vec3{0, 0, spec.sensor_height};
}

std::vector<RayHit> cast_rays(const Scene& scene, const RobotState& s, const RobotSpec& spec) {
  RayConfig rc = ray_config(spec.kind);
  rc.max_range = spec.sensor_range;
  const Vec3 o = sensor_origin(s, spec);
  const auto dirs = ray_directions(rc, s.yaw, s.kind == RobotKind::Quadcopter ? s.pitch : 0.0);
  std::vector<RayHit> hits(dirs.size());
  const Int3 start{int(std::floor(o.x)), int(std::floor(o.y)), int(std::floor(o.z))};
  const bool buried = scene.occupied(start);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  for (std::size_t r = 0; r < dirs.size(); ++r) {
    RayHit& h = hits[r];
    h.ray = int(r);
    if (buried) continue;
    const Vec3& d = dirs[r];
    const double scale = rc.cube_range ? chebyshev_norm(d) : 1.0;
    const double t_max = rc.max_range / scale;
    Int3 v = start;
    int step[3];
    double t_next[3], t_delta[3];
    for (int a = 0; a < 3; ++a) {
      if (d[a] > 0) {
        step[a] = 1;
        t_delta[a] = 1.0 / d[a];
        t_next[a] = (v[a] + 1 - o[a]) / d[a];
      } else if (d[a] < 0) {
        step[a] = -1;
        t_delta[a] = -1.0 / d[a];
        t_next[a] = (o[a] - v[a]) / -d[a];
      } else {
        step[a] = 0;
        t_delta[a] = kInf;
        t_next[a] = kInf;
      }
    }
    for (;;) {
      int axis = 0;
      if (t_next[1] < t_next[axis]) axis = 1;
      if (t_next[2] < t_next[axis]) axis = 2;
      const double t = t_next[axis];
      if (t > t_max) break;
      v[axis] += step[axis];
      t_next[axis] += t_delta[axis];
      if (!scene.occupied(v)) continue;
      // Entering along +axis crosses the voxel's negative face.
      int face = 2 * axis + (step[axis] > 0 ? 1 : 0);
      int cell = scene.face_cell(v, face);
      if (cell >= 0) {
        h.hit = true;
        h.cell = cell;
        h.distance = t * scale;
        h.state = scene.state(cell);
      }
      break;
    }
  }
  return hits;
}

std::vector<int> scanned_cells(std::span<const RayHit> hits) {
  std::vector<int> ids;
  for (const auto& h : hits)
    if (h.hit) ids.push_back(h.cell);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

CommScheme scheme_from_index(int index) {
  //                      wheeled pos, vel   quad pos, vel
  static const bool kTable[7][4] = {{true, true, false, false},  {false, true, false, false},
                                    {false, false, false, false}, {true, false, false, false},
                                    {true, true, true, false},    {true, false, true, true},
                                    {true, true, true, true}};
  if (index < 1 || index > 7)
    throw InvalidArgument("communication scheme must be in 1..7, got " + std::to_string(index));
  const bool* row = kTable[index - 1];
  return {index, row[0], row[1], row[2], row[3]};
}

std::size_t observation_size(RobotKind kind, const CommScheme& scheme, int n_robots) {
  std::size_t n = std::size_t(ray_count(kind)) * kRayBlock + kSelfBlock;
  std::size_t others = std::size_t(std::max(n_robots - 1, 0));
  if (scheme.positions_for(kind)) n += 3 * others;
  if (scheme.velocity_for(kind)) n += 3 * others;
  return n;
}

Observation encode_observation(std::span<const RayHit> hits, const std::vector<RobotState>& states,
                               int self_id, const CommScheme& scheme,
                               const ObservationContext& ctx) {
  const RobotState& self = states.at(self_id);
  const RobotSpec& spec = ctx.specs.at(self_id);
  const int n = int(states.size());
  if (int(hits.size()) != ray_count(self.kind))
    throw InvalidArgument("hit list does not match the ray lattice");

  Observation obs;
  obs.values.assign(observation_size(self.kind, scheme, n), 0.0f);
  float* out = obs.values.data();
  for (const auto& h : hits) {
    if (h.hit) {
      out[h.state ? 1 : 0] = 1.0f;
      out[2] = float(h.distance / spec.sensor_range);
    }
    out += kRayBlock;
  }
  const Vec3 ext = ctx.arena.extent();
  auto put_position = [&](const Vec3& p) {
    for (int a = 0; a < 3; ++a) *out++ = float((p[a] - ctx.arena.min[a]) / ext[a]);
  };
  auto put_velocity = [&](const Vec3& v) {
    for (int a = 0; a < 3; ++a) *out++ = float(v[a] / kMaxSpeed);
  };
  put_position(self.position);
  *out++ = float(std::sin(self.yaw));
  *out++ = float(std::cos(self.yaw));
  *out++ = float(std::sin(self.pitch));
  *out++ = float(std::cos(self.pitch));
  put_velocity(self.velocity);
  if (scheme.positions_for(self.kind))
    for (int j = 0; j < n; ++j)
      if (j != self_id) put_position(states[j].position);
  if (scheme.velocity_for(self.kind))
    for (int j = 0; j < n; ++j)
      if (j != self_id) put_velocity(states[j].velocity);
  return obs;
}

}  // namespace mrss
