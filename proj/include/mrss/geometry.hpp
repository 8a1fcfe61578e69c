#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace mrss {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Vec3&) const = default;

  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double chebyshev_norm(const Vec3& a) {
  return std::max({std::abs(a.x), std::abs(a.y), std::abs(a.z)});
}

struct Int3 {
  int x = 0;
  int y = 0;
  int z = 0;
  bool operator==(const Int3&) const = default;
  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
};

/// Axis-aligned box, min corner inclusive.
struct Box3 {
  Vec3 min;
  Vec3 max;
  bool operator==(const Box3&) const = default;

  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  Vec3 extent() const { return max - min; }
};

inline double point_box_distance(const Vec3& p, const Box3& b) {
  double dx = std::max({b.min.x - p.x, 0.0, p.x - b.max.x});
  double dy = std::max({b.min.y - p.y, 0.0, p.y - b.max.y});
  double dz = std::max({b.min.z - p.z, 0.0, p.z - b.max.z});
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline Box3 unit_voxel_box(const Int3& v) {
  return {{double(v.x), double(v.y), double(v.z)},
          {double(v.x + 1), double(v.y + 1), double(v.z + 1)}};
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

}  // namespace mrss
