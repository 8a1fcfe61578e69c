#include <algorithm>
#include <numbers>
#include <set>

#include "doctest.h"
#include "mrss/error.hpp"
#include "mrss/rng.hpp"
#include "mrss/sensing.hpp"
#include "oracles.hpp"

using namespace mrss;

namespace {

std::set<int> as_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

RobotState random_free_pose(const Scene& scene, RobotKind kind, Rng& rng) {
  const auto& a = scene.arena();
  auto spec = default_spec(kind);
  for (;;) {
    RobotState s;
    s.kind = kind;
    s.position = {uniform(rng, a.min.x, a.max.x), uniform(rng, a.min.y, a.max.y),
                  kind == RobotKind::Wheeled ? 0.0 : uniform(rng, a.min.z, a.max.z)};
    s.yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
    if (kind == RobotKind::Quadcopter) s.pitch = uniform(rng, -1.0, 1.0);
    if (!scene.occupied({int(std::floor(s.position.x)), int(std::floor(s.position.y)),
                         int(std::floor(s.position.z + spec.sensor_height))}))
      return s;
  }
}

UncertaintyConfig small_arena(std::uint64_t seed) {
  UncertaintyConfig c;
  c.arena = {{0, 0, 0}, {10, 10, 10}};
  c.spawn_region = c.arena;
  c.quad_spawn_height = 5;
  c.position_mean = {5, 5, 0};
  c.position_std = {2, 2, 0};
  c.count_range = {1, 2};
  c.size_range = {2, 3};
  c.shape_irregularity = 0.5;
  c.seed = seed;
  return c;
}

Scene single_cube(Int3 origin, int e, Box3 arena = {{0, 0, 0}, {8, 8, 8}}) {
  TaskSpec t;
  t.arena = arena;
  ObjectDesc o;
  o.origin = origin;
  o.edge = e;
  o.parts = {{{0, 0, 0}, {e, e, e}}};
  t.objects.push_back(o);
  return Scene(t);
}

}  // namespace

TEST_CASE("ray lattice sizes") {
  CHECK(ray_count(RobotKind::Wheeled) == 72 * 13);
  CHECK(ray_count(RobotKind::Quadcopter) == 72 * 37);
  auto dirs = ray_directions(ray_config(RobotKind::Quadcopter), 0.4, 0.3);
  for (const auto& d : dirs) CHECK(norm(d) == doctest::Approx(1.0));
}

TEST_CASE("empty arena produces no hits") {
  TaskSpec t;
  t.arena = {{0, 0, 0}, {8, 8, 8}};
  Scene scene(t);
  for (auto k : {RobotKind::Wheeled, RobotKind::Quadcopter}) {
    RobotState s;
    s.kind = k;
    s.position = {4, 4, k == RobotKind::Wheeled ? 0.0 : 4.0};
    auto hits = cast_rays(scene, s, default_spec(k));
    CHECK(int(hits.size()) == ray_count(k));
    for (const auto& h : hits) CHECK_FALSE(h.hit);
    CHECK(scanned_cells(hits).empty());
  }
}

TEST_CASE("facing a cube face from 1 m") {
  Scene scene = single_cube({3, 3, 0}, 2);
  RobotState s;
  s.position = {2.0, 3.5, 0.0};
  auto hits = cast_rays(scene, s, default_spec(RobotKind::Wheeled));
  const auto& fwd = hits[0];  // azimuth 0, elevation 0
  REQUIRE(fwd.hit);
  CHECK(fwd.distance == doctest::Approx(1.0));
  const auto& cell = scene.cells()[fwd.cell];
  CHECK(cell.normal.x == -1.0);
  CHECK(cell.center.y == doctest::Approx(3.5));
  CHECK(cell.center.z == doctest::Approx(0.5));
  for (const auto& h : hits) {
    if (!h.hit) continue;
    CHECK(h.distance <= 2.0 + 1e-12);
    CHECK(h.cell >= 0);
  }
}

TEST_CASE("wheeled range uses the cube norm") {
  Scene scene = single_cube({3, 3, 0}, 2);
  RobotState s;
  s.position = {1.0, 3.5, 0.0};  // the face is exactly 2 m ahead
  auto hits = cast_rays(scene, s, default_spec(RobotKind::Wheeled));
  REQUIRE(hits[0].hit);
  CHECK(hits[0].distance == doctest::Approx(2.0));
  s.position = {0.9, 3.5, 0.0};
  CHECK_FALSE(cast_rays(scene, s, default_spec(RobotKind::Wheeled))[0].hit);
}

TEST_CASE("cells behind an occupied voxel are never reported") {
  TaskSpec t;
  t.arena = {{0, 0, 0}, {10, 10, 4}};
  ObjectDesc front, back;
  front.origin = {3, 3, 0};
  front.edge = 2;
  front.parts = {{{0, 0, 0}, {2, 2, 2}}};
  back.origin = {6, 3, 0};
  back.edge = 2;
  back.parts = {{{0, 0, 0}, {2, 2, 2}}};
  t.objects = {front, back};
  Scene scene(t);
  RobotState s;
  s.kind = RobotKind::Quadcopter;
  s.position = {2.5, 4.0, 0.5};
  auto hits = cast_rays(scene, s, default_spec(RobotKind::Quadcopter));
  for (int id : scanned_cells(hits)) {
    const auto& c = scene.cells()[id];
    if (c.object == 1) CHECK(c.normal.x != -1.0);  // the back cube's -x face is shadowed
  }
}

TEST_CASE("scanned_cells deduplicates") {
  std::vector<RayHit> hits;
  CHECK(scanned_cells(hits).empty());
  for (int id : {4, 7, 7, 9}) hits.push_back({0, true, id, 1.0, 0});
  hits.push_back({0, false, -1, 0.0, 0});
  CHECK(scanned_cells(hits) == std::vector<int>{4, 7, 9});
  std::vector<RayHit> same{{0, true, 3, 1.0, 0}, {1, true, 3, 1.2, 0}};
  CHECK(scanned_cells(same) == std::vector<int>{3});
}

TEST_CASE("cast_rays matches the exhaustive visibility oracle") {
  std::size_t seen = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Scene scene(sample_task(small_arena(seed)));
    Rng rng(derive_seed(seed, {99}));
    for (int p = 0; p < 10; ++p) {
      auto kind = p % 2 ? RobotKind::Quadcopter : RobotKind::Wheeled;
      auto s = random_free_pose(scene, kind, rng);
      auto spec = default_spec(kind);
      auto got = as_set(scanned_cells(cast_rays(scene, s, spec)));
      CHECK(got == oracle::visible_cells(scene, s, spec));
      seen += got.size();
    }
  }
  CHECK(seen > 100);
}

TEST_CASE("rotating robot and scene by 90 degrees preserves hit distances") {
  Rng rng(21);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    TaskSpec t = sample_task(small_arena(seed + 40));
    const double W = t.arena.max.x;  // square arena at the origin
    TaskSpec r = t;
    for (auto& o : r.objects) {
      std::vector<Cuboid> abs;
      Int3 lo{1 << 20, 1 << 20, 0};
      for (const auto& p : o.parts) {
        int x0 = o.origin.x + p.offset.x, y0 = o.origin.y + p.offset.y;
        Cuboid c{{int(W) - (y0 + p.dims.y), x0, o.origin.z + p.offset.z}, {p.dims.y, p.dims.x, p.dims.z}};
        lo.x = std::min(lo.x, c.offset.x);
        lo.y = std::min(lo.y, c.offset.y);
        abs.push_back(c);
      }
      o.origin = {lo.x, lo.y, o.origin.z};
      for (auto& c : abs) c.offset = {c.offset.x - lo.x, c.offset.y - lo.y, c.offset.z - o.origin.z};
      o.parts = abs;
    }
    Scene a(t), b(r);
    CHECK(a.cell_count() == b.cell_count());
    for (int p = 0; p < 6; ++p) {
      auto kind = p % 2 ? RobotKind::Quadcopter : RobotKind::Wheeled;
      auto s = random_free_pose(a, kind, rng);
      RobotState rs = s;
      rs.position = {W - s.position.y, s.position.x, s.position.z};
      rs.yaw = s.yaw + std::numbers::pi / 2;
      auto spec = default_spec(kind);
      std::vector<double> da, db;
      for (const auto& h : cast_rays(a, s, spec))
        if (h.hit) da.push_back(h.distance);
      for (const auto& h : cast_rays(b, rs, spec))
        if (h.hit) db.push_back(h.distance);
      std::sort(da.begin(), da.end());
      std::sort(db.begin(), db.end());
      REQUIRE(da.size() == db.size());
      for (std::size_t i = 0; i < da.size(); ++i) CHECK(da[i] == doctest::Approx(db[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("communication schemes follow the ablation table") {
  const bool table[7][4] = {{1, 1, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 0},
                            {1, 1, 1, 0}, {1, 0, 1, 1}, {1, 1, 1, 1}};
  for (int i = 1; i <= 7; ++i) {
    auto s = scheme_from_index(i);
    CHECK(s.index == i);
    CHECK(s.wheeled_positions == table[i - 1][0]);
    CHECK(s.wheeled_velocity == table[i - 1][1]);
    CHECK(s.quad_positions == table[i - 1][2]);
    CHECK(s.quad_velocity == table[i - 1][3]);
  }
  CHECK_THROWS_AS(scheme_from_index(0), InvalidArgument);
  CHECK_THROWS_AS(scheme_from_index(8), InvalidArgument);
}

TEST_CASE("observation layout") {
  Scene scene = single_cube({3, 3, 0}, 2);
  std::vector<RobotState> states(3);
  states[0].position = {2.0, 3.5, 0.0};
  states[0].velocity = {0.2, 0, 0};
  states[1].position = {6.5, 6.5, 0.0};
  states[2].kind = RobotKind::Quadcopter;
  states[2].position = {1, 1, 2};
  states[2].velocity = {0, 0.1, 0};
  ObservationContext ctx{scene.arena(),
                         {default_spec(RobotKind::Wheeled), default_spec(RobotKind::Wheeled),
                          default_spec(RobotKind::Quadcopter)}};
  auto hits = cast_rays(scene, states[0], ctx.specs[0]);
  const std::size_t rays = hits.size() * kRayBlock;

  auto s3 = scheme_from_index(3);
  auto o3 = encode_observation(hits, states, 0, s3, ctx);
  CHECK(o3.values.size() == rays + kSelfBlock);
  CHECK(o3.values.size() == observation_size(RobotKind::Wheeled, s3, 3));

  auto s1 = scheme_from_index(1);
  auto o1 = encode_observation(hits, states, 0, s1, ctx);
  CHECK(o1.values.size() == rays + kSelfBlock + 2 * 3 + 2 * 3);
  CHECK(o1.values[rays + kSelfBlock + 0] == doctest::Approx(6.5 / 8));
  CHECK(o1.values[rays + kSelfBlock + 3] == doctest::Approx(1.0 / 8));
  CHECK(o1.values[rays + kSelfBlock + 5] == doctest::Approx(2.0 / 8));
  CHECK(o1.values[rays + kSelfBlock + 6 + 4] == doctest::Approx(0.5));
  CHECK(o1.values[rays + 7] == doctest::Approx(1.0));  // own forward velocity / 0.2

  auto oq = encode_observation(cast_rays(scene, states[2], ctx.specs[2]), states, 2, s1, ctx);
  CHECK(oq.values.size() == std::size_t(ray_count(RobotKind::Quadcopter)) * kRayBlock + kSelfBlock);

  for (std::size_t r = 0; r < hits.size(); ++r) {
    const float* b = &o1.values[r * kRayBlock];
    CHECK(b[0] + b[1] <= 1.0f);
    if (!hits[r].hit) {
      CHECK(b[0] == 0.0f);
      CHECK(b[1] == 0.0f);
      CHECK(b[2] == 0.0f);
    } else {
      CHECK(b[0] == 1.0f);
      CHECK(b[2] == doctest::Approx(hits[r].distance / 2.0));
    }
  }

  scene.mark_scanned(scanned_cells(hits));
  auto after = encode_observation(cast_rays(scene, states[0], ctx.specs[0]), states, 0, s1, ctx);
  CHECK(after.values[1] == 1.0f);
  CHECK(after.values[0] == 0.0f);
}
