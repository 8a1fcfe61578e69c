#include "mrss/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mrss/error.hpp"

namespace mrss {

namespace {

constexpr int kMaxAttempts = 1000;

bool integral(double v) { return std::floor(v) == v; }

double box_gap(const Box3& a, const Box3& b) {
  double dx = std::max({a.min.x - b.max.x, b.min.x - a.max.x, 0.0});
  double dy = std::max({a.min.y - b.max.y, b.min.y - a.max.y, 0.0});
  double dz = std::max({a.min.z - b.max.z, b.min.z - a.max.z, 0.0});
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Box3 object_box(const ObjectDesc& o) {
  Int3 d = o.bbox_dims();
  return {{double(o.origin.x), double(o.origin.y), double(o.origin.z)},
          {double(o.origin.x + d.x), double(o.origin.y + d.y), double(o.origin.z + d.z)}};
}

// Stepped tower of 2..4 cuboids stacked inside an edge^3 bounding cube.
std::vector<Cuboid> composite_parts(int edge, Rng& rng) {
  int n = std::min(uniform_int(rng, 2, 4), edge);
  std::vector<int> heights(n, 1);
  for (int extra = edge - n; extra > 0; --extra) heights[uniform_int(rng, 0, n - 1)] += 1;
  std::vector<Cuboid> parts;
  Int3 lo{0, 0, 0};
  Int3 size{edge, edge, 0};
  int z = 0;
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      Int3 sub{uniform_int(rng, 1, size.x), uniform_int(rng, 1, size.y), 0};
      lo.x += uniform_int(rng, 0, size.x - sub.x);
      lo.y += uniform_int(rng, 0, size.y - sub.y);
      size = sub;
    }
    parts.push_back({{lo.x, lo.y, z}, {size.x, size.y, heights[i]}});
    z += heights[i];
  }
  return parts;
}

}  // namespace

void UncertaintyConfig::validate() const {
  if (count_range.lo < 1) throw InvalidArgument("count_range lower bound must be >= 1");
  if (count_range.lo > count_range.hi) throw InvalidArgument("count_range is empty");
  if (size_range.lo < 2) throw InvalidArgument("size_range edges must be >= 2");
  if (size_range.lo > size_range.hi) throw InvalidArgument("size_range is empty");
  if (position_std.x < 0 || position_std.y < 0 || position_std.z < 0)
    throw InvalidArgument("position_std must be >= 0");
  if (shape_irregularity < 0 || shape_irregularity > 1)
    throw InvalidArgument("shape_irregularity must lie in [0,1]");
  for (int a = 0; a < 3; ++a)
    if (!integral(arena.min[a]) || !integral(arena.max[a]))
      throw InvalidArgument("arena bounds must be whole meters");
  Vec3 ext = arena.extent();
  if (ext.x < size_range.hi || ext.y < size_range.hi || ext.z < size_range.hi)
    throw InvalidArgument("arena cannot contain the largest admissible object");
  if (roster.wheeled < 0 || roster.quadcopter < 0 || roster.size() < 1)
    throw InvalidArgument("roster must contain at least one robot");
  if (roster.quadcopter > 0 &&
      (quad_spawn_height <= arena.min.z || quad_spawn_height >= arena.max.z))
    throw InvalidArgument("quad_spawn_height must lie strictly inside the arena");
  if (spawn_clearance < 0) throw InvalidArgument("spawn_clearance must be >= 0");
}

Int3 ObjectDesc::bbox_dims() const {
  Int3 d{0, 0, 0};
  for (const auto& p : parts)
    for (int a = 0; a < 3; ++a) d[a] = std::max(d[a], p.offset[a] + p.dims[a]);
  return d;
}

Vec3 ObjectDesc::center() const {
  Int3 d = bbox_dims();
  return {origin.x + d.x / 2.0, origin.y + d.y / 2.0, origin.z + d.z / 2.0};
}

std::vector<Int3> ObjectDesc::voxels() const {
  Int3 d = bbox_dims();
  std::vector<char> mark(std::size_t(d.x) * d.y * d.z, 0);
  for (const auto& p : parts)
    for (int z = p.offset.z; z < p.offset.z + p.dims.z; ++z)
      for (int y = p.offset.y; y < p.offset.y + p.dims.y; ++y)
        for (int x = p.offset.x; x < p.offset.x + p.dims.x; ++x)
          mark[(std::size_t(z) * d.y + y) * d.x + x] = 1;
  std::vector<Int3> out;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x)
        if (mark[(std::size_t(z) * d.y + y) * d.x + x])
          out.push_back({origin.x + x, origin.y + y, origin.z + z});
  return out;
}

void TaskSpec::validate() const {
  for (int a = 0; a < 3; ++a)
    if (!integral(arena.min[a]) || !integral(arena.max[a]) || arena.max[a] <= arena.min[a])
      throw InvalidArgument("task arena must have whole-meter, non-empty bounds");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.parts.empty()) throw InvalidArgument("object " + std::to_string(i) + " has no parts");
    for (const auto& p : o.parts)
      if (p.dims.x < 1 || p.dims.y < 1 || p.dims.z < 1 || p.offset.x < 0 || p.offset.y < 0 ||
          p.offset.z < 0)
        throw InvalidArgument("object " + std::to_string(i) + " has a degenerate part");
    Box3 b = object_box(o);
    if (b.min.x < arena.min.x || b.min.y < arena.min.y || b.min.z < arena.min.z ||
        b.max.x > arena.max.x || b.max.y > arena.max.y || b.max.z > arena.max.z)
      throw InvalidArgument("object " + std::to_string(i) + " leaves the arena");
    for (std::size_t j = 0; j < i; ++j)
      if (box_gap(b, object_box(objects[j])) < 1.0)
        throw InvalidArgument("objects " + std::to_string(j) + " and " + std::to_string(i) +
                              " are closer than 1 m");
  }
  for (std::size_t i = 0; i < spawns.size(); ++i) {
    const auto& s = spawns[i];
    if (!arena.contains(s.position))
      throw InvalidArgument("spawn " + std::to_string(i) + " is outside the arena");
    if (s.kind == RobotKind::Wheeled && s.position.z != arena.min.z)
      throw InvalidArgument("wheeled spawn " + std::to_string(i) + " is off the ground");
  }
}

TaskSpec sample_task(const UncertaintyConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, {kStreamTasks}));
  TaskSpec spec;
  spec.arena = cfg.arena;
  spec.seed = cfg.seed;

  int count = uniform_int(rng, cfg.count_range.lo, cfg.count_range.hi);
  std::vector<Box3> boxes;
  for (int i = 0; i < count; ++i) {
    ObjectDesc obj;
    obj.edge = uniform_int(rng, cfg.size_range.lo, cfg.size_range.hi);
    if (uniform(rng, 0.0, 1.0) < cfg.shape_irregularity) {
      obj.shape = ShapeKind::Composite;
      obj.parts = composite_parts(obj.edge, rng);
    } else {
      obj.parts = {{{0, 0, 0}, {obj.edge, obj.edge, obj.edge}}};
    }
    Int3 d = obj.bbox_dims();
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      double cx = cfg.position_mean.x + cfg.position_std.x * standard_normal(rng);
      double cy = cfg.position_mean.y + cfg.position_std.y * standard_normal(rng);
      auto place = [](double c, int width, double lo, double hi) {
        int o = int(std::lround(c - width / 2.0));
        return std::clamp(o, int(lo), int(hi) - width);
      };
      obj.origin = {place(cx, d.x, cfg.arena.min.x, cfg.arena.max.x),
                    place(cy, d.y, cfg.arena.min.y, cfg.arena.max.y), int(cfg.arena.min.z)};
      Box3 b = object_box(obj);
      placed = std::all_of(boxes.begin(), boxes.end(),
                           [&](const Box3& o) { return box_gap(b, o) >= 1.0; });
      if (placed) boxes.push_back(b);
    }
    if (!placed)
      throw PlacementError("arena too crowded: cannot place object " + std::to_string(i));
    spec.objects.push_back(std::move(obj));
  }

  Box3 region = cfg.spawn_region;
  for (int a = 0; a < 2; ++a) {
    region.min[a] = std::max(region.min[a], cfg.arena.min[a]);
    region.max[a] = std::min(region.max[a], cfg.arena.max[a]);
  }
  for (int r = 0; r < cfg.roster.size(); ++r) {
    SpawnPose pose;
    pose.kind = cfg.roster.kind_of(r);
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      pose.position = {uniform(rng, region.min.x, region.max.x),
                       uniform(rng, region.min.y, region.max.y),
                       pose.kind == RobotKind::Wheeled ? cfg.arena.min.z : cfg.quad_spawn_height};
      pose.yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
      placed = cfg.arena.contains(pose.position);
      for (const auto& b : boxes)
        placed = placed && point_box_distance(pose.position, b) >= cfg.spawn_clearance;
      for (const auto& other : spec.spawns)
        placed = placed && norm(other.position - pose.position) >= cfg.spawn_clearance;
    }
    if (!placed)
      throw PlacementError("arena too crowded: cannot place spawn for robot " +
                           std::to_string(r));
    spec.spawns.push_back(pose);
  }
  return spec;
}

Vec3 face_normal(int face) {
  switch (face) {
    case kPosX: return {1, 0, 0};
    case kNegX: return {-1, 0, 0};
    case kPosY: return {0, 1, 0};
    case kNegY: return {0, -1, 0};
    case kPosZ: return {0, 0, 1};
    default: return {0, 0, -1};
  }
}

Scene::Scene(TaskSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  grid_min_ = {int(spec_.arena.min.x), int(spec_.arena.min.y), int(spec_.arena.min.z)};
  Vec3 ext = spec_.arena.extent();
  grid_dims_ = {int(ext.x), int(ext.y), int(ext.z)};
  std::size_t n = std::size_t(grid_dims_.x) * grid_dims_.y * grid_dims_.z;
  voxel_object_.assign(n, -1);
  face_cell_.assign(n * 6, -1);

  for (std::size_t i = 0; i < spec_.objects.size(); ++i) {
    SceneObject obj;
    obj.voxels = spec_.objects[i].voxels();
    for (const auto& v : obj.voxels) voxel_object_[index(v)] = int(i);
    objects_.push_back(std::move(obj));
  }
  static const Int3 kStep[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    for (const auto& v : objects_[i].voxels) {
      for (int f = 0; f < 6; ++f) {
        if (f == kNegZ) continue;  // bottom faces carry no cells
        Int3 nb{v.x + kStep[f].x, v.y + kStep[f].y, v.z + kStep[f].z};
        if (in_grid(nb) && occupied(nb)) continue;
        Cell c;
        c.id = int(cells_.size());
        Vec3 n = face_normal(f);
        c.normal = n;
        c.center = Vec3{v.x + 0.5, v.y + 0.5, v.z + 0.5} + n * 0.5;
        c.object = int(i);
        c.voxel = v;
        c.face = f;
        face_cell_[index(v) * 6 + f] = c.id;
        objects_[i].cells.push_back(c.id);
        cells_.push_back(c);
      }
    }
  }
  states_.assign(cells_.size(), 0);
}

std::size_t Scene::index(const Int3& v) const {
  return (std::size_t(v.z - grid_min_.z) * grid_dims_.y + (v.y - grid_min_.y)) * grid_dims_.x +
         (v.x - grid_min_.x);
}

bool Scene::in_grid(const Int3& v) const {
  return v.x >= grid_min_.x && v.y >= grid_min_.y && v.z >= grid_min_.z &&
         v.x < grid_min_.x + grid_dims_.x && v.y < grid_min_.y + grid_dims_.y &&
         v.z < grid_min_.z + grid_dims_.z;
}

int Scene::voxel_object(const Int3& v) const {
  return in_grid(v) ? voxel_object_[index(v)] : -1;
}

int Scene::face_cell(const Int3& v, int face) const {
  return in_grid(v) ? face_cell_[index(v) * 6 + face] : -1;
}

int Scene::mark_scanned(std::span<const int> cell_ids) {
  for (int id : cell_ids)
    if (id < 0 || id >= cell_count())
      throw InvalidArgument("unknown cell id " + std::to_string(id));
  int fresh = 0;
  for (int id : cell_ids) {
    if (states_[id] == 0) {
      states_[id] = 1;
      ++fresh;
    }
  }
  occupied_ += fresh;
  return fresh;
}

double Scene::coverage_fraction() const {
  if (cells_.empty()) throw InvalidArgument("coverage of a scene without cells");
  return double(occupied_) / double(cells_.size());
}

void Scene::reset_states() {
  std::fill(states_.begin(), states_.end(), 0);
  occupied_ = 0;
}

Scene build_scene(const TaskSpec& spec) { return Scene(spec); }

// ---------------------------------------------------------------------------
// Text persistence

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  // Next non-empty, non-comment line split into tokens.
  std::vector<std::string> next(const char* expecting) {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::istringstream ss(line);
      std::vector<std::string> tok;
      for (std::string t; ss >> t;) tok.push_back(t);
      if (!tok.empty()) return tok;
    }
    throw ParseError(line_no_ + 1, std::string("unexpected end of file, expected ") + expecting);
  }

  std::vector<std::string> expect(const std::string& key, std::size_t args) {
    auto tok = next(key.c_str());
    if (tok[0] != key) fail("expected '" + key + "', got '" + tok[0] + "'");
    if (tok.size() != args + 1)
      fail("'" + key + "' expects " + std::to_string(args) + " values");
    return tok;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_no_, msg); }

  long long to_int(const std::string& s) const {
    try {
      std::size_t used = 0;
      long long v = std::stoll(s, &used);
      if (used != s.size()) fail("bad integer '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad integer '" + s + "'");
    }
  }
  std::uint64_t to_u64(const std::string& s) const {
    try {
      std::size_t used = 0;
      auto v = std::stoull(s, &used);
      if (used != s.size()) fail("bad integer '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad integer '" + s + "'");
    }
  }
  double to_double(const std::string& s) const {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) fail("bad number '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + s + "'");
    }
  }
  int line() const { return line_no_; }

 private:
  std::istream& is_;
  int line_no_ = 0;
};

void write_task_body(std::ostream& os, const TaskSpec& spec) {
  const auto& a = spec.arena;
  os << "seed " << spec.seed << "\n";
  os << "arena " << fmt_double(a.min.x) << ' ' << fmt_double(a.min.y) << ' '
     << fmt_double(a.min.z) << ' ' << fmt_double(a.max.x) << ' ' << fmt_double(a.max.y) << ' '
     << fmt_double(a.max.z) << "\n";
  os << "objects " << spec.objects.size() << "\n";
  for (const auto& o : spec.objects) {
    os << "object " << o.origin.x << ' ' << o.origin.y << ' ' << o.origin.z << ' ' << o.edge << ' '
       << (o.shape == ShapeKind::Cube ? "cube" : "composite") << ' ' << o.parts.size() << "\n";
    for (const auto& p : o.parts)
      os << "part " << p.offset.x << ' ' << p.offset.y << ' ' << p.offset.z << ' ' << p.dims.x
         << ' ' << p.dims.y << ' ' << p.dims.z << "\n";
  }
  os << "spawns " << spec.spawns.size() << "\n";
  for (const auto& s : spec.spawns)
    os << "spawn " << kind_name(s.kind) << ' ' << fmt_double(s.position.x) << ' '
       << fmt_double(s.position.y) << ' ' << fmt_double(s.position.z) << ' ' << fmt_double(s.yaw)
       << "\n";
}

TaskSpec read_task_body(LineReader& in) {
  TaskSpec spec;
  spec.seed = in.to_u64(in.expect("seed", 1)[1]);
  auto a = in.expect("arena", 6);
  spec.arena = {{in.to_double(a[1]), in.to_double(a[2]), in.to_double(a[3])},
                {in.to_double(a[4]), in.to_double(a[5]), in.to_double(a[6])}};
  long long n_obj = in.to_int(in.expect("objects", 1)[1]);
  if (n_obj < 0) in.fail("negative object count");
  for (long long i = 0; i < n_obj; ++i) {
    auto t = in.expect("object", 6);
    ObjectDesc o;
    o.origin = {int(in.to_int(t[1])), int(in.to_int(t[2])), int(in.to_int(t[3]))};
    o.edge = int(in.to_int(t[4]));
    if (t[5] == "cube") o.shape = ShapeKind::Cube;
    else if (t[5] == "composite") o.shape = ShapeKind::Composite;
    else in.fail("unknown shape '" + t[5] + "'");
    long long n_parts = in.to_int(t[6]);
    if (n_parts < 1) in.fail("object needs at least one part");
    for (long long k = 0; k < n_parts; ++k) {
      auto p = in.expect("part", 6);
      o.parts.push_back({{int(in.to_int(p[1])), int(in.to_int(p[2])), int(in.to_int(p[3]))},
                         {int(in.to_int(p[4])), int(in.to_int(p[5])), int(in.to_int(p[6]))}});
    }
    spec.objects.push_back(std::move(o));
  }
  long long n_spawn = in.to_int(in.expect("spawns", 1)[1]);
  if (n_spawn < 0) in.fail("negative spawn count");
  for (long long i = 0; i < n_spawn; ++i) {
    auto t = in.expect("spawn", 5);
    SpawnPose s;
    if (t[1] == "wheeled") s.kind = RobotKind::Wheeled;
    else if (t[1] == "quadcopter") s.kind = RobotKind::Quadcopter;
    else in.fail("unknown robot kind '" + t[1] + "'");
    s.position = {in.to_double(t[2]), in.to_double(t[3]), in.to_double(t[4])};
    s.yaw = in.to_double(t[5]);
    spec.spawns.push_back(s);
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    in.fail(e.what());
  }
  return spec;
}

void check_header(LineReader& in, const std::string& magic) {
  auto h = in.next(magic.c_str());
  if (h.size() != 2 || h[0] != magic) in.fail("missing '" + magic + "' header");
  if (h[1] != "1") in.fail("unsupported " + magic + " version " + h[1]);
}

}  // namespace

void write_task(std::ostream& os, const TaskSpec& spec) {
  os << "mrss-task 1\n";
  write_task_body(os, spec);
  os << "end\n";
}

TaskSpec read_task(std::istream& is) {
  LineReader in(is);
  check_header(in, "mrss-task");
  TaskSpec spec = read_task_body(in);
  in.expect("end", 0);
  return spec;
}

void write_scene(std::ostream& os, const Scene& scene) {
  os << "mrss-scene 1\n";
  write_task_body(os, scene.spec());
  os << "cells " << scene.cell_count() << "\n";
  std::string bits;
  for (auto s : scene.states()) bits.push_back(s ? '1' : '0');
  os << "states " << (bits.empty() ? "-" : bits) << "\n";
  os << "end\n";
}

Scene read_scene(std::istream& is) {
  LineReader in(is);
  check_header(in, "mrss-scene");
  Scene scene(read_task_body(in));
  long long cells = in.to_int(in.expect("cells", 1)[1]);
  if (cells != scene.cell_count())
    in.fail("cell count " + std::to_string(cells) + " does not match geometry (" +
            std::to_string(scene.cell_count()) + ")");
  std::string bits = in.expect("states", 1)[1];
  if (bits == "-") bits.clear();
  if (static_cast<long long>(bits.size()) != cells) in.fail("state string has wrong length");
  std::vector<int> marked;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1') marked.push_back(int(i));
    else if (bits[i] != '0') in.fail("state string must contain only 0 and 1");
  }
  scene.mark_scanned(marked);
  in.expect("end", 0);
  return scene;
}

namespace {
std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}
std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}
}  // namespace

void save_task(const std::string& path, const TaskSpec& spec) {
  auto f = open_out(path);
  write_task(f, spec);
}
TaskSpec load_task(const std::string& path) {
  auto f = open_in(path);
  return read_task(f);
}
void save_scene(const std::string& path, const Scene& scene) {
  auto f = open_out(path);
  write_scene(f, scene);
}
Scene load_scene(const std::string& path) {
  auto f = open_in(path);
  return read_scene(f);
}

}  // namespace mrss
