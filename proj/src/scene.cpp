#include "ohda/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <tuple>

#include "ohda/rng.hpp"

namespace ohda {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kPrototypePoints = 1024;

std::size_t sample_index(std::span<const double> weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform(0.0, total);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

// Surface sampler over a union of cuboids. Bottom faces resting on z = 0 are
// skipped (never visible on a floor-standing object).
struct SurfaceSampler {
  struct Face {
    Vec3 origin, u, v;
    double area;
  };
  std::vector<Face> faces;

  void add_cuboid(const Vec3& lo, const Vec3& hi) {
    const Vec3 e = hi - lo;
    const Vec3 ex{e.x, 0, 0}, ey{0, e.y, 0}, ez{0, 0, e.z};
    auto add = [&](Vec3 o, Vec3 u, Vec3 v) {
      const double area = u.norm() * v.norm();
      if (area > 0) faces.push_back({o, u, v, area});
    };
    if (lo.z > 1e-12) add(lo, ex, ey);
    add(lo + ez, ex, ey);
    add(lo, ex, ez);
    add(lo + ey, ex, ez);
    add(lo, ey, ez);
    add(lo + ex, ey, ez);
  }
  double area() const {
    double a = 0;
    for (const auto& f : faces) a += f.area;
    return a;
  }
  std::vector<Vec3> sample(int n, Rng& rng) const {
    std::vector<double> w;
    for (const auto& f : faces) w.push_back(f.area);
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Face& f = faces[sample_index(w, rng)];
      pts.push_back(f.origin + f.u * rng.uniform() + f.v * rng.uniform());
    }
    return pts;
  }
};

// Primitive layouts per furniture family; extents (w along x, d along y, h up).
void add_bed(SurfaceSampler& s, double w, double d, double h, Rng& rng) {
  const double base = h * rng.uniform(0.45, 0.6);
  const bool headboard = rng.bernoulli(0.75);
  const double hb = headboard ? 0.08 : 0.0;
  if (headboard) s.add_cuboid({-w / 2, -d / 2, 0}, {-w / 2 + hb, d / 2, h});
  s.add_cuboid({-w / 2 + hb, -d / 2, 0}, {w / 2, d / 2, headboard ? base : h});
}

void add_legs(SurfaceSampler& s, double w, double d, double top, double leg, double inset) {
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const double cx = sx * (w / 2 - inset - leg / 2);
      const double cy = sy * (d / 2 - inset - leg / 2);
      s.add_cuboid({cx - leg / 2, cy - leg / 2, 0}, {cx + leg / 2, cy + leg / 2, top});
    }
  }
}

void add_table(SurfaceSampler& s, double w, double d, double h, Rng& rng) {
  const double t = rng.uniform(0.04, 0.07);
  s.add_cuboid({-w / 2, -d / 2, h - t}, {w / 2, d / 2, h});
  if (rng.bernoulli(0.25)) {
    const double c = 0.08;
    s.add_cuboid({-c, -c, 0}, {c, c, h - t});
  } else {
    add_legs(s, w, d, h - t, rng.uniform(0.04, 0.07), rng.uniform(0.0, 0.08));
  }
}

void add_chair(SurfaceSampler& s, double w, double d, double h, Rng& rng) {
  const double seat = h * rng.uniform(0.45, 0.55);
  const double t = 0.04;
  const double back = rng.uniform(0.04, 0.07);
  s.add_cuboid({-w / 2, -d / 2, seat - t}, {w / 2, d / 2, seat});
  s.add_cuboid({-w / 2, d / 2 - back, seat}, {w / 2, d / 2, h});
  add_legs(s, w, d, seat - t, rng.uniform(0.03, 0.05), rng.uniform(0.0, 0.03));
}

void add_cabinet(SurfaceSampler& s, double w, double d, double h, Rng& rng) {
  if (rng.bernoulli(0.5)) {
    s.add_cuboid({-w / 2, -d / 2, 0}, {w / 2, d / 2, h});
    return;
  }
  // Open shelving: back panel, two sides, shelves.
  const double t = 0.03;
  s.add_cuboid({-w / 2, d / 2 - t, 0}, {w / 2, d / 2, h});
  s.add_cuboid({-w / 2, -d / 2, 0}, {-w / 2 + t, d / 2, h});
  s.add_cuboid({w / 2 - t, -d / 2, 0}, {w / 2, d / 2, h});
  const int shelves = static_cast<int>(rng.integer(2, 4));
  for (int i = 0; i <= shelves; ++i) {
    const double z = h * i / shelves;
    s.add_cuboid({-w / 2 + t, -d / 2, std::max(0.0, z - t)}, {w / 2 - t, d / 2 - t, std::max(t, z)});
  }
}

Prototype make_prototype(const ClassSpec& cls, Rng& rng) {
  const double w = cls.size_mean.x * (1.0 + cls.size_spread * rng.uniform(-1, 1));
  const double d = cls.size_mean.y * (1.0 + cls.size_spread * rng.uniform(-1, 1));
  const double h = cls.size_mean.z * (1.0 + cls.size_spread * rng.uniform(-1, 1));
  SurfaceSampler s;
  if (cls.name == "bed") {
    add_bed(s, w, d, h, rng);
  } else if (cls.name == "table") {
    add_table(s, w, d, h, rng);
  } else if (cls.name == "chair") {
    add_chair(s, w, d, h, rng);
  } else if (cls.name == "cabinet") {
    add_cabinet(s, w, d, h, rng);
  } else {
    s.add_cuboid({-w / 2, -d / 2, 0}, {w / 2, d / 2, h});
  }
  Prototype p;
  p.points = s.sample(kPrototypePoints, rng);
  p.box = Aabb{{0, 0, h / 2}, {w, d, h}};
  p.surface_area = s.area();
  return p;
}

bool is_quarter_turn(double yaw, int& turns) {
  const double q = yaw / (std::numbers::pi / 2);
  const double r = std::round(q);
  if (std::abs(q - r) > 1e-12) return false;
  turns = ((static_cast<int>(r) % 4) + 4) % 4;
  return true;
}

Vec3 quarter_rotate(const Vec3& p, int turns) {
  switch (turns) {
    case 1: return {-p.y, p.x, p.z};
    case 2: return {-p.x, -p.y, p.z};
    case 3: return {p.y, -p.x, p.z};
    default: return p;
  }
}

}  // namespace

std::vector<Aabb> Scene::boxes() const {
  std::vector<Aabb> out;
  out.reserve(objects.size());
  for (const auto& o : objects) out.push_back(o.box);
  return out;
}

std::vector<std::string> DomainSpec::class_names() const {
  std::vector<std::string> n;
  for (const auto& c : classes) n.push_back(c.name);
  return n;
}

std::vector<double> DomainSpec::frequencies() const {
  std::vector<double> f;
  for (const auto& c : classes) f.push_back(c.frequency);
  return f;
}

void DomainSpec::validate() const {
  if (classes.size() < 2) throw ConfigError("domain needs at least 2 classes");
  for (const auto& c : classes) {
    if (!(c.frequency > 0)) throw ConfigError("class '" + c.name + "': frequency must be positive");
    if (!(c.size_scale > 0)) throw ConfigError("class '" + c.name + "': size_scale must be positive");
  }
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
  if (min_objects < 3 || max_objects > 20 || min_objects > max_objects) {
    throw ConfigError("object count range must lie within [3, 20]");
  }
  if (floor_fraction < 0 || floor_fraction >= 1) throw ConfigError("floor_fraction must be in [0, 1)");
  if (prototypes_per_class < 1) throw ConfigError("prototypes_per_class must be >= 1");
}

bool ObjectBank::empty() const {
  return std::all_of(prototypes.begin(), prototypes.end(), [](const auto& v) { return v.empty(); });
}

DomainSpec default_source_spec() {
  DomainSpec d;
  d.classes = {
      {"bed", {2.0, 1.6, 0.9}, 0.1, 0.15, 1.0},
      {"table", {1.2, 0.8, 0.75}, 0.15, 0.30, 1.0},
      {"chair", {0.5, 0.5, 0.9}, 0.1, 0.45, 1.0},
      {"cabinet", {0.9, 0.5, 1.3}, 0.15, 0.10, 1.0},
  };
  d.placement = Placement::grid;
  d.free_yaw = false;
  return d;
}

DomainSpec default_target_spec() {
  DomainSpec d = default_source_spec();
  d.classes[0].frequency = 0.25;
  d.classes[1].frequency = 0.25;
  d.classes[2].frequency = 0.25;
  d.classes[3].frequency = 0.25;
  d.classes[0].size_scale = 1.2;
  d.classes[1].size_scale = 0.9;
  d.classes[2].size_scale = 1.1;
  d.classes[3].size_scale = 1.15;
  d.placement = Placement::jittered;
  d.free_yaw = true;
  d.clutter_points = 150;
  d.noise_sigma = 0.02;
  d.dropout = 0.1;
  d.occlusion = true;
  return d;
}

ObjectBank build_object_bank(const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  ObjectBank bank;
  bank.frequencies = spec.frequencies();
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    Rng rng(derive_seed({seed, 0xB4A7ULL, c}));
    auto& protos = bank.prototypes.emplace_back();
    for (int i = 0; i < std::max(8, spec.prototypes_per_class); ++i) {
      protos.push_back(make_prototype(spec.classes[c], rng));
    }
  }
  return bank;
}

PlacedObject place_prototype(const Prototype& proto, const Vec3& scale, double yaw,
                             double floor_x, double floor_y, double floor_z) {
  PlacedObject out;
  const Vec3 offset{floor_x, floor_y, floor_z};
  const Vec3 cbox = proto.box.center;
  auto scaled = [&](const Vec3& p) {
    return Vec3{(p.x - cbox.x) * scale.x, (p.y - cbox.y) * scale.y, p.z * scale.z};
  };
  const double height = proto.box.size.z * scale.z;
  int turns = 0;
  out.points.reserve(proto.points.size());
  if (is_quarter_turn(yaw, turns)) {
    for (const auto& p : proto.points) out.points.push_back(quarter_rotate(scaled(p), turns) + offset);
    Vec3 ext{proto.box.size.x * scale.x, proto.box.size.y * scale.y, height};
    if (turns % 2 == 1) std::swap(ext.x, ext.y);
    out.box = Aabb{{floor_x, floor_y, floor_z + height / 2}, ext};
    return out;
  }
  Vec3 lo{1e300, 1e300, floor_z}, hi{-1e300, -1e300, floor_z + height};
  for (const auto& p : proto.points) {
    const Vec3 q = rotate_yaw(scaled(p), {0, 0, 0}, yaw) + offset;
    lo.x = std::min(lo.x, q.x);
    lo.y = std::min(lo.y, q.y);
    hi.x = std::max(hi.x, q.x);
    hi.y = std::max(hi.y, q.y);
    out.points.push_back(q);
  }
  out.box = Aabb::from_corners(lo, hi);
  return out;
}

std::vector<std::size_t> visible_indices(std::span<const Vec3> points, const Aabb& room,
                                         double floor_z, const ScanParams& scan,
                                         std::uint64_t seed) {
  std::vector<bool> visible(points.size(), false);
  Rng rng(seed);
  const double phase = rng.uniform(0.0, kTwoPi);
  const double radius =
      scan.ring_fraction * 0.5 * std::min(room.size.x, room.size.y);
  const double bin = scan.bin_degrees * std::numbers::pi / 180.0;
  const auto az_bins = static_cast<long long>(std::ceil(kTwoPi / bin));
  struct Entry {
    long long key;
    double dist;
    std::size_t idx;
  };
  std::vector<Entry> entries(points.size());
  for (int c = 0; c < std::max(1, scan.cameras); ++c) {
    const double ang = phase + kTwoPi * c / std::max(1, scan.cameras);
    const Vec3 cam{room.center.x + radius * std::cos(ang), room.center.y + radius * std::sin(ang),
                   floor_z + scan.eye_height};
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 v = points[i] - cam;
      const double az = std::atan2(v.y, v.x) + std::numbers::pi;
      const double el = std::atan2(v.z, std::hypot(v.x, v.y)) + std::numbers::pi / 2;
      const auto ia = std::min(az_bins - 1, static_cast<long long>(az / bin));
      const auto ie = static_cast<long long>(el / bin);
      entries[i] = {ie * az_bins + ia, v.norm(), i};
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return std::tie(a.key, a.dist, a.idx) < std::tie(b.key, b.dist, b.idx);
    });
    int run = 0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      run = (k > 0 && entries[k].key == entries[k - 1].key) ? run + 1 : 0;
      if (run < scan.keep_per_bin) visible[entries[k].idx] = true;
    }
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (visible[i]) keep.push_back(i);
  }
  return keep;
}

Scene select_points(const Scene& scene, std::span<const std::size_t> keep) {
  constexpr std::size_t kDropped = static_cast<std::size_t>(-1);
  std::vector<std::size_t> remap(scene.points.size(), kDropped);
  Scene out;
  out.floor_z = scene.floor_z;
  out.room_bounds = scene.room_bounds;
  out.points.reserve(keep.size());
  for (std::size_t i : keep) {
    remap[i] = out.points.size();
    out.points.push_back(scene.points[i]);
  }
  for (const auto& o : scene.objects) {
    SceneObject n{o.class_id, o.box, {}};
    for (std::size_t i : o.point_indices) {
      if (remap[i] != kDropped) n.point_indices.push_back(remap[i]);
    }
    out.objects.push_back(std::move(n));
  }
  return out;
}

Scene gen_scene(const DomainSpec& domain, const ObjectBank& bank, std::uint64_t seed) {
  domain.validate();
  if (bank.num_classes() != domain.classes.size()) {
    throw ConfigError("object bank class count does not match the domain");
  }
  const Aabb room{{0, 0, domain.room_size.z / 2}, domain.room_size};
  const double floor_z = 0.0;
  const auto freqs = domain.frequencies();

  struct Instance {
    int class_id;
    const Prototype* proto;
    PlacedObject placed;
    double area;
  };
  std::vector<Instance> placed;
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    placed.clear();
    const auto target_count = rng.integer(domain.min_objects, domain.max_objects);
    const int cells_x = std::max(1, static_cast<int>(domain.room_size.x / domain.grid_cell));
    const int cells_y = std::max(1, static_cast<int>(domain.room_size.y / domain.grid_cell));
    for (long long n = 0; n < target_count; ++n) {
      const auto cls = sample_index(freqs, rng);
      const auto& protos = bank.prototypes[cls];
      if (protos.empty()) continue;
      const Prototype& proto = protos[static_cast<std::size_t>(rng.integer(0, static_cast<long long>(protos.size()) - 1))];
      const double s = domain.classes[cls].size_scale;
      const Vec3 scale{s * rng.uniform(0.95, 1.05), s * rng.uniform(0.95, 1.05), s * rng.uniform(0.95, 1.05)};
      const double yaw = domain.free_yaw ? rng.uniform(0.0, kTwoPi)
                                         : static_cast<double>(rng.integer(0, 3)) * std::numbers::pi / 2;
      for (int r = 0; r < domain.max_retries; ++r) {
        double fx = 0, fy = 0;
        if (domain.placement == Placement::grid) {
          const auto ix = rng.integer(0, cells_x - 1);
          const auto iy = rng.integer(0, cells_y - 1);
          fx = room.min_corner().x + (static_cast<double>(ix) + 0.5) * domain.room_size.x / cells_x +
               rng.normal(0.0, domain.placement_jitter);
          fy = room.min_corner().y + (static_cast<double>(iy) + 0.5) * domain.room_size.y / cells_y +
               rng.normal(0.0, domain.placement_jitter);
        } else {
          fx = rng.uniform(room.min_corner().x, room.max_corner().x);
          fy = rng.uniform(room.min_corner().y, room.max_corner().y);
        }
        PlacedObject po = place_prototype(proto, scale, yaw, fx, fy, floor_z);
        if (!room.contains(po.box, 1e-9)) continue;
        const bool collides = std::any_of(placed.begin(), placed.end(), [&](const Instance& o) {
          return iou(o.placed.box, po.box) > 0.01;
        });
        if (collides) continue;
        const double area = proto.surface_area * (scale.x * scale.y + scale.x * scale.z + scale.y * scale.z) / 3.0;
        placed.push_back({static_cast<int>(cls), &proto, std::move(po), area});
        break;
      }
    }
    if (placed.size() >= 3) break;
  }
  if (placed.size() < 3) throw std::runtime_error("gen_scene: could not place 3 objects");

  Scene scene;
  scene.floor_z = floor_z;
  scene.room_bounds = room;
  const int total = domain.points_per_scene;
  const int object_budget = static_cast<int>(std::lround(total * (1.0 - domain.floor_fraction)));
  double area_sum = 0;
  for (const auto& inst : placed) area_sum += inst.area;
  for (const auto& inst : placed) {
    const int count = std::max(8, static_cast<int>(std::lround(object_budget * inst.area / area_sum)));
    std::vector<std::size_t> order(inst.placed.points.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    SceneObject obj{inst.class_id, inst.placed.box, {}};
    for (int k = 0; k < count; ++k) {
      obj.point_indices.push_back(scene.points.size());
      scene.points.push_back(inst.placed.points[order[static_cast<std::size_t>(k) % order.size()]]);
    }
    scene.objects.push_back(std::move(obj));
  }
  const Vec3 lo = room.min_corner(), hi = room.max_corner();
  while (static_cast<int>(scene.points.size()) < total) {
    scene.points.push_back({rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), floor_z});
  }
  if (domain.clutter_points > 0) {
    const int wall = domain.clutter_points / 2;
    for (int k = 0; k < wall; ++k) {
      const auto side = rng.integer(0, 3);
      const double t = rng.uniform(0, 1);
      const double z = rng.uniform(floor_z, floor_z + 2.5);
      Vec3 p{};
      switch (side) {
        case 0: p = {lo.x, lo.y + t * (hi.y - lo.y), z}; break;
        case 1: p = {hi.x, lo.y + t * (hi.y - lo.y), z}; break;
        case 2: p = {lo.x + t * (hi.x - lo.x), lo.y, z}; break;
        default: p = {lo.x + t * (hi.x - lo.x), hi.y, z}; break;
      }
      scene.points.push_back(p);
    }
    const int blobs = static_cast<int>(rng.integer(1, 3));
    const int blob_points = domain.clutter_points - wall;
    for (int b = 0; b < blobs; ++b) {
      const Vec3 c{rng.uniform(lo.x + 0.3, hi.x - 0.3), rng.uniform(lo.y + 0.3, hi.y - 0.3), floor_z + rng.uniform(0.1, 0.4)};
      const int n = blob_points / blobs + (b < blob_points % blobs ? 1 : 0);
      for (int k = 0; k < n; ++k) {
        Vec3 p{c.x + rng.normal(0, 0.12), c.y + rng.normal(0, 0.12), c.z + rng.normal(0, 0.08)};
        p.z = std::max(p.z, floor_z);
        scene.points.push_back(p);
      }
    }
  }

  // Random storage order so index order carries no structure.
  std::vector<std::size_t> perm(scene.points.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<std::size_t> inverse(perm.size());
  std::vector<Vec3> shuffled(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled[i] = scene.points[perm[i]];
    inverse[perm[i]] = i;
  }
  scene.points = std::move(shuffled);
  for (auto& o : scene.objects) {
    for (auto& i : o.point_indices) i = inverse[i];
    std::sort(o.point_indices.begin(), o.point_indices.end());
  }

  if (domain.occlusion) {
    const auto keep = visible_indices(scene.points, room, floor_z, domain.scan, rng.engine()());
    scene = select_points(scene, keep);
  }
  if (domain.noise_sigma > 0) {
    for (auto& p : scene.points) {
      p += Vec3{rng.normal(0, domain.noise_sigma), rng.normal(0, domain.noise_sigma),
                rng.normal(0, domain.noise_sigma)};
    }
    for (auto& o : scene.objects) {
      std::erase_if(o.point_indices, [&](std::size_t i) { return !o.box.contains(scene.points[i], 1e-6); });
    }
  }
  if (domain.dropout > 0) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < scene.points.size(); ++i) {
      if (!rng.bernoulli(domain.dropout)) keep.push_back(i);
    }
    scene = select_points(scene, keep);
  }
  return scene;
}

// --- Serialization -----------------------------------------------------------

json scene_to_json(const Scene& s) {
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back(json::array({p.x, p.y, p.z}));
  json objs = json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"class_id", o.class_id},
                    {"center", o.box.center},
                    {"size", o.box.size},
                    {"point_indices", o.point_indices}});
  }
  return {{"points", std::move(pts)},
          {"objects", std::move(objs)},
          {"floor_z", s.floor_z},
          {"room_bounds", s.room_bounds}};
}

Scene scene_from_json(const json& j) {
  Scene s;
  for (const auto& p : j.at("points")) s.points.push_back(p.get<Vec3>());
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    obj.class_id = o.at("class_id").get<int>();
    obj.box = Aabb{o.at("center").get<Vec3>(), o.at("size").get<Vec3>()};
    obj.point_indices = o.at("point_indices").get<std::vector<std::size_t>>();
    for (std::size_t i : obj.point_indices) {
      if (i >= s.points.size()) throw ParseError("point index out of range");
    }
    s.objects.push_back(std::move(obj));
  }
  s.floor_z = j.at("floor_z").get<double>();
  s.room_bounds = j.at("room_bounds").get<Aabb>();
  return s;
}

void write_scenes(std::span<const Scene> scenes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& s : scenes) out << scene_to_json(s).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Scene> read_scenes(const std::filesystem::path& path, std::ptrdiff_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Scene> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      scenes.push_back(scene_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": malformed scene record " << scenes.size() << ": "
          << e.what();
      throw ParseError(msg.str());
    }
  }
  if (!scenes.empty() && !in.eof()) throw ParseError(path.string() + ": read error");
  if (expected_count >= 0 && static_cast<std::ptrdiff_t>(scenes.size()) != expected_count) {
    std::ostringstream msg;
    msg << path.string() << ": expected " << expected_count << " scene records, found " << scenes.size()
        << " (truncated file?)";
    throw ParseError(msg.str());
  }
  return scenes;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json meta{{"class_names", ds.class_names},
                  {"frequencies", ds.frequencies},
                  {"spec", ds.spec},
                  {"bank_seed", ds.bank_seed},
                  {"num_scenes", ds.scenes.size()}};
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
  write_scenes(ds.scenes, dir / "scenes.jsonl");
}

Dataset make_dataset(const DomainSpec& spec, std::uint64_t bank_seed, std::uint64_t seed, std::size_t count) {
  spec.validate();
  const ObjectBank bank = build_object_bank(spec, bank_seed);
  Dataset ds{spec.class_names(), spec.frequencies(), spec, bank_seed, {}};
  ds.scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ds.scenes.push_back(gen_scene(spec, bank, derive_seed({seed, i})));
  return ds;
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw ParseError("cannot open " + (dir / "meta.json").string());
  Dataset ds;
  std::ptrdiff_t count = 0;
  try {
    const json meta = json::parse(in);
    ds.class_names = meta.at("class_names").get<std::vector<std::string>>();
    ds.frequencies = meta.at("frequencies").get<std::vector<double>>();
    ds.spec = meta.value("spec", json::object());
    ds.bank_seed = meta.value("bank_seed", std::uint64_t{0});
    count = meta.at("num_scenes").get<std::ptrdiff_t>();
  } catch (const json::exception& e) {
    throw ParseError((dir / "meta.json").string() + ": " + e.what());
  }
  ds.scenes = read_scenes(dir / "scenes.jsonl", count);
  return ds;
}

}  // namespace ohda
