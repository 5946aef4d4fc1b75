#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ohda/geometry.hpp"
#include "ohda/json_util.hpp"

namespace ohda {

struct SceneObject {
  int class_id = 0;
  Aabb box;
  std::vector<std::size_t> point_indices;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::vector<Vec3> points;
  std::vector<SceneObject> objects;
  double floor_z = 0.0;
  Aabb room_bounds;

  bool operator==(const Scene&) const = default;
  std::vector<Aabb> boxes() const;
};

enum class Placement { grid, jittered };
NLOHMANN_JSON_SERIALIZE_ENUM(Placement, {{Placement::grid, "grid"}, {Placement::jittered, "jittered"}})

struct ClassSpec {
  std::string name;
  Vec3 size_mean;
  double size_spread = 0.1;  // relative half-range of prototype extents
  double frequency = 1.0;
  double size_scale = 1.0;   // domain-specific multiplier on instance extents
};

/// Occlusion model shared by target-domain generation and virtual scanning:
/// cameras on a ring at eye height, points binned by viewing direction, the
/// nearest `keep_per_bin` points of each bin are visible.
struct ScanParams {
  int cameras = 4;
  double ring_fraction = 0.8;  // ring radius relative to half the room's smaller side
  double eye_height = 1.6;
  double bin_degrees = 2.0;
  int keep_per_bin = 2;
};

struct DomainSpec {
  std::vector<ClassSpec> classes;
  Vec3 room_size{6.0, 6.0, 3.0};
  int points_per_scene = 2048;
  double floor_fraction = 0.2;
  int min_objects = 3;
  int max_objects = 10;
  Placement placement = Placement::grid;
  double grid_cell = 1.5;
  double placement_jitter = 0.05;  // grid-center jitter (grid) in meters
  bool free_yaw = false;           // false: quarter-turn orientations only
  int clutter_points = 0;
  double noise_sigma = 0.0;
  double dropout = 0.0;
  bool occlusion = false;
  ScanParams scan;
  int prototypes_per_class = 8;
  int max_retries = 50;

  std::vector<std::string> class_names() const;
  std::vector<double> frequencies() const;
  void validate() const;
};

/// Canonical-pose object: centered in x/y, resting on z = 0.
struct Prototype {
  std::vector<Vec3> points;
  Aabb box;
  double surface_area = 0.0;
};

struct ObjectBank {
  std::vector<std::vector<Prototype>> prototypes;  // per class
  std::vector<double> frequencies;                 // per class

  std::size_t num_classes() const { return prototypes.size(); }
  bool empty() const;
};

DomainSpec default_source_spec();
DomainSpec default_target_spec();

ObjectBank build_object_bank(const DomainSpec& spec, std::uint64_t seed);

Scene gen_scene(const DomainSpec& domain, const ObjectBank& bank, std::uint64_t seed);

/// Indices of points that survive the occlusion model, ascending.
std::vector<std::size_t> visible_indices(std::span<const Vec3> points, const Aabb& room,
                                         double floor_z, const ScanParams& scan,
                                         std::uint64_t seed);

/// Keeps the listed points (ascending indices) and remaps object memberships.
Scene select_points(const Scene& scene, std::span<const std::size_t> keep);

/// Object instance placement used by both generation and mixing: the
/// prototype scaled per-axis, rotated by `yaw` about its vertical axis and
/// dropped at `floor_pos` (x, y on the floor plane).
struct PlacedObject {
  std::vector<Vec3> points;
  Aabb box;
};
PlacedObject place_prototype(const Prototype& proto, const Vec3& scale, double yaw,
                             double floor_x, double floor_y, double floor_z);

// --- Serialization -----------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<double> frequencies;
  json spec;  // echo of the generating DomainSpec
  std::uint64_t bank_seed = 0;  // rebuilds the object bank used for the scenes
  std::vector<Scene> scenes;
};

/// `count` scenes of `spec`, scene i seeded from (seed, i).
Dataset make_dataset(const DomainSpec& spec, std::uint64_t bank_seed, std::uint64_t seed, std::size_t count);

json scene_to_json(const Scene& s);
Scene scene_from_json(const json& j);

void write_scenes(std::span<const Scene> scenes, const std::filesystem::path& path);
std::vector<Scene> read_scenes(const std::filesystem::path& path,
                               std::ptrdiff_t expected_count = -1);

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ClassSpec, name, size_mean, size_spread, frequency, size_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScanParams, cameras, ring_fraction, eye_height, bin_degrees,
                                   keep_per_bin)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DomainSpec, classes, room_size, points_per_scene, floor_fraction,
                                   min_objects, max_objects, placement, grid_cell, placement_jitter,
                                   free_yaw, clutter_points, noise_sigma, dropout, occlusion, scan,
                                   prototypes_per_class, max_retries)

}  // namespace ohda
