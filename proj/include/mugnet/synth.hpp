#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mugnet/kv_config.hpp"
#include "mugnet/pointcloud.hpp"

namespace mugnet {

enum class PrimitiveKind { Plane, Box, Cylinder, Blob };

// One labeled surface of a synthetic scene.
//   plane:    parallelogram origin + s*u + t*v
//   box:      axis-aligned, min corner `origin`, extents `size`; top and four
//             sides are sampled (it stands on something)
//   cylinder: vertical, base center `origin`, lateral surface and top cap
//   blob:     isotropic Gaussian ball around `origin`
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Plane;
  int class_id = 0;
  Point3 origin{0, 0, 0};
  Point3 u{1, 0, 0};
  Point3 v{0, 1, 0};
  Point3 size{1, 1, 1};
  double radius = 0.5;
  double height = 1.0;
  double sigma = 0.25;
  std::optional<double> density;  // points per square meter
  std::optional<Point3> color;
  bool movable = false;  // shifted in xy by the recipe's jitter
};

double surface_area(const Primitive& p);

struct SceneRecipe {
  std::vector<Primitive> primitives;
  // When set, this many points are spread over primitives proportionally to
  // area. Otherwise each primitive gets density * area points.
  std::optional<std::size_t> points;
  double density = 100.0;
  double noise = 0.0;   // Gaussian sigma on every coordinate (m)
  double jitter = 0.0;  // uniform xy offset range for movable primitives (m)
  bool colors = false;
  std::vector<std::string> class_names;

  int num_classes() const;

  static SceneRecipe from_config(const KvConfig& cfg);
  KvConfig to_config() const;
};

// 10 x 8 m floor (class 0), four 3 m walls (class 1) and two movable boxes
// (class 2).
SceneRecipe default_room_recipe(std::size_t points = 50000);

// Deterministic for a given recipe and seed.
PointCloud synth_scene(const SceneRecipe& recipe, std::uint64_t seed);

}  // namespace mugnet
