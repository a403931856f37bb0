#include "mugnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "mugnet/errors.hpp"

namespace mugnet {

namespace {

constexpr double kPi = std::numbers::pi;

// Engine output is fully specified by the standard; the mapping to [0,1) is
// done here so scenes are identical across standard libraries.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

Point3 cross(const Point3& a, const Point3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double length(const Point3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

Point3 sample_on(const Primitive& p, Sampler& s) {
  switch (p.kind) {
    case PrimitiveKind::Plane: {
      const double a = s.uniform(), b = s.uniform();
      return {p.origin[0] + a * p.u[0] + b * p.v[0], p.origin[1] + a * p.u[1] + b * p.v[1],
              p.origin[2] + a * p.u[2] + b * p.v[2]};
    }
    case PrimitiveKind::Box: {
      const double dx = p.size[0], dy = p.size[1], dz = p.size[2];
      const double faces[5] = {dx * dy, dx * dz, dx * dz, dy * dz, dy * dz};
      double pick = s.uniform() * (faces[0] + faces[1] + faces[2] + faces[3] + faces[4]);
      int f = 0;
      while (f < 4 && pick >= faces[f]) pick -= faces[f++];
      const double a = s.uniform(), b = s.uniform();
      const auto& o = p.origin;
      switch (f) {
        case 0: return {o[0] + a * dx, o[1] + b * dy, o[2] + dz};
        case 1: return {o[0] + a * dx, o[1], o[2] + b * dz};
        case 2: return {o[0] + a * dx, o[1] + dy, o[2] + b * dz};
        case 3: return {o[0], o[1] + a * dy, o[2] + b * dz};
        default: return {o[0] + dx, o[1] + a * dy, o[2] + b * dz};
      }
    }
    case PrimitiveKind::Cylinder: {
      const double side = 2.0 * kPi * p.radius * p.height;
      const double cap = kPi * p.radius * p.radius;
      const double theta = s.uniform(0.0, 2.0 * kPi);
      if (s.uniform() * (side + cap) < side) {
        return {p.origin[0] + p.radius * std::cos(theta), p.origin[1] + p.radius * std::sin(theta),
                p.origin[2] + s.uniform() * p.height};
      }
      const double r = p.radius * std::sqrt(s.uniform());
      return {p.origin[0] + r * std::cos(theta), p.origin[1] + r * std::sin(theta),
              p.origin[2] + p.height};
    }
    case PrimitiveKind::Blob:
      return {p.origin[0] + p.sigma * s.gaussian(), p.origin[1] + p.sigma * s.gaussian(),
              p.origin[2] + p.sigma * s.gaussian()};
  }
  return p.origin;
}

Point3 palette(int class_id) {
  static const Point3 colors[] = {{0.55, 0.45, 0.35}, {0.85, 0.85, 0.80}, {0.20, 0.40, 0.70},
                                  {0.70, 0.20, 0.20}, {0.25, 0.60, 0.30}, {0.80, 0.70, 0.20}};
  return colors[static_cast<std::size_t>(class_id) % std::size(colors)];
}

Point3 parse_point(const std::string& text, const std::string& key) {
  const auto v = parse_doubles(text);
  if (v.size() != 3) throw ConfigError(key + " needs three comma-separated numbers");
  return {v[0], v[1], v[2]};
}

std::string point_str(const Point3& p) {
  return format_double(p[0]) + "," + format_double(p[1]) + "," + format_double(p[2]);
}

const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Plane: return "plane";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Cylinder: return "cylinder";
    case PrimitiveKind::Blob: return "blob";
  }
  return "plane";
}

Primitive parse_primitive(const std::string& text) {
  std::istringstream is(text);
  std::string kind;
  is >> kind;
  Primitive p;
  if (kind == "plane") p.kind = PrimitiveKind::Plane;
  else if (kind == "box") p.kind = PrimitiveKind::Box;
  else if (kind == "cylinder") p.kind = PrimitiveKind::Cylinder;
  else if (kind == "blob") p.kind = PrimitiveKind::Blob;
  else throw ConfigError("unknown primitive kind '" + kind + "'");

  bool has_class = false;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("primitive attribute '" + tok + "' lacks '='");
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    const auto num = [&] {
      const auto v = parse_doubles(value);
      if (v.size() != 1) throw ConfigError(key + " needs one number");
      return v[0];
    };
    if (key == "class") {
      p.class_id = static_cast<int>(num());
      has_class = true;
    } else if (key == "origin" || key == "min" || key == "base" || key == "center") {
      p.origin = parse_point(value, key);
    } else if (key == "u") {
      p.u = parse_point(value, key);
    } else if (key == "v") {
      p.v = parse_point(value, key);
    } else if (key == "size") {
      p.size = parse_point(value, key);
    } else if (key == "radius") {
      p.radius = num();
    } else if (key == "height") {
      p.height = num();
    } else if (key == "sigma") {
      p.sigma = num();
    } else if (key == "density") {
      p.density = num();
    } else if (key == "color") {
      p.color = parse_point(value, key);
    } else if (key == "movable") {
      p.movable = value == "true" || value == "1" || value == "yes";
    } else {
      throw ConfigError("unknown primitive attribute '" + key + "'");
    }
  }
  if (!has_class) throw ConfigError("primitive '" + text + "' lacks class=");
  if (p.class_id < 0) throw ConfigError("primitive class ids must be nonnegative");
  if (!(surface_area(p) > 0.0)) throw ConfigError("primitive '" + text + "' has zero area");
  return p;
}

std::string primitive_str(const Primitive& p) {
  std::ostringstream os;
  os << kind_name(p.kind) << " class=" << p.class_id;
  switch (p.kind) {
    case PrimitiveKind::Plane:
      os << " origin=" << point_str(p.origin) << " u=" << point_str(p.u) << " v=" << point_str(p.v);
      break;
    case PrimitiveKind::Box:
      os << " min=" << point_str(p.origin) << " size=" << point_str(p.size);
      break;
    case PrimitiveKind::Cylinder:
      os << " base=" << point_str(p.origin) << " radius=" << format_double(p.radius)
         << " height=" << format_double(p.height);
      break;
    case PrimitiveKind::Blob:
      os << " center=" << point_str(p.origin) << " sigma=" << format_double(p.sigma);
      break;
  }
  if (p.density) os << " density=" << format_double(*p.density);
  if (p.color) os << " color=" << point_str(*p.color);
  if (p.movable) os << " movable=true";
  return os.str();
}

}  // namespace

double surface_area(const Primitive& p) {
  switch (p.kind) {
    case PrimitiveKind::Plane: return length(cross(p.u, p.v));
    case PrimitiveKind::Box:
      return p.size[0] * p.size[1] + 2.0 * (p.size[0] + p.size[1]) * p.size[2];
    case PrimitiveKind::Cylinder:
      return 2.0 * kPi * p.radius * p.height + kPi * p.radius * p.radius;
    case PrimitiveKind::Blob: return 4.0 * kPi * p.sigma * p.sigma;
  }
  return 0.0;
}

int SceneRecipe::num_classes() const {
  int c = static_cast<int>(class_names.size());
  for (const auto& p : primitives) c = std::max(c, p.class_id + 1);
  return c;
}

SceneRecipe SceneRecipe::from_config(const KvConfig& cfg) {
  cfg.require_known({"points", "density", "noise", "jitter", "colors", "class_names", "primitive"});
  SceneRecipe r;
  if (cfg.has("points")) {
    const long n = cfg.get_int("points", 0);
    if (n <= 0) throw ConfigError("points must be positive");
    r.points = static_cast<std::size_t>(n);
  }
  r.density = cfg.get_double("density", r.density);
  r.noise = cfg.get_double("noise", r.noise);
  r.jitter = cfg.get_double("jitter", r.jitter);
  r.colors = cfg.get_bool("colors", r.colors);
  if (auto names = cfg.get("class_names")) r.class_names = split_list(*names);
  for (const auto& text : cfg.get_all("primitive")) r.primitives.push_back(parse_primitive(text));
  return r;
}

KvConfig SceneRecipe::to_config() const {
  KvConfig cfg;
  if (points) cfg.add("points", std::to_string(*points));
  cfg.add("density", format_double(density));
  cfg.add("noise", format_double(noise));
  cfg.add("jitter", format_double(jitter));
  cfg.add("colors", colors ? "true" : "false");
  if (!class_names.empty()) {
    std::string joined;
    for (const auto& n : class_names) joined += (joined.empty() ? "" : ",") + n;
    cfg.add("class_names", joined);
  }
  for (const auto& p : primitives) cfg.add("primitive", primitive_str(p));
  return cfg;
}

SceneRecipe default_room_recipe(std::size_t points) {
  SceneRecipe r;
  r.points = points;
  r.noise = 0.005;
  r.jitter = 1.0;
  r.class_names = {"floor", "wall", "furniture"};
  auto plane = [](int cls, Point3 o, Point3 u, Point3 v) {
    Primitive p;
    p.kind = PrimitiveKind::Plane;
    p.class_id = cls;
    p.origin = o;
    p.u = u;
    p.v = v;
    return p;
  };
  auto box = [](Point3 min, Point3 size) {
    Primitive p;
    p.kind = PrimitiveKind::Box;
    p.class_id = 2;
    p.origin = min;
    p.size = size;
    p.movable = true;
    return p;
  };
  const double lx = 10.0, ly = 8.0, h = 3.0;
  r.primitives.push_back(plane(0, {0, 0, 0}, {lx, 0, 0}, {0, ly, 0}));
  r.primitives.push_back(plane(1, {0, 0, 0}, {lx, 0, 0}, {0, 0, h}));
  r.primitives.push_back(plane(1, {0, ly, 0}, {lx, 0, 0}, {0, 0, h}));
  r.primitives.push_back(plane(1, {0, 0, 0}, {0, ly, 0}, {0, 0, h}));
  r.primitives.push_back(plane(1, {lx, 0, 0}, {0, ly, 0}, {0, 0, h}));
  r.primitives.push_back(box({2.0, 2.0, 0.0}, {2.0, 1.5, 1.0}));
  r.primitives.push_back(box({6.0, 4.5, 0.0}, {1.5, 1.5, 0.8}));
  return r;
}

PointCloud synth_scene(const SceneRecipe& recipe, std::uint64_t seed) {
  if (recipe.primitives.empty()) throw ParameterError("scene recipe lists no primitives");
  Sampler s(seed);

  std::vector<Primitive> prims = recipe.primitives;
  for (auto& p : prims) {
    if (!p.movable || recipe.jitter <= 0.0) continue;
    p.origin[0] += s.uniform(-recipe.jitter, recipe.jitter);
    p.origin[1] += s.uniform(-recipe.jitter, recipe.jitter);
  }

  std::vector<std::size_t> counts(prims.size(), 0);
  if (recipe.points) {
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& p : prims) cdf.push_back(acc += surface_area(p));
    for (std::size_t i = 0; i < *recipe.points; ++i) {
      const double pick = s.uniform() * acc;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
      ++counts[std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), prims.size() - 1)];
    }
  } else {
    for (std::size_t i = 0; i < prims.size(); ++i) {
      const double d = prims[i].density.value_or(recipe.density);
      counts[i] = static_cast<std::size_t>(std::llround(d * surface_area(prims[i])));
    }
  }

  PointCloud cloud;
  std::vector<Point3> colors;
  std::vector<int> labels;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const auto& p = prims[i];
    const Point3 base = p.color.value_or(palette(p.class_id));
    for (std::size_t n = 0; n < counts[i]; ++n) {
      Point3 x = sample_on(p, s);
      if (recipe.noise > 0.0) {
        for (auto& c : x) c += recipe.noise * s.gaussian();
      }
      cloud.positions.push_back(x);
      labels.push_back(p.class_id);
      if (recipe.colors) {
        Point3 c = base;
        for (auto& ch : c) ch = std::clamp(ch + 0.03 * s.gaussian(), 0.0, 1.0);
        colors.push_back(c);
      }
    }
  }
  if (cloud.positions.empty()) throw ParameterError("scene recipe produced no points");
  cloud.labels = std::move(labels);
  if (recipe.colors) cloud.colors = std::move(colors);
  return cloud;
}

}  // namespace mugnet
