#include "mugnet/pointcloud.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "mugnet/errors.hpp"
#include "mugnet/kv_config.hpp"

namespace mugnet {

void PointCloud::validate(std::optional<int> num_classes) const {
  if (positions.empty()) throw ValidationError("point cloud is empty");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (double v : positions[i]) {
      if (!std::isfinite(v)) {
        throw ValidationError("point " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
  }
  if (colors && colors->size() != positions.size()) {
    throw ValidationError("color count does not match point count");
  }
  if (labels) {
    if (labels->size() != positions.size()) {
      throw ValidationError("label count does not match point count");
    }
    for (std::size_t i = 0; i < labels->size(); ++i) {
      const int l = (*labels)[i];
      if (l < 0 || (num_classes && l >= *num_classes)) {
        throw ValidationError("point " + std::to_string(i) + " has label " + std::to_string(l) +
                              (num_classes ? " outside [0, " + std::to_string(*num_classes) + ")"
                                           : " below zero"));
      }
    }
  }
}

int PointCloud::max_label() const {
  if (!labels || labels->empty()) return -1;
  return *std::max_element(labels->begin(), labels->end());
}

CloudFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ply" ? CloudFormat::PlyAscii : CloudFormat::XyzText;
}

namespace {

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

double number(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("'" + tok + "' is not a number", line);
  return v;
}

int integer(const std::string& tok, std::size_t line) {
  int v = 0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("'" + tok + "' is not an integer", line);
  return v;
}

void write_number(std::ostream& out, double v) { out << format_double(v); }

}  // namespace

PointCloud read_xyz(std::istream& in) {
  PointCloud cloud;
  std::vector<Point3> colors;
  std::vector<int> labels;
  std::size_t columns = 0;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    const auto tok = tokens_of(raw);
    if (tok.empty()) continue;
    if (tok.size() != 3 && tok.size() != 4 && tok.size() != 6 && tok.size() != 7) {
      throw ParseError("expected 3, 4, 6 or 7 columns, got " + std::to_string(tok.size()), line);
    }
    if (columns == 0) columns = tok.size();
    if (tok.size() != columns) {
      throw ParseError("column count changed from " + std::to_string(columns) + " to " +
                       std::to_string(tok.size()), line);
    }
    cloud.positions.push_back({number(tok[0], line), number(tok[1], line), number(tok[2], line)});
    if (columns >= 6) colors.push_back({number(tok[3], line), number(tok[4], line), number(tok[5], line)});
    if (columns == 4 || columns == 7) labels.push_back(integer(tok.back(), line));
  }
  if (columns >= 6) cloud.colors = std::move(colors);
  if (columns == 4 || columns == 7) cloud.labels = std::move(labels);
  return cloud;
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    write_number(out, p[0]);
    out << ' ';
    write_number(out, p[1]);
    out << ' ';
    write_number(out, p[2]);
    if (cloud.colors) {
      for (double c : (*cloud.colors)[i]) {
        out << ' ';
        write_number(out, c);
      }
    }
    if (cloud.labels) out << ' ' << (*cloud.labels)[i];
    out << '\n';
  }
}

PointCloud read_ply(std::istream& in) {
  std::string raw;
  std::size_t line = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, raw)) return false;
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    return true;
  };
  if (!next_line() || trim(raw) != "ply") throw ParseError("missing 'ply' magic", line == 0 ? 1 : line);

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (true) {
    if (!next_line()) throw ParseError("unterminated PLY header", line);
    const auto tok = tokens_of(raw);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw ParseError("only ascii PLY is supported", line);
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("malformed element line", line);
      Element e;
      e.name = tok[1];
      try {
        e.count = std::stoul(tok[2]);
      } catch (const std::exception&) {
        throw ParseError("bad element count '" + tok[2] + "'", line);
      }
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before element", line);
      if (tok.size() >= 2 && tok[1] == "list") {
        elements.back().has_list = true;
        elements.back().props.push_back(tok.back());
      } else {
        if (tok.size() != 3) throw ParseError("malformed property line", line);
        elements.back().props.push_back(tok[2]);
      }
    } else {
      throw ParseError("unexpected header line '" + raw + "'", line);
    }
  }
  if (!ascii) throw ParseError("PLY format line missing", line);

  PointCloud cloud;
  bool found_vertex = false;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) {
        if (!next_line()) throw ParseError("truncated element '" + e.name + "'", line);
      }
      continue;
    }
    found_vertex = true;
    auto col = [&](const std::string& name) -> std::optional<std::size_t> {
      auto it = std::find(e.props.begin(), e.props.end(), name);
      if (it == e.props.end()) return std::nullopt;
      return static_cast<std::size_t>(it - e.props.begin());
    };
    const auto cx = col("x"), cy = col("y"), cz = col("z");
    if (!cx || !cy || !cz) throw ParseError("vertex element lacks x/y/z", line);
    const auto cr = col("red"), cg = col("green"), cb = col("blue");
    const bool rgb = cr && cg && cb;
    const auto cl = col("label");
    std::vector<Point3> colors;
    std::vector<int> labels;
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!next_line()) throw ParseError("truncated vertex list", line);
      const auto tok = tokens_of(raw);
      if (tok.size() != e.props.size()) {
        throw ParseError("expected " + std::to_string(e.props.size()) + " values, got " +
                         std::to_string(tok.size()), line);
      }
      cloud.positions.push_back({number(tok[*cx], line), number(tok[*cy], line), number(tok[*cz], line)});
      if (rgb) {
        colors.push_back({number(tok[*cr], line) / 255.0, number(tok[*cg], line) / 255.0,
                          number(tok[*cb], line) / 255.0});
      }
      if (cl) labels.push_back(integer(tok[*cl], line));
    }
    if (rgb) cloud.colors = std::move(colors);
    if (cl) cloud.labels = std::move(labels);
  }
  if (!found_vertex) throw ParseError("PLY has no vertex element", line);
  return cloud;
}

void write_ply(std::ostream& out, const PointCloud& cloud) {
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.labels) out << "property int label\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    write_number(out, p[0]);
    out << ' ';
    write_number(out, p[1]);
    out << ' ';
    write_number(out, p[2]);
    if (cloud.colors) {
      for (double c : (*cloud.colors)[i]) {
        out << ' ' << static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
      }
    }
    if (cloud.labels) out << ' ' << (*cloud.labels)[i];
    out << '\n';
  }
}

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format,
                      std::optional<int> num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open point cloud " + path.string());
  PointCloud cloud = format == CloudFormat::PlyAscii ? read_ply(in) : read_xyz(in);
  cloud.validate(num_classes);
  return cloud;
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write point cloud " + path.string());
  if (format == CloudFormat::PlyAscii) {
    write_ply(out, cloud);
  } else {
    write_xyz(out, cloud);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mugnet
