#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace mugnet {

using Point3 = std::array<double, 3>;

// Positions in meters, optional rgb in [0,1], optional class labels.
struct PointCloud {
  std::vector<Point3> positions;
  std::optional<std::vector<Point3>> colors;
  std::optional<std::vector<int>> labels;

  std::size_t size() const { return positions.size(); }
  bool has_colors() const { return colors.has_value(); }
  bool has_labels() const { return labels.has_value(); }

  // Throws ValidationError on empty clouds, non-finite positions, mismatched
  // attribute lengths, or labels outside [0, num_classes) when given.
  void validate(std::optional<int> num_classes = std::nullopt) const;
  int max_label() const;
};

enum class CloudFormat { XyzText, PlyAscii };

CloudFormat format_from_path(const std::filesystem::path& path);

PointCloud read_xyz(std::istream& in);
PointCloud read_ply(std::istream& in);
void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_ply(std::ostream& out, const PointCloud& cloud);

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format,
                      std::optional<int> num_classes = std::nullopt);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);

}  // namespace mugnet
