#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aoi {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Raster containers. Pixel origin is top-left, x rightward, y downward.
struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major RGB triples

  ColorImage() = default;
  ColorImage(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

  std::uint8_t& at(int x, int y, int ch) { return data[(static_cast<size_t>(y) * width + x) * 3 + ch]; }
  std::uint8_t at(int x, int y, int ch) const { return data[(static_cast<size_t>(y) * width + x) * 3 + ch]; }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major intensities

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Values are {0,1}; rendering to 8-bit multiplies by 255.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryImage() = default;
  BinaryImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Half-open box: [xmin, xmax) x [ymin, ymax).
struct BoundingBox {
  int xmin = 0;
  int ymin = 0;
  int xmax = 0;
  int ymax = 0;

  int width() const { return xmax - xmin; }
  int height() const { return ymax - ymin; }
  std::int64_t area() const { return static_cast<std::int64_t>(width()) * height(); }
  bool valid() const { return xmin >= 0 && ymin >= 0 && xmin < xmax && ymin < ymax; }
  bool contains(const BoundingBox& other) const {
    return other.xmin >= xmin && other.ymin >= ymin && other.xmax <= xmax && other.ymax <= ymax;
  }
  bool operator==(const BoundingBox&) const = default;
};

double bbox_iou(const BoundingBox& a, const BoundingBox& b);

enum class DefectClass : int {
  missing_hole = 0,
  mouse_bite = 1,
  open_circuit = 2,
  short_circuit = 3,  // serialized as "short"
  spur = 4,
  spurious_copper = 5,
};

inline constexpr int kNumDefectClasses = 6;

// Lowercase-with-underscores name used in annotation files ("short" for short_circuit).
std::string_view defect_class_name(DefectClass c);
// Folder form: first letter capitalized, e.g. "Missing_hole".
std::string defect_class_folder(DefectClass c);
std::optional<DefectClass> defect_class_from_name(std::string_view name);

struct Detection {
  BoundingBox box;
  std::optional<DefectClass> cls;
  double score = 0.0;  // component area during localization, classifier confidence afterwards
};

struct Annotation {
  std::string filename;
  int width = 0;
  int height = 0;
  int depth = 3;
  std::vector<std::pair<DefectClass, BoundingBox>> objects;
};

// 4-DOF similarity: p -> scale * R(angle) * p + (tx, ty).
// Positive angle rotates counter-clockwise in image coordinates (y down).
struct Similarity2D {
  double scale = 1.0;
  double angle = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;
};

Vec2 transform_apply(const Similarity2D& t, Vec2 p);
// compose(a, b) applies b first, then a.
Similarity2D compose(const Similarity2D& a, const Similarity2D& b);
Similarity2D inverse(const Similarity2D& t);
// Rotation about the pixel-center of a w x h raster (exact permutation at 90-degree steps).
Similarity2D rotation_about_center(double angle_rad, int w, int h);

}  // namespace aoi
