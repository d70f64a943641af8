#include "aoi/core.hpp"

#include <algorithm>
#include <cmath>

namespace aoi {

ColorImage::ColorImage(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    : width(w), height(h), data(static_cast<size_t>(w) * h * 3) {
  if (w < 1 || h < 1) throw std::invalid_argument("ColorImage: width and height must be >= 1");
  for (size_t i = 0; i < data.size(); i += 3) {
    data[i] = r;
    data[i + 1] = g;
    data[i + 2] = b;
  }
}

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
  if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: width and height must be >= 1");
}

BinaryImage::BinaryImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
  if (w < 1 || h < 1) throw std::invalid_argument("BinaryImage: width and height must be >= 1");
}

double bbox_iou(const BoundingBox& a, const BoundingBox& b) {
  const int ix0 = std::max(a.xmin, b.xmin);
  const int iy0 = std::max(a.ymin, b.ymin);
  const int ix1 = std::min(a.xmax, b.xmax);
  const int iy1 = std::min(a.ymax, b.ymax);
  const std::int64_t iw = std::max(0, ix1 - ix0);
  const std::int64_t ih = std::max(0, iy1 - iy0);
  const std::int64_t inter = iw * ih;
  if (inter == 0) return 0.0;
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {
constexpr std::string_view kClassNames[kNumDefectClasses] = {
    "missing_hole", "mouse_bite", "open_circuit", "short", "spur", "spurious_copper"};
}

std::string_view defect_class_name(DefectClass c) {
  return kClassNames[static_cast<int>(c)];
}

std::string defect_class_folder(DefectClass c) {
  std::string s{defect_class_name(c)};
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::optional<DefectClass> defect_class_from_name(std::string_view name) {
  for (int i = 0; i < kNumDefectClasses; ++i) {
    if (name == kClassNames[i]) return static_cast<DefectClass>(i);
  }
  return std::nullopt;
}

Vec2 transform_apply(const Similarity2D& t, Vec2 p) {
  const double c = std::cos(t.angle);
  const double s = std::sin(t.angle);
  return {t.scale * (c * p.x - s * p.y) + t.tx, t.scale * (s * p.x + c * p.y) + t.ty};
}

Similarity2D compose(const Similarity2D& a, const Similarity2D& b) {
  // a(b(p)) = sa * R(aa) * (sb * R(ab) * p + tb) + ta
  Similarity2D r;
  r.scale = a.scale * b.scale;
  r.angle = a.angle + b.angle;
  const Vec2 tb_in_a = transform_apply(a, {b.tx, b.ty});
  r.tx = tb_in_a.x;
  r.ty = tb_in_a.y;
  return r;
}

Similarity2D inverse(const Similarity2D& t) {
  if (t.scale <= 0.0) throw std::invalid_argument("Similarity2D: scale must be > 0");
  Similarity2D r;
  r.scale = 1.0 / t.scale;
  r.angle = -t.angle;
  const double c = std::cos(r.angle);
  const double s = std::sin(r.angle);
  r.tx = -r.scale * (c * t.tx - s * t.ty);
  r.ty = -r.scale * (s * t.tx + c * t.ty);
  return r;
}

Similarity2D rotation_about_center(double angle_rad, int w, int h) {
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  Similarity2D t;
  t.angle = angle_rad;
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  t.tx = cx - (c * cx - s * cy);
  t.ty = cy - (s * cx + c * cy);
  return t;
}

}  // namespace aoi
