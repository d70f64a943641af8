#include "aoi/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aoi {

namespace {

void check_same_size(const BinaryImage& a, const BinaryImage& b, const char* op) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(op) + ": image dimensions differ");
  }
}

void check_odd(int k, const char* what) {
  if (k < 1 || k % 2 == 0) {
    throw std::invalid_argument(std::string(what) + " must be odd and >= 1");
  }
}

// Offsets of set cells relative to the element center.
std::vector<std::pair<int, int>> elem_offsets(const StructElem& e) {
  std::vector<std::pair<int, int>> offs;
  const int cx = (e.width - 1) / 2;
  const int cy = (e.height - 1) / 2;
  for (int j = 0; j < e.height; ++j) {
    for (int i = 0; i < e.width; ++i) {
      if (e.mask.at(i, j)) offs.emplace_back(i - cx, j - cy);
    }
  }
  return offs;
}

}  // namespace

StructElem StructElem::rectangle(int w, int h) {
  check_odd(w, "StructElem width");
  check_odd(h, "StructElem height");
  StructElem e;
  e.shape = ElemShape::rectangle;
  e.width = w;
  e.height = h;
  e.mask = BinaryImage(w, h, 1);
  return e;
}

StructElem StructElem::ellipse(int w, int h) {
  check_odd(w, "StructElem width");
  check_odd(h, "StructElem height");
  StructElem e;
  e.shape = ElemShape::ellipse;
  e.width = w;
  e.height = h;
  e.mask = BinaryImage(w, h, 0);
  const std::int64_t a = (w - 1) / 2;
  const std::int64_t b = (h - 1) / 2;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const std::int64_t dx = i - a;
      const std::int64_t dy = j - b;
      // dx^2/a^2 + dy^2/b^2 <= 1, in integer arithmetic; degenerate axes
      // collapse to a segment through the center.
      if (dx * dx * b * b + dy * dy * a * a <= a * a * b * b) e.mask.at(i, j) = 1;
    }
  }
  e.mask.at(w / 2, h / 2) = 1;
  return e;
}

StructElem reflect(const StructElem& e) {
  StructElem r = e;
  for (int j = 0; j < e.height; ++j) {
    for (int i = 0; i < e.width; ++i) {
      r.mask.at(i, j) = e.mask.at(e.width - 1 - i, e.height - 1 - j);
    }
  }
  return r;
}

GrayImage to_grayscale(const ColorImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double luma =
          0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(luma), 0, 255));
    }
  }
  return out;
}

GaussianKernel1D gaussian_kernel(int ksize, double sigma) {
  check_odd(ksize, "gaussian_kernel ksize");
  if (sigma <= 0.0) sigma = 0.3 * ((ksize - 1) * 0.5 - 1.0) + 0.8;
  GaussianKernel1D k;
  k.ksize = ksize;
  k.sigma = sigma;
  k.weights.resize(ksize);
  const double c = (ksize - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < ksize; ++i) {
    const double d = i - c;
    k.weights[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k.weights[i];
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

BinaryImage adaptive_threshold(const GrayImage& src, int blocksize, double offset_c) {
  if (blocksize < 3) throw std::invalid_argument("adaptive_threshold: blocksize must be >= 3");
  check_odd(blocksize, "adaptive_threshold blocksize");
  const GaussianKernel1D k = gaussian_kernel(blocksize);
  const int r = blocksize / 2;
  const int w = src.width, h = src.height;

  // separable weighted mean, border replicated
  std::vector<double> tmp(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int v = 0; v < blocksize; ++v) {
        const int xs = std::clamp(x + v - r, 0, w - 1);
        acc += k.weights[v] * src.at(xs, y);
      }
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  BinaryImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int u = 0; u < blocksize; ++u) {
        const int ys = std::clamp(y + u - r, 0, h - 1);
        acc += k.weights[u] * tmp[static_cast<size_t>(ys) * w + x];
      }
      out.at(x, y) = src.at(x, y) > (acc - offset_c) ? 1 : 0;
    }
  }
  return out;
}

BinaryImage xor_diff(const BinaryImage& a, const BinaryImage& b) {
  check_same_size(a, b, "xor_diff");
  BinaryImage out(a.width, a.height);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] != b.data[i] ? 1 : 0;
  return out;
}

BinaryImage median_filter(const BinaryImage& src, int ksize) {
  check_odd(ksize, "median_filter ksize");
  if (ksize == 1) return src;
  const int r = ksize / 2;
  const int majority = (ksize * ksize) / 2 + 1;
  BinaryImage out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      int ones = 0;
      for (int v = -r; v <= r; ++v) {
        const int ys = std::clamp(y + v, 0, src.height - 1);
        for (int u = -r; u <= r; ++u) {
          const int xs = std::clamp(x + u, 0, src.width - 1);
          ones += src.at(xs, ys);
        }
      }
      out.at(x, y) = ones >= majority ? 1 : 0;
    }
  }
  return out;
}

BinaryImage erode(const BinaryImage& a, const StructElem& e) {
  const auto offs = elem_offsets(e);
  BinaryImage out(a.width, a.height);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      bool fits = true;
      for (const auto& [dx, dy] : offs) {
        const int xs = x + dx, ys = y + dy;
        if (!a.inside(xs, ys) || !a.at(xs, ys)) {
          fits = false;
          break;
        }
      }
      out.at(x, y) = fits ? 1 : 0;
    }
  }
  return out;
}

BinaryImage dilate(const BinaryImage& a, const StructElem& e) {
  const auto offs = elem_offsets(e);
  BinaryImage out(a.width, a.height);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!a.at(x, y)) continue;
      for (const auto& [dx, dy] : offs) {
        const int xd = x + dx, yd = y + dy;
        if (out.inside(xd, yd)) out.at(xd, yd) = 1;
      }
    }
  }
  return out;
}

BinaryImage open(const BinaryImage& a, const StructElem& e) { return dilate(erode(a, e), e); }

BinaryImage close(const BinaryImage& a, const StructElem& e) { return erode(dilate(a, e), e); }

BinaryImage complement(const BinaryImage& a) {
  BinaryImage out(a.width, a.height);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] ? 0 : 1;
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  int make_set() {
    parent.push_back(static_cast<int>(parent.size()));
    return parent.back();
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void join(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::vector<Component> connected_components(const BinaryImage& a, int connectivity,
                                            bool keep_pixels) {
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
  }
  const int w = a.width, h = a.height;
  std::vector<int> labels(static_cast<size_t>(w) * h, -1);
  UnionFind uf;

  // first pass: scan prior neighbours (W, NW, N, NE as connectivity allows)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!a.at(x, y)) continue;
      const size_t idx = static_cast<size_t>(y) * w + x;
      int label = -1;
      auto consider = [&](int nx, int ny) {
        if (nx < 0 || nx >= w || ny < 0 || !a.at(nx, ny)) return;
        const int nl = labels[static_cast<size_t>(ny) * w + nx];
        if (label == -1) {
          label = nl;
        } else {
          uf.join(label, nl);
        }
      };
      consider(x - 1, y);
      consider(x, y - 1);
      if (connectivity == 8) {
        consider(x - 1, y - 1);
        consider(x + 1, y - 1);
      }
      if (label == -1) label = uf.make_set();
      labels[idx] = label;
    }
  }

  // second pass: resolve roots and accumulate component stats
  std::vector<int> root_to_comp(uf.parent.size(), -1);
  std::vector<Component> comps;
  std::vector<size_t> first_pixel;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      if (labels[idx] < 0) continue;
      const int root = uf.find(labels[idx]);
      int ci = root_to_comp[root];
      if (ci < 0) {
        ci = static_cast<int>(comps.size());
        root_to_comp[root] = ci;
        comps.push_back(Component{0, 0, BoundingBox{x, y, x + 1, y + 1}, {}});
        first_pixel.push_back(idx);
      }
      Component& c = comps[ci];
      c.area += 1;
      c.box.xmin = std::min(c.box.xmin, x);
      c.box.ymin = std::min(c.box.ymin, y);
      c.box.xmax = std::max(c.box.xmax, x + 1);
      c.box.ymax = std::max(c.box.ymax, y + 1);
      if (keep_pixels) c.pixels.emplace_back(x, y);
    }
  }

  std::vector<int> order(comps.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    const auto ki = std::make_tuple(comps[i].box.ymin, comps[i].box.xmin, first_pixel[i]);
    const auto kj = std::make_tuple(comps[j].box.ymin, comps[j].box.xmin, first_pixel[j]);
    return ki < kj;
  });
  std::vector<Component> sorted;
  sorted.reserve(comps.size());
  for (int i : order) {
    comps[i].label = static_cast<int>(sorted.size());
    sorted.push_back(std::move(comps[i]));
  }
  return sorted;
}

std::vector<Detection> nms(std::vector<Detection> boxes, double iou_threshold) {
  std::sort(boxes.begin(), boxes.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::make_pair(a.box.ymin, a.box.xmin) < std::make_pair(b.box.ymin, b.box.xmin);
  });
  std::vector<Detection> kept;
  for (const Detection& d : boxes) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (bbox_iou(d.box, k.box) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

namespace {

BoundingBox clamp_crop_box(int w, int h, const BoundingBox& box, int pad) {
  BoundingBox r{box.xmin - pad, box.ymin - pad, box.xmax + pad, box.ymax + pad};
  r.xmin = std::max(r.xmin, 0);
  r.ymin = std::max(r.ymin, 0);
  r.xmax = std::min(r.xmax, w);
  r.ymax = std::min(r.ymax, h);
  if (r.xmin >= r.xmax || r.ymin >= r.ymax) {
    throw std::invalid_argument("crop: box does not intersect the image");
  }
  return r;
}

}  // namespace

ColorImage crop(const ColorImage& img, const BoundingBox& box, int pad) {
  const BoundingBox r = clamp_crop_box(img.width, img.height, box, pad);
  ColorImage out(r.width(), r.height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = img.at(r.xmin + x, r.ymin + y, ch);
    }
  }
  return out;
}

GrayImage crop(const GrayImage& img, const BoundingBox& box, int pad) {
  const BoundingBox r = clamp_crop_box(img.width, img.height, box, pad);
  GrayImage out(r.width(), r.height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(r.xmin + x, r.ymin + y);
  }
  return out;
}

BinaryImage crop(const BinaryImage& img, const BoundingBox& box, int pad) {
  const BoundingBox r = clamp_crop_box(img.width, img.height, box, pad);
  BinaryImage out(r.width(), r.height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(r.xmin + x, r.ymin + y);
  }
  return out;
}

namespace {

struct LerpTap {
  int lo, hi;
  double frac;
};

LerpTap resize_tap(int dst, int in_size, int out_size) {
  // half-pixel-center mapping
  double s = (dst + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(in_size - 1));
  const int lo = static_cast<int>(std::floor(s));
  const int hi = std::min(lo + 1, in_size - 1);
  return {lo, hi, s - lo};
}

}  // namespace

ColorImage resize_bilinear(const ColorImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_bilinear: output size must be >= 1");
  ColorImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const LerpTap ty = resize_tap(y, img.height, out_h);
    for (int x = 0; x < out_w; ++x) {
      const LerpTap tx = resize_tap(x, img.width, out_w);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - tx.frac) * img.at(tx.lo, ty.lo, ch) + tx.frac * img.at(tx.hi, ty.lo, ch);
        const double bot = (1.0 - tx.frac) * img.at(tx.lo, ty.hi, ch) + tx.frac * img.at(tx.hi, ty.hi, ch);
        const double v = (1.0 - ty.frac) * top + ty.frac * bot;
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
      }
    }
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_bilinear: output size must be >= 1");
  GrayImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const LerpTap ty = resize_tap(y, img.height, out_h);
    for (int x = 0; x < out_w; ++x) {
      const LerpTap tx = resize_tap(x, img.width, out_w);
      const double top = (1.0 - tx.frac) * img.at(tx.lo, ty.lo) + tx.frac * img.at(tx.hi, ty.lo);
      const double bot = (1.0 - tx.frac) * img.at(tx.lo, ty.hi) + tx.frac * img.at(tx.hi, ty.hi);
      const double v = (1.0 - ty.frac) * top + ty.frac * bot;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
    }
  }
  return out;
}

GrayImage binary_to_gray(const BinaryImage& a) {
  GrayImage out(a.width, a.height);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] ? 255 : 0;
  return out;
}

}  // namespace aoi
