#pragma once

// Test-only reference implementations, written straight from the set/sum
// definitions and kept independent of the library's optimized paths.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "aoi/imgproc.hpp"
#include "aoi/rng.hpp"

namespace oracle {

using aoi::BinaryImage;
using aoi::GrayImage;
using aoi::StructElem;

// direct per-pixel double-loop Gaussian-weighted mean threshold
inline BinaryImage adaptive_threshold_direct(const GrayImage& src, int blocksize, double offset_c) {
  const aoi::GaussianKernel1D k = aoi::gaussian_kernel(blocksize);
  const int r = blocksize / 2;
  BinaryImage out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      long double acc = 0.0L;
      for (int u = 0; u < blocksize; ++u) {
        const int ys = std::clamp(y + u - r, 0, src.height - 1);
        for (int v = 0; v < blocksize; ++v) {
          const int xs = std::clamp(x + v - r, 0, src.width - 1);
          acc += static_cast<long double>(k.weights[u]) * k.weights[v] * src.at(xs, ys);
        }
      }
      out.at(x, y) = src.at(x, y) > static_cast<double>(acc) - offset_c ? 1 : 0;
    }
  }
  return out;
}

inline std::vector<std::pair<int, int>> elem_offsets(const StructElem& e) {
  std::vector<std::pair<int, int>> offs;
  for (int j = 0; j < e.height; ++j) {
    for (int i = 0; i < e.width; ++i) {
      if (e.mask.at(i, j)) offs.emplace_back(i - (e.width - 1) / 2, j - (e.height - 1) / 2);
    }
  }
  return offs;
}

// A erode B = { z | B_z subset of A }, with A the set of foreground raster pixels
inline BinaryImage erode_set(const BinaryImage& a, const StructElem& e) {
  const auto offs = elem_offsets(e);
  BinaryImage out(a.width, a.height);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      bool all = true;
      for (auto [dx, dy] : offs) {
        const int xs = x + dx, ys = y + dy;
        if (xs < 0 || xs >= a.width || ys < 0 || ys >= a.height || !a.at(xs, ys)) {
          all = false;
          break;
        }
      }
      out.at(x, y) = all ? 1 : 0;
    }
  }
  return out;
}

// A dilate B = { z | reflected(B)_z intersects A }
inline BinaryImage dilate_set(const BinaryImage& a, const StructElem& e) {
  const auto offs = elem_offsets(e);
  BinaryImage out(a.width, a.height);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      bool any = false;
      for (auto [dx, dy] : offs) {
        const int xs = x - dx, ys = y - dy;
        if (xs >= 0 && xs < a.width && ys >= 0 && ys < a.height && a.at(xs, ys)) {
          any = true;
          break;
        }
      }
      out.at(x, y) = any ? 1 : 0;
    }
  }
  return out;
}

// flood-fill connected components, returns per-component pixel sets
inline std::vector<std::set<std::pair<int, int>>> components_flood(const BinaryImage& a,
                                                                   int connectivity) {
  std::vector<std::set<std::pair<int, int>>> comps;
  std::vector<bool> seen(static_cast<size_t>(a.width) * a.height, false);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!a.at(x, y) || seen[static_cast<size_t>(y) * a.width + x]) continue;
      std::set<std::pair<int, int>> comp;
      std::vector<std::pair<int, int>> stack{{x, y}};
      seen[static_cast<size_t>(y) * a.width + x] = true;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        comp.insert({cx, cy});
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (connectivity == 4 && dx != 0 && dy != 0) continue;
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || nx >= a.width || ny < 0 || ny >= a.height) continue;
            if (!a.at(nx, ny) || seen[static_cast<size_t>(ny) * a.width + nx]) continue;
            seen[static_cast<size_t>(ny) * a.width + nx] = true;
            stack.push_back({nx, ny});
          }
        }
      }
      comps.push_back(std::move(comp));
    }
  }
  return comps;
}

// pads by `margin` background pixels on every side (models the infinite plane
// in the set-algebra identities)
inline BinaryImage pad(const BinaryImage& a, int margin, std::uint8_t fill) {
  BinaryImage out(a.width + 2 * margin, a.height + 2 * margin, fill);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) out.at(x + margin, y + margin) = a.at(x, y);
  }
  return out;
}

inline BinaryImage unpad(const BinaryImage& a, int margin) {
  BinaryImage out(a.width - 2 * margin, a.height - 2 * margin);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = a.at(x + margin, y + margin);
  }
  return out;
}

inline BinaryImage random_binary(aoi::Rng& rng, int w, int h, double density) {
  BinaryImage img(w, h);
  for (auto& v : img.data) v = rng.uniform() < density ? 1 : 0;
  return img;
}

inline GrayImage random_gray(aoi::Rng& rng, int w, int h) {
  GrayImage img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

inline StructElem random_elem(aoi::Rng& rng) {
  const int w = 1 + 2 * static_cast<int>(rng.uniform_int(0, 4));
  const int h = 1 + 2 * static_cast<int>(rng.uniform_int(0, 4));
  return rng.uniform() < 0.5 ? StructElem::rectangle(w, h) : StructElem::ellipse(w, h);
}

}  // namespace oracle
