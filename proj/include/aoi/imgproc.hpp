#pragma once

#include <vector>

#include "aoi/core.hpp"

namespace aoi {

enum class ElemShape { rectangle, ellipse };

// Structuring element with odd extents and a defined center cell.
struct StructElem {
  ElemShape shape = ElemShape::rectangle;
  int width = 1;
  int height = 1;
  BinaryImage mask;

  static StructElem rectangle(int w, int h);
  // Cell (i,j) is set iff its center lies inside the inscribed ellipse with
  // semi-axes (w-1)/2 and (h-1)/2. Degenerates to a segment when an axis is 0.
  static StructElem ellipse(int w, int h);
};

struct GaussianKernel1D {
  int ksize = 1;
  double sigma = 0.0;
  std::vector<double> weights;  // unit sum, symmetric
};

struct Component {
  int label = 0;
  std::int64_t area = 0;
  BoundingBox box;
  std::vector<std::pair<int, int>> pixels;  // (x, y), raster order
};

GrayImage to_grayscale(const ColorImage& img);

// sigma <= 0 selects the ksize-derived default 0.3*((ksize-1)/2 - 1) + 0.8.
GaussianKernel1D gaussian_kernel(int ksize, double sigma = 0.0);

// Pixel passes when src(x,y) > T(x,y), with T the Gaussian-weighted mean of the
// blocksize x blocksize neighborhood (border replicated) minus offset_c.
BinaryImage adaptive_threshold(const GrayImage& src, int blocksize, double offset_c = 0.0);

BinaryImage xor_diff(const BinaryImage& a, const BinaryImage& b);

BinaryImage median_filter(const BinaryImage& src, int ksize);

// Pixels outside the image are background for all morphology.
BinaryImage erode(const BinaryImage& a, const StructElem& e);
BinaryImage dilate(const BinaryImage& a, const StructElem& e);
BinaryImage open(const BinaryImage& a, const StructElem& e);
BinaryImage close(const BinaryImage& a, const StructElem& e);

BinaryImage complement(const BinaryImage& a);
StructElem reflect(const StructElem& e);

std::vector<Component> connected_components(const BinaryImage& a, int connectivity = 8,
                                            bool keep_pixels = false);

std::vector<Detection> nms(std::vector<Detection> boxes, double iou_threshold);

ColorImage crop(const ColorImage& img, const BoundingBox& box, int pad = 0);
GrayImage crop(const GrayImage& img, const BoundingBox& box, int pad = 0);
BinaryImage crop(const BinaryImage& img, const BoundingBox& box, int pad = 0);

// Bilinear with half-pixel-center mapping.
ColorImage resize_bilinear(const ColorImage& img, int out_w, int out_h);
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

GrayImage binary_to_gray(const BinaryImage& a);  // {0,1} -> {0,255}

}  // namespace aoi
