#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "aoi/core.hpp"

namespace aoi {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double scale = 1.0;        // detection sigma, px
  double orientation = 0.0;  // radians
  double response = 0.0;
};

// 4x4 cells x (sum dx, sum |dx|, sum dy, sum |dy|) of oriented gradients, unit L2 norm.
struct Descriptor {
  std::array<float, 64> v{};
};

struct MatchPair {
  int index_a = 0;
  int index_b = 0;
  double distance = 0.0;
};

struct RegistrationConfig {
  int max_keypoints = 1200;
  double hessian_threshold = 60.0;
  double match_ratio = 0.75;
  int ransac_iterations = 2000;
  double ransac_inlier_tol = 3.0;  // px
  std::uint64_t ransac_seed = 7;
  int min_inliers = 10;
};

class RegistrationError : public std::runtime_error {
 public:
  RegistrationError(const std::string& msg, int inliers)
      : std::runtime_error(msg), inlier_count(inliers) {}
  int inlier_count;
};

struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
};

// Multi-scale Hessian-determinant blob detector with dominant-gradient
// orientation; keypoints sorted by response descending.
FeatureSet detect_features(const GrayImage& img, int max_keypoints,
                           double hessian_threshold = 60.0);

// Nearest/second-nearest ratio test plus mutual-best filtering.
std::vector<MatchPair> match_descriptors(const std::vector<Descriptor>& a,
                                         const std::vector<Descriptor>& b, double ratio);

struct SimilarityEstimate {
  Similarity2D transform;
  std::vector<std::uint8_t> inliers;  // one flag per input pair
  int inlier_count = 0;
};

struct PointPair {
  Vec2 from;
  Vec2 to;
};

// Closed-form least-squares similarity fit (exact for noise-free inputs).
Similarity2D fit_similarity(const std::vector<PointPair>& pairs);

// RANSAC over minimal 2-point samples; final model refit on the best consensus set.
SimilarityEstimate estimate_similarity(const std::vector<PointPair>& pairs, int iterations,
                                       double inlier_tol, std::uint64_t seed = 7);

// Inverse-mapped bilinear warp; out-of-bounds samples take the fill value.
GrayImage warp_image(const GrayImage& img, const Similarity2D& t, int out_w, int out_h,
                     std::uint8_t fill = 0);
ColorImage warp_image(const ColorImage& img, const Similarity2D& t, int out_w, int out_h,
                      std::array<std::uint8_t, 3> fill = {0, 0, 0});

struct RegistrationResult {
  GrayImage warped;
  Similarity2D transform;  // maps test coordinates into template coordinates
  int inlier_count = 0;
};

RegistrationResult register_images(const GrayImage& templ, const GrayImage& test,
                                   const RegistrationConfig& cfg = {});

}  // namespace aoi
