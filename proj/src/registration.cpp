#include "aoi/registration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aoi/rng.hpp"

namespace aoi {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h, 0.f) {}
  float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

FloatImage to_float(const GrayImage& img) {
  FloatImage f(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) f.data[i] = static_cast<float>(img.data[i]);
  return f;
}

// separable Gaussian blur, replicate border
FloatImage gaussian_blur(const FloatImage& src, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[i + r] = static_cast<float>(w);
    sum += w;
  }
  for (float& w : k) w = static_cast<float>(w / sum);

  const int W = src.width, H = src.height;
  FloatImage tmp(W, H), out(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      float acc = 0.f;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * src.at(std::clamp(x + i, 0, W - 1), y);
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      float acc = 0.f;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(x, std::clamp(y + i, 0, H - 1));
      out.at(x, y) = acc;
    }
  }
  return out;
}

float sample_bilinear(const FloatImage& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = (1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bot = (1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return static_cast<float>((1 - fy) * top + fy * bot);
}

// quadratic peak offset from three samples, clamped to half a cell
double parabolic_offset(double dm, double d0, double dp) {
  const double denom = dm - 2.0 * d0 + dp;
  if (std::abs(denom) < 1e-12) return 0.0;
  return std::clamp(0.5 * (dm - dp) / denom, -0.5, 0.5);
}

struct ScaleLevel {
  double sigma;
  FloatImage blurred;
  FloatImage det;  // scale-normalized Hessian determinant
  FloatImage gx, gy;
};

ScaleLevel build_level(const FloatImage& base, double sigma) {
  ScaleLevel lv;
  lv.sigma = sigma;
  lv.blurred = gaussian_blur(base, sigma);
  const int W = base.width, H = base.height;
  lv.det = FloatImage(W, H);
  lv.gx = FloatImage(W, H);
  lv.gy = FloatImage(W, H);
  const FloatImage& L = lv.blurred;
  const double s2 = sigma * sigma;
  const double norm = s2 * s2;
  for (int y = 1; y < H - 1; ++y) {
    for (int x = 1; x < W - 1; ++x) {
      const double lxx = L.at(x + 1, y) - 2.0 * L.at(x, y) + L.at(x - 1, y);
      const double lyy = L.at(x, y + 1) - 2.0 * L.at(x, y) + L.at(x, y - 1);
      const double lxy = (L.at(x + 1, y + 1) + L.at(x - 1, y - 1) - L.at(x + 1, y - 1) -
                          L.at(x - 1, y + 1)) / 4.0;
      lv.det.at(x, y) = static_cast<float>(norm * (lxx * lyy - lxy * lxy));
      lv.gx.at(x, y) = static_cast<float>((L.at(x + 1, y) - L.at(x - 1, y)) / 2.0);
      lv.gy.at(x, y) = static_cast<float>((L.at(x, y + 1) - L.at(x, y - 1)) / 2.0);
    }
  }
  return lv;
}

double assign_orientation(const ScaleLevel& lv, double x, double y) {
  constexpr int kBins = 36;
  std::array<double, kBins> hist{};
  const double sigma = lv.sigma;
  const double radius = 6.0 * sigma;
  const double wsigma = 2.5 * sigma;
  const int step = std::max(1, static_cast<int>(std::lround(sigma / 2.0)));
  for (double v = -radius; v <= radius; v += step) {
    for (double u = -radius; u <= radius; u += step) {
      if (u * u + v * v > radius * radius) continue;
      const double gx = sample_bilinear(lv.gx, x + u, y + v);
      const double gy = sample_bilinear(lv.gy, x + u, y + v);
      const double mag = std::hypot(gx, gy);
      if (mag < 1e-9) continue;
      const double w = std::exp(-(u * u + v * v) / (2.0 * wsigma * wsigma));
      const double ang = std::atan2(gy, gx);  // [-pi, pi]
      double bin = (ang + kPi) / (2.0 * kPi) * kBins;
      int b = static_cast<int>(bin) % kBins;
      hist[b] += w * mag;
    }
  }
  // circular smoothing stabilizes the peak under resampling noise
  for (int pass = 0; pass < 3; ++pass) {
    std::array<double, kBins> sm{};
    for (int i = 0; i < kBins; ++i) {
      sm[i] = (hist[(i + kBins - 1) % kBins] + hist[i] + hist[(i + 1) % kBins]) / 3.0;
    }
    hist = sm;
  }
  int peak = 0;
  for (int i = 1; i < kBins; ++i) {
    if (hist[i] > hist[peak]) peak = i;
  }
  const double dm = hist[(peak + kBins - 1) % kBins];
  const double dp = hist[(peak + 1) % kBins];
  const double off = parabolic_offset(dm, hist[peak], dp);
  const double ang = (peak + 0.5 + off) / kBins * 2.0 * kPi - kPi;
  return ang;
}

Descriptor build_descriptor(const ScaleLevel& lv, const Keypoint& kp) {
  Descriptor d;
  const double c = std::cos(kp.orientation);
  const double s = std::sin(kp.orientation);
  const double sigma = kp.scale;
  // 20x20 sigma-spaced samples over a rotated 4x4 cell grid
  for (int vi = 0; vi < 20; ++vi) {
    const double v = (vi - 9.5);
    for (int ui = 0; ui < 20; ++ui) {
      const double u = (ui - 9.5);
      const double px = kp.x + (c * u - s * v) * sigma;
      const double py = kp.y + (s * u + c * v) * sigma;
      const double gx = sample_bilinear(lv.gx, px, py);
      const double gy = sample_bilinear(lv.gy, px, py);
      // gradient expressed in the keypoint frame
      const double dx = c * gx + s * gy;
      const double dy = -s * gx + c * gy;
      const double w = std::exp(-(u * u + v * v) / (2.0 * 6.6 * 6.6));
      const int cell = (vi / 5) * 4 + (ui / 5);
      d.v[cell * 4 + 0] += static_cast<float>(w * dx);
      d.v[cell * 4 + 1] += static_cast<float>(w * std::abs(dx));
      d.v[cell * 4 + 2] += static_cast<float>(w * dy);
      d.v[cell * 4 + 3] += static_cast<float>(w * std::abs(dy));
    }
  }
  double norm = 0.0;
  for (float x : d.v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (norm > 1e-12) {
    for (float& x : d.v) x = static_cast<float>(x / norm);
  }
  return d;
}

}  // namespace

FeatureSet detect_features(const GrayImage& img, int max_keypoints, double hessian_threshold) {
  if (img.width < 32 || img.height < 32) {
    throw std::invalid_argument("detect_features: image must be at least 32x32");
  }
  const FloatImage base = to_float(img);

  std::vector<ScaleLevel> levels;
  double sigma = 1.6;
  for (int i = 0; i < 6; ++i) {
    levels.push_back(build_level(base, sigma));
    sigma *= std::sqrt(2.0);
  }

  std::vector<Keypoint> kps;
  for (size_t li = 1; li + 1 < levels.size(); ++li) {
    const ScaleLevel& lv = levels[li];
    const int margin = 2;
    for (int y = margin; y < base.height - margin; ++y) {
      for (int x = margin; x < base.width - margin; ++x) {
        const float v = lv.det.at(x, y);
        if (v <= hessian_threshold) continue;
        bool is_max = true;
        for (int ds = -1; ds <= 1 && is_max; ++ds) {
          const FloatImage& n = levels[li + ds].det;
          for (int dy = -1; dy <= 1 && is_max; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              if (ds == 0 && dx == 0 && dy == 0) continue;
              if (n.at(x + dx, y + dy) >= v) {
                is_max = false;
                break;
              }
            }
          }
        }
        if (!is_max) continue;
        Keypoint kp;
        kp.x = x + parabolic_offset(lv.det.at(x - 1, y), v, lv.det.at(x + 1, y));
        kp.y = y + parabolic_offset(lv.det.at(x, y - 1), v, lv.det.at(x, y + 1));
        kp.scale = lv.sigma;
        kp.response = v;
        kps.push_back(kp);
      }
    }
  }

  std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    return std::make_tuple(a.y, a.x, a.scale) < std::make_tuple(b.y, b.x, b.scale);
  });
  if (static_cast<int>(kps.size()) > max_keypoints) kps.resize(max_keypoints);

  FeatureSet fs;
  fs.keypoints.reserve(kps.size());
  fs.descriptors.reserve(kps.size());
  for (Keypoint& kp : kps) {
    // locate the level this keypoint came from
    size_t li = 0;
    for (size_t i = 0; i < levels.size(); ++i) {
      if (std::abs(levels[i].sigma - kp.scale) < 1e-9) li = i;
    }
    kp.orientation = assign_orientation(levels[li], kp.x, kp.y);
    fs.descriptors.push_back(build_descriptor(levels[li], kp));
    fs.keypoints.push_back(kp);
  }
  return fs;
}

std::vector<MatchPair> match_descriptors(const std::vector<Descriptor>& a,
                                         const std::vector<Descriptor>& b, double ratio) {
  if (ratio <= 0.0 || ratio > 1.0) {
    throw std::invalid_argument("match_descriptors: ratio must lie in (0, 1]");
  }
  std::vector<MatchPair> out;
  if (a.empty() || b.empty()) return out;

  auto dist2 = [](const Descriptor& x, const Descriptor& y) {
    double acc = 0.0;
    for (int i = 0; i < 64; ++i) {
      const double d = static_cast<double>(x.v[i]) - y.v[i];
      acc += d * d;
    }
    return acc;
  };

  std::vector<int> best_b_for_a(a.size(), -1);
  std::vector<double> best_d_for_a(a.size(), 0.0);
  std::vector<int> best_a_for_b(b.size(), -1);
  std::vector<double> best_d_for_b(b.size(), std::numeric_limits<double>::infinity());

  for (size_t i = 0; i < a.size(); ++i) {
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    int j1 = -1;
    for (size_t j = 0; j < b.size(); ++j) {
      const double d = dist2(a[i], b[j]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        j1 = static_cast<int>(j);
      } else if (d < d2) {
        d2 = d;
      }
    }
    // ratio test on Euclidean distances (squared compare against ratio^2)
    if (j1 >= 0 && (b.size() < 2 || d1 < ratio * ratio * d2)) {
      best_b_for_a[i] = j1;
      best_d_for_a[i] = d1;
      if (d1 < best_d_for_b[j1]) {
        best_d_for_b[j1] = d1;
        best_a_for_b[j1] = static_cast<int>(i);
      }
    }
  }
  for (size_t i = 0; i < a.size(); ++i) {
    const int j = best_b_for_a[i];
    if (j >= 0 && best_a_for_b[j] == static_cast<int>(i)) {
      out.push_back({static_cast<int>(i), j, std::sqrt(best_d_for_a[i])});
    }
  }
  return out;
}

Similarity2D fit_similarity(const std::vector<PointPair>& pairs) {
  if (pairs.size() < 2) {
    throw std::invalid_argument("fit_similarity: need at least 2 point pairs");
  }
  double pmx = 0, pmy = 0, qmx = 0, qmy = 0;
  for (const auto& pr : pairs) {
    pmx += pr.from.x;
    pmy += pr.from.y;
    qmx += pr.to.x;
    qmy += pr.to.y;
  }
  const double n = static_cast<double>(pairs.size());
  pmx /= n;
  pmy /= n;
  qmx /= n;
  qmy /= n;

  double sxx = 0, sxy = 0, d = 0;
  for (const auto& pr : pairs) {
    const double px = pr.from.x - pmx, py = pr.from.y - pmy;
    const double qx = pr.to.x - qmx, qy = pr.to.y - qmy;
    sxx += px * qx + py * qy;
    sxy += px * qy - py * qx;
    d += px * px + py * py;
  }
  if (d < 1e-12) throw std::invalid_argument("fit_similarity: degenerate (coincident) points");
  const double a = sxx / d;
  const double b = sxy / d;
  Similarity2D t;
  t.scale = std::hypot(a, b);
  t.angle = std::atan2(b, a);
  t.tx = qmx - (a * pmx - b * pmy);
  t.ty = qmy - (b * pmx + a * pmy);
  if (t.scale <= 0.0) throw std::invalid_argument("fit_similarity: zero scale");
  return t;
}

SimilarityEstimate estimate_similarity(const std::vector<PointPair>& pairs, int iterations,
                                       double inlier_tol, std::uint64_t seed) {
  if (pairs.size() < 2) {
    throw std::invalid_argument("estimate_similarity: need at least 2 point pairs");
  }
  const double tol2 = inlier_tol * inlier_tol;
  Rng rng(seed);

  auto score = [&](const Similarity2D& t, std::vector<std::uint8_t>& mask, double& resid) {
    int count = 0;
    resid = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      const Vec2 m = transform_apply(t, pairs[i].from);
      const double dx = m.x - pairs[i].to.x, dy = m.y - pairs[i].to.y;
      const double e2 = dx * dx + dy * dy;
      if (e2 <= tol2) {
        mask[i] = 1;
        resid += e2;
        ++count;
      } else {
        mask[i] = 0;
      }
    }
    return count;
  };

  int best_count = -1;
  double best_resid = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> best_mask(pairs.size(), 0);
  std::vector<std::uint8_t> mask(pairs.size(), 0);

  for (int it = 0; it < iterations; ++it) {
    const auto i = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pairs.size()) - 1));
    const auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pairs.size()) - 1));
    if (i == j) continue;
    const double dpx = pairs[i].from.x - pairs[j].from.x;
    const double dpy = pairs[i].from.y - pairs[j].from.y;
    const double dqx = pairs[i].to.x - pairs[j].to.x;
    const double dqy = pairs[i].to.y - pairs[j].to.y;
    if (dpx * dpx + dpy * dpy < 1e-12 || dqx * dqx + dqy * dqy < 1e-12) continue;

    Similarity2D model;
    try {
      model = fit_similarity({pairs[i], pairs[j]});
    } catch (const std::invalid_argument&) {
      continue;
    }
    double resid = 0.0;
    const int count = score(model, mask, resid);
    if (count > best_count || (count == best_count && resid < best_resid)) {
      best_count = count;
      best_resid = resid;
      best_mask = mask;
    }
  }

  if (best_count < 2) {
    throw RegistrationError("estimate_similarity: no consensus found", std::max(best_count, 0));
  }

  std::vector<PointPair> consensus;
  consensus.reserve(best_count);
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (best_mask[i]) consensus.push_back(pairs[i]);
  }
  SimilarityEstimate est;
  est.transform = fit_similarity(consensus);
  est.inliers = std::move(best_mask);
  est.inlier_count = best_count;
  return est;
}

namespace {

template <typename ImageT, typename SampleFn>
void warp_generic(const ImageT& img, const Similarity2D& t, int out_w, int out_h, SampleFn&& put) {
  const Similarity2D inv = inverse(t);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Vec2 src = transform_apply(inv, {static_cast<double>(x), static_cast<double>(y)});
      put(x, y, src);
    }
  }
}

}  // namespace

GrayImage warp_image(const GrayImage& img, const Similarity2D& t, int out_w, int out_h,
                     std::uint8_t fill) {
  GrayImage out(out_w, out_h);
  warp_generic(img, t, out_w, out_h, [&](int x, int y, Vec2 s) {
    if (s.x < 0.0 || s.y < 0.0 || s.x > img.width - 1 || s.y > img.height - 1) {
      out.at(x, y) = fill;
      return;
    }
    const int x0 = static_cast<int>(s.x), y0 = static_cast<int>(s.y);
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const double fx = s.x - x0, fy = s.y - y0;
    const double top = (1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
    const double bot = (1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
    const double v = (1 - fy) * top + fy * bot;
    out.at(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
  });
  return out;
}

ColorImage warp_image(const ColorImage& img, const Similarity2D& t, int out_w, int out_h,
                      std::array<std::uint8_t, 3> fill) {
  ColorImage out(out_w, out_h);
  warp_generic(img, t, out_w, out_h, [&](int x, int y, Vec2 s) {
    if (s.x < 0.0 || s.y < 0.0 || s.x > img.width - 1 || s.y > img.height - 1) {
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = fill[ch];
      return;
    }
    const int x0 = static_cast<int>(s.x), y0 = static_cast<int>(s.y);
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const double fx = s.x - x0, fy = s.y - y0;
    for (int ch = 0; ch < 3; ++ch) {
      const double top = (1 - fx) * img.at(x0, y0, ch) + fx * img.at(x1, y0, ch);
      const double bot = (1 - fx) * img.at(x0, y1, ch) + fx * img.at(x1, y1, ch);
      const double v = (1 - fy) * top + fy * bot;
      out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
    }
  });
  return out;
}

RegistrationResult register_images(const GrayImage& templ, const GrayImage& test,
                                   const RegistrationConfig& cfg) {
  const FeatureSet ft = detect_features(templ, cfg.max_keypoints, cfg.hessian_threshold);
  const FeatureSet fs = detect_features(test, cfg.max_keypoints, cfg.hessian_threshold);
  const auto matches = match_descriptors(fs.descriptors, ft.descriptors, cfg.match_ratio);

  std::vector<PointPair> pairs;
  pairs.reserve(matches.size());
  for (const MatchPair& m : matches) {
    const Keypoint& kt = fs.keypoints[m.index_a];
    const Keypoint& kq = ft.keypoints[m.index_b];
    pairs.push_back({{kt.x, kt.y}, {kq.x, kq.y}});
  }
  if (pairs.size() < 2) {
    throw RegistrationError(
        "register_images: not enough matches (" + std::to_string(pairs.size()) + ")", 0);
  }
  const SimilarityEstimate est =
      estimate_similarity(pairs, cfg.ransac_iterations, cfg.ransac_inlier_tol, cfg.ransac_seed);
  if (est.inlier_count < cfg.min_inliers) {
    throw RegistrationError("register_images: consensus too small (" +
                                std::to_string(est.inlier_count) + " inliers, need " +
                                std::to_string(cfg.min_inliers) + ")",
                            est.inlier_count);
  }
  RegistrationResult r;
  r.transform = est.transform;
  r.inlier_count = est.inlier_count;
  r.warped = warp_image(test, est.transform, templ.width, templ.height);
  return r;
}

}  // namespace aoi
