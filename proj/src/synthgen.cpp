#include "aoi/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "aoi/annotation_xml.hpp"
#include "aoi/png_io.hpp"
#include "aoi/registration.hpp"
#include "aoi/rng.hpp"

namespace fs = std::filesystem;

namespace aoi {

namespace {

constexpr double kPi = 3.14159265358979323846;

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
Vec2 sub(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 add(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 mul(Vec2 a, double s) { return {a.x * s, a.y * s}; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// closest point on segment [a,b] to p
Vec2 closest_on_segment(Vec2 a, Vec2 b, Vec2 p) {
  const Vec2 ab = sub(b, a);
  const double len2 = dot(ab, ab);
  if (len2 < 1e-12) return a;
  const double t = std::clamp(dot(sub(p, a), ab) / len2, 0.0, 1.0);
  return add(a, mul(ab, t));
}

double dist_point_segment(Vec2 p, Vec2 a, Vec2 b) { return norm(sub(p, closest_on_segment(a, b, p))); }

double dist_segment_segment(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1, Vec2* pa = nullptr,
                            Vec2* pb = nullptr) {
  // sampled projection search is exact enough for clearance tests on short legs
  double best = std::numeric_limits<double>::infinity();
  Vec2 bpa{}, bpb{};
  auto try_pair = [&](Vec2 p, Vec2 q) {
    const double d = norm(sub(p, q));
    if (d < best) {
      best = d;
      bpa = p;
      bpb = q;
    }
  };
  constexpr int kSteps = 16;
  for (int i = 0; i <= kSteps; ++i) {
    const double t = static_cast<double>(i) / kSteps;
    const Vec2 p = add(a0, mul(sub(a1, a0), t));
    try_pair(p, closest_on_segment(b0, b1, p));
    const Vec2 q = add(b0, mul(sub(b1, b0), t));
    try_pair(closest_on_segment(a0, a1, q), q);
  }
  if (pa) *pa = bpa;
  if (pb) *pb = bpb;
  return best;
}

struct Segment {
  Vec2 a, b;
  double width;
  int trace_index;
};

std::vector<Segment> layout_segments(const BoardLayout& layout) {
  std::vector<Segment> segs;
  for (size_t ti = 0; ti < layout.traces.size(); ++ti) {
    const TraceSpec& t = layout.traces[ti];
    for (size_t i = 0; i + 1 < t.points.size(); ++i) {
      segs.push_back({t.points[i], t.points[i + 1], t.width, static_cast<int>(ti)});
    }
  }
  return segs;
}

void apply_nuisance(ColorImage& img, const BoardLayout& layout) {
  if (layout.illumination_gradient <= 0.0 && layout.noise_sigma <= 0.0) return;
  Rng rng(layout.nuisance_seed);
  const double dir = rng.uniform(0.0, 2.0 * kPi);
  const double dx = std::cos(dir), dy = std::sin(dir);
  const double half = 0.5 * std::hypot(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double proj = (x - img.width / 2.0) * dx + (y - img.height / 2.0) * dy;
      const double gain = 1.0 + layout.illumination_gradient * proj / half;
      for (int ch = 0; ch < 3; ++ch) {
        double v = img.at(x, y, ch) * gain;
        if (layout.noise_sigma > 0.0) v += rng.normal(0.0, layout.noise_sigma);
        img.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
}

void paint_disc(ColorImage& img, Vec2 c, double r, std::array<std::uint8_t, 3> color) {
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x - r - 1)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x + r + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y - r - 1)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y + r + 1)));
  const double r2 = r * r;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double ddx = x - c.x, ddy = y - c.y;
      if (ddx * ddx + ddy * ddy <= r2) {
        img.at(x, y, 0) = color[0];
        img.at(x, y, 1) = color[1];
        img.at(x, y, 2) = color[2];
      }
    }
  }
}

void paint_corridor(ColorImage& img, Vec2 a, Vec2 b, double width,
                    std::array<std::uint8_t, 3> color) {
  const double r = width / 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (dist_point_segment({static_cast<double>(x), static_cast<double>(y)}, a, b) <= r) {
        img.at(x, y, 0) = color[0];
        img.at(x, y, 1) = color[1];
        img.at(x, y, 2) = color[2];
      }
    }
  }
}

}  // namespace

ColorImage render_layout(const BoardLayout& layout) {
  ColorImage img(layout.width, layout.height, layout.substrate_color[0], layout.substrate_color[1],
                 layout.substrate_color[2]);
  for (const TraceSpec& t : layout.traces) {
    for (size_t i = 0; i + 1 < t.points.size(); ++i) {
      paint_corridor(img, t.points[i], t.points[i + 1], t.width, layout.copper_color);
    }
  }
  for (const PadSpec& p : layout.pads) paint_disc(img, p.center, p.pad_radius, layout.copper_color);
  for (const PadSpec& p : layout.pads) paint_disc(img, p.center, p.hole_radius, layout.hole_color);
  apply_nuisance(img, layout);
  return img;
}

std::pair<ColorImage, BoardLayout> gen_template(std::uint64_t seed, const BoardConfig& cfg) {
  if (cfg.width < 256 || cfg.height < 256) {
    throw std::invalid_argument("gen_template: canvas must be at least 256x256");
  }
  Rng rng(mix_seed(seed, 0x9e3779b9));
  BoardLayout layout;
  layout.width = cfg.width;
  layout.height = cfg.height;
  layout.illumination_gradient = cfg.illumination_gradient;
  layout.noise_sigma = cfg.noise_sigma;
  layout.nuisance_seed = mix_seed(seed, 0x6e01);

  const Vec2 center{cfg.width / 2.0, cfg.height / 2.0};
  const double content_r = cfg.content_radius_frac * std::min(cfg.width, cfg.height);

  // jittered grid of pad sites inside the content disc
  struct Site {
    int gx, gy;
    int pad_index;  // -1 when absent
  };
  const int nx = static_cast<int>(cfg.width / cfg.grid_pitch);
  const int ny = static_cast<int>(cfg.height / cfg.grid_pitch);
  std::vector<std::vector<int>> site_pad(ny, std::vector<int>(nx, -1));
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      const double px = (gx + 0.5) * cfg.grid_pitch + (cfg.width - nx * cfg.grid_pitch) / 2.0 +
                        rng.uniform(-cfg.grid_jitter, cfg.grid_jitter);
      const double py = (gy + 0.5) * cfg.grid_pitch + (cfg.height - ny * cfg.grid_pitch) / 2.0 +
                        rng.uniform(-cfg.grid_jitter, cfg.grid_jitter);
      const double pad_r = rng.uniform(cfg.pad_radius_min, cfg.pad_radius_max);
      const double hole_r =
          std::min(rng.uniform(cfg.hole_radius_min, cfg.hole_radius_max), pad_r - 4.0);
      if (norm(sub({px, py}, center)) + pad_r + 2.0 > content_r) continue;
      site_pad[gy][gx] = static_cast<int>(layout.pads.size());
      layout.pads.push_back({{px, py}, pad_r, hole_r});
    }
  }

  // candidate traces connect grid-adjacent pads, each pad used at most once
  struct Cand {
    int pa, pb;
    bool horizontal;
  };
  std::vector<Cand> cands;
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      if (site_pad[gy][gx] < 0) continue;
      if (gx + 1 < nx && site_pad[gy][gx + 1] >= 0) {
        cands.push_back({site_pad[gy][gx], site_pad[gy][gx + 1], true});
      }
      if (gy + 1 < ny && site_pad[gy + 1][gx] >= 0) {
        cands.push_back({site_pad[gy][gx], site_pad[gy + 1][gx], false});
      }
    }
  }
  // deterministic shuffle
  for (size_t i = cands.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(cands[i - 1], cands[j]);
  }

  std::vector<bool> pad_used(layout.pads.size(), false);
  std::vector<Segment> placed;
  const double w = cfg.trace_width;

  for (const Cand& c : cands) {
    if (static_cast<int>(layout.traces.size()) >= cfg.traces) break;
    if (pad_used[c.pa] || pad_used[c.pb]) continue;
    const Vec2 A = layout.pads[c.pa].center;
    const Vec2 B = layout.pads[c.pb].center;
    std::vector<Vec2> pts;
    if (c.horizontal) {
      const double mx = (A.x + B.x) / 2.0;
      pts = {A, {mx, A.y}, {mx, B.y}, B};
    } else {
      const double my = (A.y + B.y) / 2.0;
      pts = {A, {A.x, my}, {B.x, my}, B};
    }
    bool ok = true;
    for (size_t i = 0; i + 1 < pts.size() && ok; ++i) {
      // stay inside the content disc
      for (const Vec2& p : {pts[i], pts[i + 1]}) {
        if (norm(sub(p, center)) + w / 2.0 + 2.0 > content_r) ok = false;
      }
      for (const Segment& s : placed) {
        if (dist_segment_segment(pts[i], pts[i + 1], s.a, s.b) < (w + s.width) / 2.0 + cfg.clearance) {
          ok = false;
          break;
        }
      }
      for (size_t pi = 0; pi < layout.pads.size() && ok; ++pi) {
        if (static_cast<int>(pi) == c.pa || static_cast<int>(pi) == c.pb) continue;
        if (dist_point_segment(layout.pads[pi].center, pts[i], pts[i + 1]) <
            layout.pads[pi].pad_radius + w / 2.0 + cfg.clearance) {
          ok = false;
        }
      }
    }
    if (!ok) continue;
    TraceSpec trace;
    trace.points = pts;
    trace.width = w;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      placed.push_back({pts[i], pts[i + 1], w, static_cast<int>(layout.traces.size())});
    }
    layout.traces.push_back(std::move(trace));
    pad_used[c.pa] = pad_used[c.pb] = true;
  }

  if (static_cast<int>(layout.traces.size()) < cfg.traces) {
    throw std::runtime_error("gen_template: infeasible config, routed " +
                             std::to_string(layout.traces.size()) + " of " +
                             std::to_string(cfg.traces) + " traces");
  }
  return {render_layout(layout), layout};
}

namespace {

struct PaintStats {
  int changed = 0;
  int xmin = 1 << 30, ymin = 1 << 30, xmax = -1, ymax = -1;

  void record(int x, int y) {
    ++changed;
    xmin = std::min(xmin, x);
    ymin = std::min(ymin, y);
    xmax = std::max(xmax, x + 1);
    ymax = std::max(ymax, y + 1);
  }
  bool any() const { return changed > 0; }
  BoundingBox box() const { return {xmin, ymin, xmax, ymax}; }
};

bool color_is(const ColorImage& img, int x, int y, const std::array<std::uint8_t, 3>& c) {
  return img.at(x, y, 0) == c[0] && img.at(x, y, 1) == c[1] && img.at(x, y, 2) == c[2];
}

// Paints `color` where the predicate set (disc or corridor defined by caller-supplied
// membership fn) currently shows `only_over`; records changed pixels.
template <typename MemberFn>
PaintStats paint_where(ColorImage& img, int x0, int y0, int x1, int y1, MemberFn&& member,
                       const std::array<std::uint8_t, 3>& only_over,
                       const std::array<std::uint8_t, 3>& color) {
  PaintStats st;
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width - 1);
  y1 = std::min(y1, img.height - 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!member(x, y) || !color_is(img, x, y, only_over)) continue;
      img.at(x, y, 0) = color[0];
      img.at(x, y, 1) = color[1];
      img.at(x, y, 2) = color[2];
      st.record(x, y);
    }
  }
  return st;
}

}  // namespace

std::pair<ColorImage, Annotation> inject_defects(const BoardLayout& layout, DefectClass cls,
                                                 int count, std::uint64_t seed,
                                                 const DefectConfig& cfg) {
  if (count < 3 || count > 5) {
    throw std::invalid_argument("inject_defects: count must be in [3, 5]");
  }
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls) + 17));

  // nuisance is re-applied after painting so the defect pixels get the same field
  BoardLayout plain = layout;
  plain.illumination_gradient = 0.0;
  plain.noise_sigma = 0.0;
  ColorImage img = render_layout(plain);

  const auto segs = layout_segments(layout);
  const auto& copper = layout.copper_color;
  const auto& substrate = layout.substrate_color;

  // precompute candidate segment pairs for shorts
  struct ShortCand {
    Vec2 a, b;  // closest points on the two centerlines
  };
  std::vector<ShortCand> short_cands;
  if (cls == DefectClass::short_circuit) {
    for (size_t i = 0; i < segs.size(); ++i) {
      for (size_t j = i + 1; j < segs.size(); ++j) {
        if (segs[i].trace_index == segs[j].trace_index) continue;
        Vec2 pa, pb;
        const double d = dist_segment_segment(segs[i].a, segs[i].b, segs[j].a, segs[j].b, &pa, &pb);
        const double gap = d - (segs[i].width + segs[j].width) / 2.0;
        if (gap >= 4.0 && gap <= cfg.short_gap_max) short_cands.push_back({pa, pb});
      }
    }
    if (short_cands.empty()) {
      throw std::runtime_error("inject_defects: no adjacent trace pair for a short");
    }
  }
  if (cls == DefectClass::missing_hole && static_cast<int>(layout.pads.size()) < count) {
    throw std::runtime_error("inject_defects: not enough pads for missing_hole defects");
  }
  if (layout.traces.empty() &&
      (cls == DefectClass::mouse_bite || cls == DefectClass::open_circuit ||
       cls == DefectClass::spur)) {
    throw std::runtime_error("inject_defects: layout has no traces to anchor the defect");
  }

  Annotation ann;
  ann.width = layout.width;
  ann.height = layout.height;
  ann.depth = 3;

  std::vector<BoundingBox> guard_boxes;  // slack-grown, pairwise disjoint
  std::vector<int> used_pads;

  auto pick_segment_point = [&](double end_margin, Vec2& q, Vec2& dir, Vec2& nrm,
                                double& seg_width) -> bool {
    const auto& s = segs[rng.uniform_int(0, static_cast<std::int64_t>(segs.size()) - 1)];
    const double len = norm(sub(s.b, s.a));
    if (len < 2.0 * end_margin + 4.0) return false;
    const double t = rng.uniform(end_margin / len, 1.0 - end_margin / len);
    q = add(s.a, mul(sub(s.b, s.a), t));
    dir = mul(sub(s.b, s.a), 1.0 / len);
    nrm = {-dir.y, dir.x};
    if (rng.uniform() < 0.5) nrm = mul(nrm, -1.0);
    seg_width = s.width;
    return true;
  };

  const double pad_r_max = std::accumulate(
      layout.pads.begin(), layout.pads.end(), 0.0,
      [](double m, const PadSpec& p) { return std::max(m, p.pad_radius); });

  int placed = 0;
  int attempts = 0;
  const int max_attempts = 400 * count;
  while (placed < count) {
    if (++attempts > max_attempts) {
      throw std::runtime_error("inject_defects: could not place " + std::to_string(count) + " " +
                               std::string(defect_class_name(cls)) + " defects");
    }
    ColorImage trial = img;
    PaintStats st;
    switch (cls) {
      case DefectClass::missing_hole: {
        const int pi = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(layout.pads.size()) - 1));
        if (std::find(used_pads.begin(), used_pads.end(), pi) != used_pads.end()) continue;
        const PadSpec& p = layout.pads[pi];
        const double r2 = p.hole_radius * p.hole_radius;
        st = paint_where(
            trial, static_cast<int>(p.center.x - p.hole_radius - 2),
            static_cast<int>(p.center.y - p.hole_radius - 2),
            static_cast<int>(p.center.x + p.hole_radius + 2),
            static_cast<int>(p.center.y + p.hole_radius + 2),
            [&](int x, int y) {
              const double dx = x - p.center.x, dy = y - p.center.y;
              return dx * dx + dy * dy <= r2;
            },
            layout.hole_color, copper);
        if (st.any()) used_pads.push_back(pi);
        break;
      }
      case DefectClass::mouse_bite: {
        Vec2 q, dir, nrm;
        double w;
        if (!pick_segment_point(pad_r_max + 18.0, q, dir, nrm, w)) continue;
        const double r = rng.uniform(cfg.mouse_bite_radius_min, cfg.mouse_bite_radius_max);
        const double depth = rng.uniform(cfg.mouse_bite_depth_min, std::max(cfg.mouse_bite_depth_min, w - 2.0));
        const Vec2 c = add(q, mul(nrm, w / 2.0 + r - depth));
        const double r2 = r * r;
        st = paint_where(
            trial, static_cast<int>(c.x - r - 2), static_cast<int>(c.y - r - 2),
            static_cast<int>(c.x + r + 2), static_cast<int>(c.y + r + 2),
            [&](int x, int y) {
              const double dx = x - c.x, dy = y - c.y;
              return dx * dx + dy * dy <= r2;
            },
            copper, substrate);
        break;
      }
      case DefectClass::open_circuit: {
        Vec2 q, dir, nrm;
        double w;
        const double span = rng.uniform(cfg.open_span_min, cfg.open_span_max);
        if (!pick_segment_point(pad_r_max + span / 2.0 + 8.0, q, dir, nrm, w)) continue;
        const double half_span = span / 2.0;
        const double half_width = w / 2.0 + 1.5;
        const double reach = std::hypot(half_span, half_width) + 2;
        st = paint_where(
            trial, static_cast<int>(q.x - reach), static_cast<int>(q.y - reach),
            static_cast<int>(q.x + reach), static_cast<int>(q.y + reach),
            [&](int x, int y) {
              const Vec2 d = sub({static_cast<double>(x), static_cast<double>(y)}, q);
              return std::abs(dot(d, dir)) <= half_span && std::abs(dot(d, nrm)) <= half_width;
            },
            copper, substrate);
        break;
      }
      case DefectClass::short_circuit: {
        const auto& cand =
            short_cands[rng.uniform_int(0, static_cast<std::int64_t>(short_cands.size()) - 1)];
        const double bw = rng.uniform(cfg.short_width_min, cfg.short_width_max);
        const double r = bw / 2.0;
        const int x0 = static_cast<int>(std::min(cand.a.x, cand.b.x) - r - 2);
        const int x1 = static_cast<int>(std::max(cand.a.x, cand.b.x) + r + 2);
        const int y0 = static_cast<int>(std::min(cand.a.y, cand.b.y) - r - 2);
        const int y1 = static_cast<int>(std::max(cand.a.y, cand.b.y) + r + 2);
        st = paint_where(
            trial, x0, y0, x1, y1,
            [&](int x, int y) {
              return dist_point_segment({static_cast<double>(x), static_cast<double>(y)}, cand.a,
                                        cand.b) <= r;
            },
            substrate, copper);
        break;
      }
      case DefectClass::spur: {
        Vec2 q, dir, nrm;
        double w;
        if (!pick_segment_point(pad_r_max + 14.0, q, dir, nrm, w)) continue;
        const double len = rng.uniform(cfg.spur_len_min, cfg.spur_len_max);
        const double sw = rng.uniform(cfg.spur_width_min, cfg.spur_width_max);
        const Vec2 base = add(q, mul(nrm, w / 2.0 - 1.0));
        const Vec2 tip = add(base, mul(nrm, len));
        // keep the protrusion clear of other copper
        bool clear = true;
        for (const Segment& s : segs) {
          const double d = dist_segment_segment(base, tip, s.a, s.b);
          if (d < (s.width + sw) / 2.0 + 4.0 && dist_point_segment(q, s.a, s.b) > s.width) {
            clear = false;
            break;
          }
        }
        for (const PadSpec& p : layout.pads) {
          if (dist_point_segment(p.center, base, tip) < p.pad_radius + sw / 2.0 + 4.0) {
            clear = false;
            break;
          }
        }
        if (!clear) continue;
        const double r = sw / 2.0;
        st = paint_where(
            trial, static_cast<int>(std::min(base.x, tip.x) - r - 2),
            static_cast<int>(std::min(base.y, tip.y) - r - 2),
            static_cast<int>(std::max(base.x, tip.x) + r + 2),
            static_cast<int>(std::max(base.y, tip.y) + r + 2),
            [&](int x, int y) {
              return dist_point_segment({static_cast<double>(x), static_cast<double>(y)}, base,
                                        tip) <= r;
            },
            substrate, copper);
        break;
      }
      case DefectClass::spurious_copper: {
        const double r = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
        const Vec2 center{layout.width / 2.0, layout.height / 2.0};
        const double content_r = 0.48 * std::min(layout.width, layout.height) - r - 4.0;
        const double ang = rng.uniform(0.0, 2.0 * kPi);
        const double rad = content_r * std::sqrt(rng.uniform());
        const Vec2 c = add(center, {rad * std::cos(ang), rad * std::sin(ang)});
        bool clear = true;
        for (const Segment& s : segs) {
          if (dist_point_segment(c, s.a, s.b) < s.width / 2.0 + r + 8.0) {
            clear = false;
            break;
          }
        }
        for (const PadSpec& p : layout.pads) {
          if (norm(sub(c, p.center)) < p.pad_radius + r + 8.0) {
            clear = false;
            break;
          }
        }
        if (!clear) continue;
        const double r2 = r * r;
        st = paint_where(
            trial, static_cast<int>(c.x - r - 2), static_cast<int>(c.y - r - 2),
            static_cast<int>(c.x + r + 2), static_cast<int>(c.y + r + 2),
            [&](int x, int y) {
              const double dx = x - c.x, dy = y - c.y;
              return dx * dx + dy * dy <= r2;
            },
            substrate, copper);
        break;
      }
    }

    if (!st.any() || st.changed < cfg.min_diff_area) continue;
    BoundingBox tight = st.box();
    BoundingBox slacked{std::max(0, tight.xmin - cfg.annotation_slack),
                        std::max(0, tight.ymin - cfg.annotation_slack),
                        std::min(layout.width, tight.xmax + cfg.annotation_slack),
                        std::min(layout.height, tight.ymax + cfg.annotation_slack)};
    BoundingBox guard{std::max(0, slacked.xmin - 2), std::max(0, slacked.ymin - 2),
                      std::min(layout.width, slacked.xmax + 2),
                      std::min(layout.height, slacked.ymax + 2)};
    bool overlaps = false;
    for (const BoundingBox& g : guard_boxes) {
      if (bbox_iou(g, guard) > 0.0) {
        overlaps = true;
        break;
      }
    }
    if (overlaps) {
      if (cls == DefectClass::missing_hole) used_pads.pop_back();
      continue;
    }

    img = std::move(trial);
    guard_boxes.push_back(guard);
    ann.objects.emplace_back(cls, slacked);
    ++placed;
  }

  // the board's nuisance field is identical for clean and defective renders
  apply_nuisance(img, layout);
  std::sort(ann.objects.begin(), ann.objects.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.second.ymin, a.second.xmin) <
           std::make_tuple(b.second.ymin, b.second.xmin);
  });
  return {std::move(img), std::move(ann)};
}

ColorImage rotate_sample(const ColorImage& img, double angle_deg,
                         std::array<std::uint8_t, 3> fill) {
  const Similarity2D t = rotation_about_center(angle_deg * kPi / 180.0, img.width, img.height);
  return warp_image(img, t, img.width, img.height, fill);
}

namespace {

std::string two_digit(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", v);
  return buf;
}

std::string format_angle(double deg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", deg);
  return buf;
}

std::vector<DefectClass> all_classes() {
  std::vector<DefectClass> v;
  for (int i = 0; i < kNumDefectClasses; ++i) v.push_back(static_cast<DefectClass>(i));
  return v;
}

}  // namespace

DatasetManifest write_dataset(const DatasetSpec& spec, const std::string& out_root) {
  const std::vector<DefectClass> classes = spec.classes.empty() ? all_classes() : spec.classes;
  DatasetManifest mf;
  mf.root = out_root;

  fs::create_directories(fs::path(out_root) / "PCB_USED");
  for (const DefectClass c : classes) {
    fs::create_directories(fs::path(out_root) / "Images" / defect_class_folder(c));
    fs::create_directories(fs::path(out_root) / "Annotations" / defect_class_folder(c));
    fs::create_directories(fs::path(out_root) / "rotation" / defect_class_folder(c));
  }

  std::vector<BoardLayout> layouts(spec.templates);
  for (int i = 0; i < spec.templates; ++i) {
    auto [img, layout] = gen_template(mix_seed(spec.seed, 1000 + i), spec.board);
    layouts[i] = std::move(layout);
    const std::string name = two_digit(i + 1) + ".png";
    write_png(img, (fs::path(out_root) / "PCB_USED" / name).string());
    mf.template_files.push_back("PCB_USED/" + name);
  }

  struct Task {
    DefectClass cls;
    int board;
  };
  std::vector<Task> tasks;
  for (const DefectClass c : classes) {
    mf.images[c].resize(spec.boards_per_class);
    mf.annotations[c].resize(spec.boards_per_class);
    mf.rotations[c].resize(spec.boards_per_class);
    for (int j = 0; j < spec.boards_per_class; ++j) tasks.push_back({c, j});
  }

  auto run_task = [&](const Task& task) {
    const int c_ord = static_cast<int>(task.cls);
    const int tpl = task.board % spec.templates;
    Rng draw(mix_seed(spec.seed, 1'000'003ULL * (c_ord + 1), task.board));
    const int count = static_cast<int>(draw.uniform_int(3, 5));
    auto [img, ann] = inject_defects(layouts[tpl], task.cls,
                                     count, mix_seed(spec.seed, 2'000'003ULL * (c_ord + 1), task.board),
                                     spec.defects);
    const std::string stem = two_digit(tpl + 1) + "_" + std::string(defect_class_name(task.cls)) +
                             "_" + two_digit(task.board / spec.templates + 1);
    const std::string fname = stem + ".png";
    ann.filename = fname;
    const std::string folder = defect_class_folder(task.cls);
    write_png(img, (fs::path(out_root) / "Images" / folder / fname).string());
    write_annotation(ann, (fs::path(out_root) / "Annotations" / folder / (stem + ".xml")).string());

    const double angle =
        spec.rot_min_deg + draw.uniform() * (spec.rot_max_deg - spec.rot_min_deg);
    const ColorImage rotated = rotate_sample(img, angle, layouts[tpl].substrate_color);
    write_png(rotated, (fs::path(out_root) / "rotation" / folder / fname).string());

    mf.images[task.cls][task.board] = "Images/" + folder + "/" + fname;
    mf.annotations[task.cls][task.board] = std::move(ann);
    mf.rotations[task.cls][task.board] = {fname, angle};
  };

  const int threads = std::max(1, spec.threads);
  if (threads == 1) {
    for (const Task& t : tasks) run_task(t);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        while (true) {
          const size_t i = next.fetch_add(1);
          if (i >= tasks.size()) break;
          run_task(tasks[i]);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const DefectClass c : classes) {
    std::ofstream f(
        (fs::path(out_root) / "rotation" / (defect_class_folder(c) + "_angles.txt")).string(),
        std::ios::binary);
    for (const RotationEntry& e : mf.rotations[c]) {
      f << e.filename << " " << format_angle(e.angle_deg) << "\n";
    }
  }
  return mf;
}

DatasetManifest read_dataset(const std::string& root, const std::vector<DefectClass>& classes_in) {
  const std::vector<DefectClass> classes = classes_in.empty() ? all_classes() : classes_in;
  DatasetManifest mf;
  mf.root = root;

  const fs::path used = fs::path(root) / "PCB_USED";
  if (!fs::is_directory(used)) {
    throw std::runtime_error("read_dataset: missing PCB_USED folder under " + root);
  }
  for (const auto& e : fs::directory_iterator(used)) {
    if (e.path().extension() == ".png") mf.template_files.push_back("PCB_USED/" + e.path().filename().string());
  }
  std::sort(mf.template_files.begin(), mf.template_files.end());

  for (const DefectClass c : classes) {
    const std::string folder = defect_class_folder(c);
    const fs::path imgs = fs::path(root) / "Images" / folder;
    if (!fs::is_directory(imgs)) {
      throw std::runtime_error("read_dataset: missing images for class " + folder);
    }
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(imgs)) {
      if (e.path().extension() == ".png") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    for (const std::string& n : names) {
      mf.images[c].push_back("Images/" + folder + "/" + n);
      const std::string stem = n.substr(0, n.size() - 4);
      mf.annotations[c].push_back(
          read_annotation((fs::path(root) / "Annotations" / folder / (stem + ".xml")).string()));
    }
    const fs::path angles = fs::path(root) / "rotation" / (folder + "_angles.txt");
    if (fs::exists(angles)) {
      std::ifstream f(angles);
      std::string fname;
      double deg = 0.0;
      while (f >> fname >> deg) mf.rotations[c].push_back({fname, deg});
    }
  }
  return mf;
}

}  // namespace aoi
