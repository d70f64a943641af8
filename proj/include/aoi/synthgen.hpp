#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aoi/core.hpp"

namespace aoi {

struct PadSpec {
  Vec2 center;
  double pad_radius = 0.0;
  double hole_radius = 0.0;
};

struct TraceSpec {
  std::vector<Vec2> points;  // Manhattan polyline
  double width = 3.0;
};

struct BoardLayout {
  int width = 0;
  int height = 0;
  std::vector<TraceSpec> traces;
  std::vector<PadSpec> pads;
  std::array<std::uint8_t, 3> substrate_color{15, 70, 35};
  std::array<std::uint8_t, 3> copper_color{190, 155, 70};
  std::array<std::uint8_t, 3> hole_color{12, 12, 12};
  // photometric nuisance, applied identically to clean and defective renders of
  // this board so changed pixels stay confined to the defect boxes
  double illumination_gradient = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t nuisance_seed = 0;
};

struct BoardConfig {
  int width = 600;
  int height = 600;
  int traces = 18;
  double grid_pitch = 58.0;
  double grid_jitter = 8.0;
  // all copper stays inside this disc so arbitrary rotations keep it in frame
  double content_radius_frac = 0.48;
  double trace_width = 13.0;
  double pad_radius_min = 13.0;
  double pad_radius_max = 16.0;
  double hole_radius_min = 9.0;
  double hole_radius_max = 11.0;
  double clearance = 6.0;
  // photometric nuisance, defaults off
  double illumination_gradient = 0.0;  // relative amplitude, e.g. 0.15
  double noise_sigma = 0.0;            // gray levels per channel
};

struct DefectConfig {
  int annotation_slack = 5;       // px added around the tight changed-pixel box
  double min_diff_area = 90.0;    // resample a defect below this changed-pixel count
  double mouse_bite_radius_min = 10.0;
  double mouse_bite_radius_max = 14.0;
  double mouse_bite_depth_min = 9.0;
  double open_span_min = 16.0;
  double open_span_max = 26.0;
  double short_width_min = 8.0;
  double short_width_max = 10.0;
  double short_gap_max = 56.0;
  double spur_width_min = 9.0;
  double spur_width_max = 11.0;
  double spur_len_min = 18.0;
  double spur_len_max = 26.0;
  double blob_radius_min = 7.0;
  double blob_radius_max = 10.0;
};

ColorImage render_layout(const BoardLayout& layout);

// Deterministic in seed; throws when the requested trace count cannot be routed.
std::pair<ColorImage, BoardLayout> gen_template(std::uint64_t seed, const BoardConfig& cfg = {});

// Renders `count` defects of one class onto the layout; annotation boxes are
// tight changed-pixel boxes grown by the configured slack, pairwise disjoint.
std::pair<ColorImage, Annotation> inject_defects(const BoardLayout& layout, DefectClass cls,
                                                 int count, std::uint64_t seed,
                                                 const DefectConfig& cfg = {});

ColorImage rotate_sample(const ColorImage& img, double angle_deg,
                         std::array<std::uint8_t, 3> fill);

struct RotationEntry {
  std::string filename;
  double angle_deg = 0.0;
};

struct DatasetSpec {
  std::vector<DefectClass> classes;  // empty means all six
  int boards_per_class = 10;
  int templates = 10;
  std::uint64_t seed = 42;
  BoardConfig board;
  DefectConfig defects;
  double rot_min_deg = 0.0;
  double rot_max_deg = 360.0;
  int threads = 1;
};

struct DatasetManifest {
  std::string root;
  std::vector<std::string> template_files;  // relative to root
  std::map<DefectClass, std::vector<std::string>> images;
  std::map<DefectClass, std::vector<Annotation>> annotations;
  std::map<DefectClass, std::vector<RotationEntry>> rotations;
};

// Tree layout: Images/<Class>/, Annotations/<Class>/, PCB_USED/, rotation/<Class>/
// plus rotation/<Class>_angles.txt. Byte-identical for identical (spec, seed).
DatasetManifest write_dataset(const DatasetSpec& spec, const std::string& out_root);

// Re-reads an existing tree (files must exist; angles parsed from the txt files).
DatasetManifest read_dataset(const std::string& root,
                             const std::vector<DefectClass>& classes = {});

}  // namespace aoi
