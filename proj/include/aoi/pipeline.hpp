#pragma once

#include <array>
#include <iosfwd>
#include <string>

#include "aoi/core.hpp"
#include "aoi/imgproc.hpp"
#include "aoi/nn/train.hpp"
#include "aoi/registration.hpp"
#include "aoi/synthgen.hpp"

namespace aoi {

enum class MorphOp { median, open, close, erode, dilate };

struct MorphStep {
  MorphOp op;
  int ksize;         // odd
  ElemShape shape;   // ignored for median
};

// Seven-step filtering schedule: median 5, close 15 rect, open 3 rect,
// median 5, close 29 ellipse, open 3 rect, open 1 rect (a deliberate no-op,
// kept for fidelity with the reference schedule).
std::vector<MorphStep> default_morph_schedule();

struct PipelineConfig {
  int threshold_blocksize = 31;
  double threshold_offset = 0.0;
  std::vector<MorphStep> schedule = default_morph_schedule();
  std::int64_t min_area = 50;
  double nms_iou = 0.3;
  int crop_pad = 5;
  RegistrationConfig registration;
  std::string weights_path;
};

struct StageTimings {
  double registration = 0.0;
  double binaryzation = 0.0;
  double localization = 0.0;
  double classification = 0.0;
  double total = 0.0;
};

struct InspectionReport {
  std::vector<Detection> detections;
  Similarity2D transform;
  int registration_inliers = 0;
  StageTimings timings;
};

// XOR -> schedule -> components(8) -> area filter -> NMS; detections carry
// score = component area and are sorted by (ymin, xmin).
std::vector<Detection> localize_defects(const BinaryImage& template_bin,
                                        const BinaryImage& test_bin, const PipelineConfig& cfg);

// Per-channel median of the image border ring; used as warp fill so the
// exposed corners blend into the substrate.
std::array<std::uint8_t, 3> border_median_fill(const ColorImage& img);

// Register test onto template, binarize both, localize, then classify each
// padded crop when a model is supplied (detections stay unclassified otherwise).
InspectionReport inspect(const ColorImage& templ, const ColorImage& test,
                         nn::DensePcbNet* model, const PipelineConfig& cfg);

// One original plus n_extra offset crops per annotated defect, all 64x64.
// Offsets are per-axis, sign random, magnitude uniform in [offset_min, offset_max].
std::vector<std::vector<ColorImage>> augment_crops(const ColorImage& image, const Annotation& ann,
                                                   int n_extra, int offset_min, int offset_max,
                                                   std::uint64_t seed);

struct ClassMetric {
  int detected = 0;  // d
  int actual = 0;    // a
  double error_rate = 0.0;  // P_d, percent
  bool error_rate_valid = false;
  int matched = 0;
  int false_detections = 0;
  int missed = 0;
  int correct = 0;          // c
  double precision = 0.0;   // P_c, percent
  bool precision_valid = false;
};

struct EvalResult {
  std::array<ClassMetric, kNumDefectClasses> per_class{};
  double average_precision = 0.0;  // AP_c, percent
  bool average_precision_valid = false;
  std::array<std::array<int, kNumDefectClasses>, kNumDefectClasses> confusion{};  // [truth][pred]
  double gt_coverage = 0.0;  // fraction of GT boxes matched at the diagnostic IoU
};

struct ImageEval {
  DefectClass cls;  // boards carry a single defect class
  std::vector<Detection> detections;
  std::vector<BoundingBox> ground_truth;
};

// Count-based error rate P_d = |d - a| / a * 100 per class; greedy IoU matching
// feeds the matched/missed diagnostics only.
EvalResult evaluate_detection(const std::vector<ImageEval>& images, double match_iou = 0.33);

// P_c = c / a * 100 per class present in labels; AP_c averages those classes.
EvalResult evaluate_classification(const std::vector<DefectClass>& predictions,
                                   const std::vector<DefectClass>& labels);

struct BenchmarkResult {
  EvalResult eval;
  StageTimings mean_timings;
  int images = 0;
};

// Runs inspect over every (template, rotated test) pair in the dataset tree;
// duplicate and false detections are excluded before classification scoring.
BenchmarkResult run_benchmark(const std::string& dataset_root, nn::DensePcbNet* model,
                              const PipelineConfig& cfg, bool use_rotated = true,
                              std::ostream* progress = nullptr);

ColorImage draw_detections(const ColorImage& img, const std::vector<Detection>& dets);

std::string report_to_json(const InspectionReport& report);
std::string eval_to_json(const BenchmarkResult& result);

// Crop corpus for the classifier, split at defect granularity so offset crops
// of one defect never straddle the train/test boundary.
struct CropDataset {
  std::vector<nn::CropSample> train;
  std::vector<nn::CropSample> val;
  std::vector<nn::CropSample> test;
};

CropDataset build_crop_dataset(const DatasetManifest& manifest, int n_extra, int offset_min,
                               int offset_max, double train_frac, double val_frac,
                               std::uint64_t seed);

}  // namespace aoi
