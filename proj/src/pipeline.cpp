#include "aoi/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "aoi/nn/train.hpp"
#include "aoi/png_io.hpp"
#include "aoi/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace aoi {

std::vector<MorphStep> default_morph_schedule() {
  return {
      {MorphOp::median, 5, ElemShape::rectangle},
      {MorphOp::close, 15, ElemShape::rectangle},
      {MorphOp::open, 3, ElemShape::rectangle},
      {MorphOp::median, 5, ElemShape::rectangle},
      {MorphOp::close, 29, ElemShape::ellipse},
      {MorphOp::open, 3, ElemShape::rectangle},
      {MorphOp::open, 1, ElemShape::rectangle},
  };
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BinaryImage apply_schedule(BinaryImage img, const std::vector<MorphStep>& schedule) {
  for (const MorphStep& step : schedule) {
    if (step.op == MorphOp::median) {
      img = median_filter(img, step.ksize);
      continue;
    }
    const StructElem elem = step.shape == ElemShape::ellipse
                                ? StructElem::ellipse(step.ksize, step.ksize)
                                : StructElem::rectangle(step.ksize, step.ksize);
    switch (step.op) {
      case MorphOp::open: img = open(img, elem); break;
      case MorphOp::close: img = close(img, elem); break;
      case MorphOp::erode: img = erode(img, elem); break;
      case MorphOp::dilate: img = dilate(img, elem); break;
      case MorphOp::median: break;
    }
  }
  return img;
}

}  // namespace

std::vector<Detection> localize_defects(const BinaryImage& template_bin,
                                        const BinaryImage& test_bin, const PipelineConfig& cfg) {
  const BinaryImage diff = apply_schedule(xor_diff(template_bin, test_bin), cfg.schedule);
  std::vector<Detection> dets;
  for (const Component& c : connected_components(diff, 8)) {
    if (c.area < cfg.min_area) continue;
    dets.push_back({c.box, std::nullopt, static_cast<double>(c.area)});
  }
  dets = nms(std::move(dets), cfg.nms_iou);
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return std::make_pair(a.box.ymin, a.box.xmin) < std::make_pair(b.box.ymin, b.box.xmin);
  });
  return dets;
}

std::array<std::uint8_t, 3> border_median_fill(const ColorImage& img) {
  std::array<std::uint8_t, 3> fill{};
  std::vector<std::uint8_t> ring;
  for (int ch = 0; ch < 3; ++ch) {
    ring.clear();
    for (int x = 0; x < img.width; ++x) {
      ring.push_back(img.at(x, 0, ch));
      ring.push_back(img.at(x, img.height - 1, ch));
    }
    for (int y = 1; y < img.height - 1; ++y) {
      ring.push_back(img.at(0, y, ch));
      ring.push_back(img.at(img.width - 1, y, ch));
    }
    std::nth_element(ring.begin(), ring.begin() + ring.size() / 2, ring.end());
    fill[ch] = ring[ring.size() / 2];
  }
  return fill;
}

InspectionReport inspect(const ColorImage& templ, const ColorImage& test, nn::DensePcbNet* model,
                         const PipelineConfig& cfg) {
  InspectionReport report;
  const auto t_start = std::chrono::steady_clock::now();

  auto t0 = std::chrono::steady_clock::now();
  const GrayImage templ_gray = to_grayscale(templ);
  const RegistrationResult reg = register_images(templ_gray, to_grayscale(test), cfg.registration);
  const ColorImage warped =
      warp_image(test, reg.transform, templ.width, templ.height, border_median_fill(test));
  report.transform = reg.transform;
  report.registration_inliers = reg.inlier_count;
  report.timings.registration = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const BinaryImage templ_bin =
      adaptive_threshold(templ_gray, cfg.threshold_blocksize, cfg.threshold_offset);
  const BinaryImage test_bin =
      adaptive_threshold(to_grayscale(warped), cfg.threshold_blocksize, cfg.threshold_offset);
  report.timings.binaryzation = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  report.detections = localize_defects(templ_bin, test_bin, cfg);
  report.timings.localization = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (model != nullptr) {
    for (Detection& det : report.detections) {
      const ColorImage patch = resize_bilinear(crop(warped, det.box, cfg.crop_pad), 64, 64);
      const auto [cls, probs] = nn::predict(*model, patch);
      det.cls = cls;
      det.score = probs[static_cast<size_t>(cls)];
    }
  }
  report.timings.classification = seconds_since(t0);
  report.timings.total = seconds_since(t_start);
  return report;
}

std::vector<std::vector<ColorImage>> augment_crops(const ColorImage& image, const Annotation& ann,
                                                   int n_extra, int offset_min, int offset_max,
                                                   std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xC40b));
  std::vector<std::vector<ColorImage>> out;
  for (const auto& [cls, box] : ann.objects) {
    (void)cls;
    std::vector<ColorImage> crops;
    crops.push_back(resize_bilinear(crop(image, box, 0), 64, 64));
    for (int i = 0; i < n_extra; ++i) {
      const int dx = static_cast<int>(rng.uniform_int(offset_min, offset_max)) *
                     (rng.uniform() < 0.5 ? -1 : 1);
      const int dy = static_cast<int>(rng.uniform_int(offset_min, offset_max)) *
                     (rng.uniform() < 0.5 ? -1 : 1);
      BoundingBox shifted{box.xmin + dx, box.ymin + dy, box.xmax + dx, box.ymax + dy};
      // crop() clamps to the image, which handles boxes pushed past the border
      crops.push_back(resize_bilinear(crop(image, shifted, 0), 64, 64));
    }
    out.push_back(std::move(crops));
  }
  return out;
}

EvalResult evaluate_detection(const std::vector<ImageEval>& images, double match_iou) {
  EvalResult r;
  int total_gt = 0, matched_gt = 0;
  for (const ImageEval& img : images) {
    ClassMetric& m = r.per_class[static_cast<size_t>(img.cls)];
    m.detected += static_cast<int>(img.detections.size());
    m.actual += static_cast<int>(img.ground_truth.size());
    total_gt += static_cast<int>(img.ground_truth.size());

    // greedy diagnostic matching, highest-score detection first
    std::vector<int> order(img.detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return img.detections[static_cast<size_t>(a)].score > img.detections[static_cast<size_t>(b)].score;
    });
    std::vector<bool> gt_taken(img.ground_truth.size(), false);
    for (int di : order) {
      const Detection& det = img.detections[static_cast<size_t>(di)];
      int best_gt = -1;
      double best_iou = match_iou;
      for (size_t gi = 0; gi < img.ground_truth.size(); ++gi) {
        if (gt_taken[gi]) continue;
        const double iou = bbox_iou(det.box, img.ground_truth[gi]);
        if (iou >= best_iou) {
          best_iou = iou;
          best_gt = static_cast<int>(gi);
        }
      }
      if (best_gt >= 0) {
        gt_taken[static_cast<size_t>(best_gt)] = true;
        ++m.matched;
        ++matched_gt;
      } else {
        ++m.false_detections;
      }
    }
    for (bool taken : gt_taken) {
      if (!taken) ++m.missed;
    }
  }
  for (ClassMetric& m : r.per_class) {
    if (m.actual > 0) {
      m.error_rate = std::abs(m.detected - m.actual) / static_cast<double>(m.actual) * 100.0;
      m.error_rate_valid = true;
    }
  }
  r.gt_coverage = total_gt > 0 ? static_cast<double>(matched_gt) / total_gt : 0.0;
  return r;
}

EvalResult evaluate_classification(const std::vector<DefectClass>& predictions,
                                   const std::vector<DefectClass>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("evaluate_classification: prediction/label count mismatch");
  }
  EvalResult r;
  for (size_t i = 0; i < labels.size(); ++i) {
    ClassMetric& m = r.per_class[static_cast<size_t>(labels[i])];
    ++m.actual;
    if (predictions[i] == labels[i]) ++m.correct;
    ++r.confusion[static_cast<size_t>(labels[i])][static_cast<size_t>(predictions[i])];
  }
  double sum = 0.0;
  int present = 0;
  for (ClassMetric& m : r.per_class) {
    if (m.actual > 0) {
      m.precision = m.correct / static_cast<double>(m.actual) * 100.0;
      m.precision_valid = true;
      sum += m.precision;
      ++present;
    }
  }
  if (present > 0) {
    r.average_precision = sum / present;
    r.average_precision_valid = true;
  }
  return r;
}

BenchmarkResult run_benchmark(const std::string& dataset_root, nn::DensePcbNet* model,
                              const PipelineConfig& cfg, bool use_rotated,
                              std::ostream* progress) {
  const DatasetManifest mf = read_dataset(dataset_root);
  BenchmarkResult result;
  std::vector<ImageEval> evals;
  std::vector<DefectClass> preds, labels;
  StageTimings sums;

  // templates are cached by file name
  std::map<std::string, ColorImage> templates;
  for (const auto& [cls, files] : mf.images) {
    for (size_t i = 0; i < files.size(); ++i) {
      const Annotation& ann = mf.annotations.at(cls)[i];
      const std::string fname = fs::path(files[i]).filename().string();
      const std::string tpl_name = fname.substr(0, fname.find('_')) + ".png";
      const fs::path tpl_path = fs::path(dataset_root) / "PCB_USED" / tpl_name;
      if (!fs::exists(tpl_path)) {
        throw std::runtime_error("run_benchmark: missing template " + tpl_name + " for class " +
                                 defect_class_folder(cls));
      }
      auto it = templates.find(tpl_name);
      if (it == templates.end()) {
        it = templates.emplace(tpl_name, read_png_color(tpl_path.string())).first;
      }
      const std::string test_rel =
          use_rotated ? "rotation/" + defect_class_folder(cls) + "/" + fname : files[i];
      const ColorImage test = read_png_color((fs::path(dataset_root) / test_rel).string());

      const InspectionReport rep = inspect(it->second, test, model, cfg);
      sums.registration += rep.timings.registration;
      sums.binaryzation += rep.timings.binaryzation;
      sums.localization += rep.timings.localization;
      sums.classification += rep.timings.classification;
      sums.total += rep.timings.total;
      ++result.images;

      ImageEval ev;
      ev.cls = cls;
      ev.detections = rep.detections;
      for (const auto& [c, box] : ann.objects) {
        (void)c;
        ev.ground_truth.push_back(box);
      }

      // classification scoring on uniquely matched detections only
      std::vector<bool> gt_taken(ev.ground_truth.size(), false);
      for (const Detection& det : ev.detections) {
        if (!det.cls) continue;
        int best_gt = -1;
        double best_iou = 0.33;
        for (size_t gi = 0; gi < ev.ground_truth.size(); ++gi) {
          if (gt_taken[gi]) continue;
          const double iou = bbox_iou(det.box, ev.ground_truth[gi]);
          if (iou >= best_iou) {
            best_iou = iou;
            best_gt = static_cast<int>(gi);
          }
        }
        if (best_gt >= 0) {
          gt_taken[static_cast<size_t>(best_gt)] = true;
          preds.push_back(*det.cls);
          labels.push_back(cls);
        }
      }
      evals.push_back(std::move(ev));
      if (progress) {
        *progress << fname << ": " << rep.detections.size() << " detections, "
                  << rep.timings.total << " s\n";
      }
    }
  }

  result.eval = evaluate_detection(evals);
  if (!preds.empty()) {
    const EvalResult cls_eval = evaluate_classification(preds, labels);
    for (int i = 0; i < kNumDefectClasses; ++i) {
      result.eval.per_class[static_cast<size_t>(i)].correct = cls_eval.per_class[static_cast<size_t>(i)].correct;
      result.eval.per_class[static_cast<size_t>(i)].precision = cls_eval.per_class[static_cast<size_t>(i)].precision;
      result.eval.per_class[static_cast<size_t>(i)].precision_valid =
          cls_eval.per_class[static_cast<size_t>(i)].precision_valid;
    }
    result.eval.average_precision = cls_eval.average_precision;
    result.eval.average_precision_valid = cls_eval.average_precision_valid;
    result.eval.confusion = cls_eval.confusion;
  }
  if (result.images > 0) {
    result.mean_timings.registration = sums.registration / result.images;
    result.mean_timings.binaryzation = sums.binaryzation / result.images;
    result.mean_timings.localization = sums.localization / result.images;
    result.mean_timings.classification = sums.classification / result.images;
    result.mean_timings.total = sums.total / result.images;
  }
  return result;
}

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, kNumDefectClasses> kClassColors = {{
    {230, 60, 60},    // missing_hole
    {240, 170, 40},   // mouse_bite
    {60, 120, 230},   // open_circuit
    {230, 60, 200},   // short
    {60, 210, 90},    // spur
    {240, 240, 70},   // spurious_copper
}};

}  // namespace

ColorImage draw_detections(const ColorImage& img, const std::vector<Detection>& dets) {
  ColorImage out = img;
  for (const Detection& det : dets) {
    const std::array<std::uint8_t, 3> color =
        det.cls ? kClassColors[static_cast<size_t>(*det.cls)] : std::array<std::uint8_t, 3>{255, 255, 255};
    const BoundingBox& b = det.box;
    for (int t = 0; t < 2; ++t) {
      const int x0 = std::clamp(b.xmin - 1 - t, 0, out.width - 1);
      const int x1 = std::clamp(b.xmax + t, 0, out.width - 1);
      const int y0 = std::clamp(b.ymin - 1 - t, 0, out.height - 1);
      const int y1 = std::clamp(b.ymax + t, 0, out.height - 1);
      for (int x = x0; x <= x1; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          out.at(x, y0, ch) = color[ch];
          out.at(x, y1, ch) = color[ch];
        }
      }
      for (int y = y0; y <= y1; ++y) {
        for (int ch = 0; ch < 3; ++ch) {
          out.at(x0, y, ch) = color[ch];
          out.at(x1, y, ch) = color[ch];
        }
      }
    }
  }
  return out;
}

namespace {

json box_to_json(const BoundingBox& b) {
  return json{{"xmin", b.xmin}, {"ymin", b.ymin}, {"xmax", b.xmax}, {"ymax", b.ymax}};
}

json timings_to_json(const StageTimings& t) {
  return json{{"registration", t.registration},
              {"binaryzation", t.binaryzation},
              {"localization", t.localization},
              {"classification", t.classification},
              {"total", t.total}};
}

}  // namespace

std::string report_to_json(const InspectionReport& report) {
  json dets = json::array();
  for (const Detection& d : report.detections) {
    json j{{"box", box_to_json(d.box)}, {"score", d.score}};
    j["class"] = d.cls ? json(std::string(defect_class_name(*d.cls))) : json(nullptr);
    dets.push_back(std::move(j));
  }
  const json j{
      {"detections", dets},
      {"transform",
       {{"scale", report.transform.scale},
        {"angle_rad", report.transform.angle},
        {"tx", report.transform.tx},
        {"ty", report.transform.ty}}},
      {"registration_inliers", report.registration_inliers},
      {"timings", timings_to_json(report.timings)},
  };
  return j.dump(2);
}

std::string eval_to_json(const BenchmarkResult& result) {
  json per_class = json::object();
  for (int i = 0; i < kNumDefectClasses; ++i) {
    const ClassMetric& m = result.eval.per_class[static_cast<size_t>(i)];
    json cm{{"detected", m.detected}, {"actual", m.actual},
            {"matched", m.matched},   {"false_detections", m.false_detections},
            {"missed", m.missed},     {"correct", m.correct}};
    cm["error_rate_pct"] = m.error_rate_valid ? json(m.error_rate) : json(nullptr);
    cm["precision_pct"] = m.precision_valid ? json(m.precision) : json(nullptr);
    per_class[std::string(defect_class_name(static_cast<DefectClass>(i)))] = std::move(cm);
  }
  json confusion = json::array();
  for (const auto& row : result.eval.confusion) confusion.push_back(row);
  const json j{
      {"per_class", per_class},
      {"average_precision_pct",
       result.eval.average_precision_valid ? json(result.eval.average_precision) : json(nullptr)},
      {"gt_coverage", result.eval.gt_coverage},
      {"confusion", confusion},
      {"images", result.images},
      {"mean_timings", timings_to_json(result.mean_timings)},
  };
  return j.dump(2);
}

CropDataset build_crop_dataset(const DatasetManifest& manifest, int n_extra, int offset_min,
                               int offset_max, double train_frac, double val_frac,
                               std::uint64_t seed) {
  CropDataset ds;
  for (const auto& [cls, files] : manifest.images) {
    // defect-level groups so near-duplicate crops stay within one split
    std::vector<std::vector<nn::CropSample>> groups;
    for (size_t i = 0; i < files.size(); ++i) {
      const ColorImage img = read_png_color((fs::path(manifest.root) / files[i]).string());
      const Annotation& ann = manifest.annotations.at(cls)[i];
      auto crops = augment_crops(img, ann, n_extra, offset_min, offset_max,
                                 mix_seed(seed, static_cast<std::uint64_t>(cls), i));
      for (auto& defect_crops : crops) {
        std::vector<nn::CropSample> group;
        for (const ColorImage& c : defect_crops) {
          group.push_back({nn::tensor_from_image(c), static_cast<int>(cls)});
        }
        groups.push_back(std::move(group));
      }
    }
    Rng rng(mix_seed(seed, 0x5EED, static_cast<std::uint64_t>(cls)));
    for (size_t i = groups.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(groups[i - 1], groups[j]);
    }
    const size_t n_train = static_cast<size_t>(std::llround(train_frac * groups.size()));
    const size_t n_val = static_cast<size_t>(std::llround(val_frac * groups.size()));
    for (size_t g = 0; g < groups.size(); ++g) {
      auto& dst = g < n_train ? ds.train : (g < n_train + n_val ? ds.val : ds.test);
      for (auto& s : groups[g]) dst.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace aoi
