#include "aoi/nn/train.hpp"

#include <algorithm>
#include <numeric>

#include "aoi/imgproc.hpp"

namespace aoi::nn {

Tensor tensor_from_image(const ColorImage& img) {
  Tensor t({3, img.height, img.width});
  std::size_t i = 0;
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) t[i++] = static_cast<float>(img.at(x, y, ch)) / 255.0f;
    }
  }
  return t;
}

namespace {

Tensor stack_batch(const std::vector<CropSample>& samples, const std::vector<int>& idx,
                   std::size_t begin, std::size_t end, std::vector<int>& labels) {
  const int n = static_cast<int>(end - begin);
  const Tensor& first = samples[static_cast<size_t>(idx[begin])].x;
  Tensor batch({n, first.dim(0), first.dim(1), first.dim(2)});
  labels.clear();
  const std::size_t stride = first.numel();
  for (int i = 0; i < n; ++i) {
    const CropSample& s = samples[static_cast<size_t>(idx[begin + static_cast<size_t>(i)])];
    std::copy(s.x.data.begin(), s.x.data.end(), batch.data.begin() + static_cast<size_t>(i) * stride);
    labels.push_back(s.label);
  }
  return batch;
}

struct Snapshot {
  std::vector<std::vector<float>> params;
  std::vector<std::vector<float>> buffers;
};

Snapshot take_snapshot(DensePcbNet& model) {
  Snapshot s;
  for (auto* p : model.parameters()) s.params.push_back(p->value.data);
  for (auto& [name, buf] : model.buffers()) s.buffers.push_back(buf->data);
  return s;
}

void restore_snapshot(DensePcbNet& model, const Snapshot& s) {
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.data = s.params[i];
  const auto buffers = model.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) buffers[i].second->data = s.buffers[i];
}

}  // namespace

double evaluate_accuracy(DensePcbNet& model, const std::vector<CropSample>& samples,
                         int batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluate_accuracy: empty sample set");
  std::vector<int> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t correct = 0;
  std::vector<int> labels;
  for (std::size_t b = 0; b < samples.size(); b += static_cast<size_t>(batch_size)) {
    const std::size_t e = std::min(samples.size(), b + static_cast<size_t>(batch_size));
    const Tensor batch = stack_batch(samples, idx, b, e, labels);
    const Tensor probs = model.forward(batch, /*train=*/false);
    for (std::size_t i = 0; i < e - b; ++i) {
      const float* row = probs.data.data() + i * kNumDefectClasses;
      const int pred = static_cast<int>(std::max_element(row, row + kNumDefectClasses) - row);
      if (pred == labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train_classifier(DensePcbNet& model, const std::vector<CropSample>& train_set,
                             const std::vector<CropSample>& val_set, const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train_classifier: datasets must be non-empty");
  }
  TrainResult result;
  Snapshot best = take_snapshot(model);
  const auto params = model.parameters();

  std::vector<int> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> labels;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    Rng shuffle_rng(mix_seed(cfg.seed, 0xE0, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(idx[i - 1], idx[j]);
    }

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < idx.size(); b += static_cast<size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(idx.size(), b + static_cast<size_t>(cfg.batch_size));
      const Tensor batch = stack_batch(train_set, idx, b, e, labels);
      for (auto* p : params) p->zero_grad();
      const Tensor logits = model.forward_logits(batch, /*train=*/true);
      auto [loss, dlogits] = softmax_cross_entropy(logits, labels);
      model.backward(dlogits);
      sgd_step(params, lr, cfg.momentum, cfg.weight_decay);
      loss_sum += loss;
      ++batches;
    }

    const double val_acc = evaluate_accuracy(model, val_set, cfg.batch_size);
    result.log.push_back({epoch, lr, loss_sum / static_cast<double>(batches), val_acc});
    if (val_acc > result.best_val_accuracy || result.best_epoch < 0) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      best = take_snapshot(model);
    }
  }
  restore_snapshot(model, best);
  return result;
}

std::pair<DefectClass, std::array<float, kNumDefectClasses>> predict(DensePcbNet& model,
                                                                     const ColorImage& crop64) {
  const ColorImage sized =
      (crop64.width == 64 && crop64.height == 64) ? crop64 : resize_bilinear(crop64, 64, 64);
  const Tensor one = tensor_from_image(sized);
  Tensor batch({1, 3, 64, 64});
  batch.data = one.data;
  const Tensor probs = model.forward(batch, /*train=*/false);
  std::array<float, kNumDefectClasses> p{};
  std::copy_n(probs.data.begin(), kNumDefectClasses, p.begin());
  const int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  return {static_cast<DefectClass>(arg), p};
}

}  // namespace aoi::nn
