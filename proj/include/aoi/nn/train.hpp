#pragma once

#include <array>
#include <cstdint>

#include "aoi/core.hpp"
#include "aoi/nn/model.hpp"

namespace aoi::nn {

struct TrainConfig {
  double lr0 = 0.01;
  double lr_decay = 0.1;
  int decay_every = 7;  // epochs
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int batch_size = 8;
  int epochs = 50;
  std::uint64_t seed = 1;
};

inline double lr_schedule(int epoch, const TrainConfig& cfg = {}) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  double lr = cfg.lr0;
  for (int i = 0; i < epoch / cfg.decay_every; ++i) lr *= cfg.lr_decay;
  return lr;
}

// v <- momentum*v + (g + wd*w); w <- w - lr*v. Weight decay skips BN affine
// parameters and biases (their decay flag is false).
template <typename T>
void sgd_step(const std::vector<ParameterT<T>*>& params, double lr, double momentum = 0.9,
              double weight_decay = 1e-5) {
  for (ParameterT<T>* p : params) {
    const double wd = p->decay ? weight_decay : 0.0;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double g = static_cast<double>(p->grad[i]) + wd * static_cast<double>(p->value[i]);
      const double v = momentum * static_cast<double>(p->momentum[i]) + g;
      p->momentum[i] = static_cast<T>(v);
      p->value[i] = static_cast<T>(p->value[i] - lr * v);
    }
  }
}

struct CropSample {
  Tensor x;  // [3,64,64], RGB scaled to [0,1]
  int label = 0;
};

Tensor tensor_from_image(const ColorImage& img);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_accuracy = 0.0;
  int best_epoch = -1;
};

// Deterministic given cfg.seed; the model ends up holding the best-validation
// weights seen during training.
TrainResult train_classifier(DensePcbNet& model, const std::vector<CropSample>& train_set,
                             const std::vector<CropSample>& val_set, const TrainConfig& cfg);

double evaluate_accuracy(DensePcbNet& model, const std::vector<CropSample>& samples,
                         int batch_size = 8);

std::pair<DefectClass, std::array<float, kNumDefectClasses>> predict(DensePcbNet& model,
                                                                     const ColorImage& crop64);

}  // namespace aoi::nn
