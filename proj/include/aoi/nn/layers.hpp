#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "aoi/nn/tensor.hpp"
#include "aoi/rng.hpp"

namespace aoi::nn {

namespace detail {
// row-major GEMM: C = alpha * op(A) * op(B) + beta * C, backed by BLAS.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
}  // namespace detail

// Convolution without bias (BN follows every conv in this network).
template <typename T>
class Conv2dT {
 public:
  ParameterT<T> weight;  // [O, C, K, K]

  Conv2dT(std::string name, int in_ch, int out_ch, int ksize, int stride, int pad, Rng& init)
      : weight(std::move(name), {out_ch, in_ch, ksize, ksize}, true),
        in_ch_(in_ch),
        out_ch_(out_ch),
        k_(ksize),
        stride_(stride),
        pad_(pad) {
    const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * ksize * ksize));
    for (T& w : weight.value.data) w = static_cast<T>(init.normal(0.0, std));
  }

  TensorT<T> forward(const TensorT<T>& x) {
    if (x.rank() != 4 || x.dim(1) != in_ch_) {
      throw std::invalid_argument("conv2d " + weight.name + ": input channels mismatch");
    }
    x_cache_ = x;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int ho = detail::conv_out_size(h, k_, stride_, pad_);
    const int wo = detail::conv_out_size(w, k_, stride_, pad_);
    if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: output would be empty");
    TensorT<T> y({n, out_ch_, ho, wo});
    std::vector<T> col(static_cast<size_t>(in_ch_) * k_ * k_ * ho * wo);
    for (int i = 0; i < n; ++i) {
      im2col(x, i, col.data(), ho, wo);
      detail::gemm(false, false, out_ch_, ho * wo, in_ch_ * k_ * k_, T(1), weight.value.data.data(),
                   in_ch_ * k_ * k_, col.data(), ho * wo, T(0),
                   y.data.data() + static_cast<size_t>(i) * out_ch_ * ho * wo, ho * wo);
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    const TensorT<T>& x = x_cache_;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    const int ckk = in_ch_ * k_ * k_;
    TensorT<T> dx(x.shape);
    std::vector<T> col(static_cast<size_t>(ckk) * ho * wo);
    std::vector<T> dcol(col.size());
    for (int i = 0; i < n; ++i) {
      const T* dyi = dy.data.data() + static_cast<size_t>(i) * out_ch_ * ho * wo;
      im2col(x, i, col.data(), ho, wo);
      // dW += dy_i * col^T
      detail::gemm(false, true, out_ch_, ckk, ho * wo, T(1), dyi, ho * wo, col.data(), ho * wo,
                   T(1), weight.grad.data.data(), ckk);
      // dcol = W^T * dy_i
      detail::gemm(true, false, ckk, ho * wo, out_ch_, T(1), weight.value.data.data(), ckk, dyi,
                   ho * wo, T(0), dcol.data(), ho * wo);
      col2im(dcol.data(), dx, i, ho, wo);
    }
    return dx;
  }

  int out_channels() const { return out_ch_; }
  int in_channels() const { return in_ch_; }

 private:
  void im2col(const TensorT<T>& x, int sample, T* col, int ho, int wo) const {
    const int h = x.dim(2), w = x.dim(3);
    std::size_t idx = 0;
    for (int c = 0; c < in_ch_; ++c) {
      for (int u = 0; u < k_; ++u) {
        for (int v = 0; v < k_; ++v) {
          for (int i = 0; i < ho; ++i) {
            const int yy = i * stride_ - pad_ + u;
            if (yy < 0 || yy >= h) {
              for (int j = 0; j < wo; ++j) col[idx++] = T(0);
              continue;
            }
            for (int j = 0; j < wo; ++j) {
              const int xx = j * stride_ - pad_ + v;
              col[idx++] = (xx >= 0 && xx < w) ? x.at4(sample, c, yy, xx) : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const T* dcol, TensorT<T>& dx, int sample, int ho, int wo) const {
    const int h = dx.dim(2), w = dx.dim(3);
    std::size_t idx = 0;
    for (int c = 0; c < in_ch_; ++c) {
      for (int u = 0; u < k_; ++u) {
        for (int v = 0; v < k_; ++v) {
          for (int i = 0; i < ho; ++i) {
            const int yy = i * stride_ - pad_ + u;
            if (yy < 0 || yy >= h) {
              idx += wo;
              continue;
            }
            for (int j = 0; j < wo; ++j) {
              const int xx = j * stride_ - pad_ + v;
              if (xx >= 0 && xx < w) dx.at4(sample, c, yy, xx) += dcol[idx];
              ++idx;
            }
          }
        }
      }
    }
  }

  TensorT<T> x_cache_;
  int in_ch_, out_ch_, k_, stride_, pad_;
};

template <typename T>
class BatchNorm2dT {
 public:
  ParameterT<T> gamma;
  ParameterT<T> beta;
  TensorT<T> running_mean;
  TensorT<T> running_var;
  T eps = static_cast<T>(1e-5);
  T stat_momentum = static_cast<T>(0.1);

  BatchNorm2dT(std::string name, int channels)
      : gamma(name + ".gamma", {channels}, false),
        beta(name + ".beta", {channels}, false),
        running_mean({channels}),
        running_var({channels}),
        channels_(channels) {
    std::fill(gamma.value.data.begin(), gamma.value.data.end(), T(1));
    std::fill(running_var.data.begin(), running_var.data.end(), T(1));
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    if (x.rank() != 4 || x.dim(1) != channels_) {
      throw std::invalid_argument("batchnorm " + gamma.name + ": channel mismatch");
    }
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t m = static_cast<std::size_t>(n) * h * w;
    if (train && m < 2) throw std::invalid_argument("batchnorm: train mode needs N*H*W >= 2");
    TensorT<T> y(x.shape);
    trained_forward_ = train;
    if (train) {
      xhat_ = TensorT<T>(x.shape);
      invstd_ = TensorT<T>({channels_});
      for (int c = 0; c < channels_; ++c) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) mean += x.at4(i, c, yy, xx);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (int i = 0; i < n; ++i)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
              const double d = x.at4(i, c, yy, xx) - mean;
              var += d * d;
            }
        var /= static_cast<double>(m);
        const double invstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
        invstd_[static_cast<size_t>(c)] = static_cast<T>(invstd);
        running_mean[static_cast<size_t>(c)] = static_cast<T>(
            (1.0 - stat_momentum) * running_mean[static_cast<size_t>(c)] + stat_momentum * mean);
        running_var[static_cast<size_t>(c)] = static_cast<T>(
            (1.0 - stat_momentum) * running_var[static_cast<size_t>(c)] + stat_momentum * var);
        const T g = gamma.value[static_cast<size_t>(c)];
        const T b = beta.value[static_cast<size_t>(c)];
        for (int i = 0; i < n; ++i)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
              const T xh = static_cast<T>((x.at4(i, c, yy, xx) - mean) * invstd);
              xhat_.at4(i, c, yy, xx) = xh;
              y.at4(i, c, yy, xx) = g * xh + b;
            }
      }
    } else {
      for (int c = 0; c < channels_; ++c) {
        const T g = gamma.value[static_cast<size_t>(c)];
        const T b = beta.value[static_cast<size_t>(c)];
        const T mean = running_mean[static_cast<size_t>(c)];
        const T invstd = static_cast<T>(1.0 / std::sqrt(running_var[static_cast<size_t>(c)] + eps));
        for (int i = 0; i < n; ++i)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
              y.at4(i, c, yy, xx) = g * (x.at4(i, c, yy, xx) - mean) * invstd + b;
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (!trained_forward_) throw std::logic_error("batchnorm: backward requires a train-mode forward");
    const int n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const double m = static_cast<double>(n) * h * w;
    TensorT<T> dx(dy.shape);
    for (int c = 0; c < channels_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < n; ++i)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) {
            const double d = dy.at4(i, c, yy, xx);
            sum_dy += d;
            sum_dy_xhat += d * xhat_.at4(i, c, yy, xx);
          }
      gamma.grad[static_cast<size_t>(c)] += static_cast<T>(sum_dy_xhat);
      beta.grad[static_cast<size_t>(c)] += static_cast<T>(sum_dy);
      const double g = gamma.value[static_cast<size_t>(c)];
      const double invstd = invstd_[static_cast<size_t>(c)];
      for (int i = 0; i < n; ++i)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) {
            const double d = dy.at4(i, c, yy, xx);
            const double xh = xhat_.at4(i, c, yy, xx);
            dx.at4(i, c, yy, xx) =
                static_cast<T>(g * invstd * (d - sum_dy / m - xh * sum_dy_xhat / m));
          }
    }
    return dx;
  }

  int channels() const { return channels_; }

 private:
  int channels_;
  TensorT<T> xhat_, invstd_;
  bool trained_forward_ = false;
};

template <typename T>
class ReluT {
 public:
  TensorT<T> forward(const TensorT<T>& x) {
    mask_.assign(x.numel(), 0);
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (x[i] > T(0)) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    }
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) {
    TensorT<T> dx(dy.shape);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = mask_[i] ? dy[i] : T(0);
    return dx;
  }

 private:
  std::vector<std::uint8_t> mask_;
};

// 3x3 stride-2 pad-1 max pooling; gradient routes to the first argmax.
template <typename T>
class MaxPoolT {
 public:
  MaxPoolT(int ksize = 3, int stride = 2, int pad = 1) : k_(ksize), stride_(stride), pad_(pad) {}

  TensorT<T> forward(const TensorT<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = detail::conv_out_size(h, k_, stride_, pad_);
    const int wo = detail::conv_out_size(w, k_, stride_, pad_);
    in_shape_ = x.shape;
    TensorT<T> y({n, c, ho, wo});
    argmax_.assign(y.numel(), 0);
    std::size_t oi = 0;
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        for (int yy = 0; yy < ho; ++yy) {
          for (int xx = 0; xx < wo; ++xx, ++oi) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_idx = 0;
            for (int u = 0; u < k_; ++u) {
              const int sy = yy * stride_ - pad_ + u;
              if (sy < 0 || sy >= h) continue;
              for (int v = 0; v < k_; ++v) {
                const int sx = xx * stride_ - pad_ + v;
                if (sx < 0 || sx >= w) continue;
                const T val = x.at4(i, ch, sy, sx);
                if (val > best) {
                  best = val;
                  best_idx = ((static_cast<std::size_t>(i) * c + ch) * h + sy) * w + sx;
                }
              }
            }
            y[oi] = best;
            argmax_[oi] = best_idx;
          }
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    TensorT<T> dx(in_shape_);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[argmax_[i]] += dy[i];
    return dx;
  }

 private:
  int k_, stride_, pad_;
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

// 2x2 stride-2 average pooling
template <typename T>
class AvgPoolT {
 public:
  TensorT<T> forward(const TensorT<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("avgpool: H and W must be even");
    in_shape_ = x.shape;
    TensorT<T> y({n, c, h / 2, w / 2});
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < h / 2; ++yy)
          for (int xx = 0; xx < w / 2; ++xx)
            y.at4(i, ch, yy, xx) =
                (x.at4(i, ch, 2 * yy, 2 * xx) + x.at4(i, ch, 2 * yy, 2 * xx + 1) +
                 x.at4(i, ch, 2 * yy + 1, 2 * xx) + x.at4(i, ch, 2 * yy + 1, 2 * xx + 1)) /
                T(4);
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) {
    TensorT<T> dx(in_shape_);
    const int n = dy.dim(0), c = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < ho; ++yy)
          for (int xx = 0; xx < wo; ++xx) {
            const T g = dy.at4(i, ch, yy, xx) / T(4);
            dx.at4(i, ch, 2 * yy, 2 * xx) = g;
            dx.at4(i, ch, 2 * yy, 2 * xx + 1) = g;
            dx.at4(i, ch, 2 * yy + 1, 2 * xx) = g;
            dx.at4(i, ch, 2 * yy + 1, 2 * xx + 1) = g;
          }
    return dx;
  }

 private:
  std::vector<int> in_shape_;
};

// global average pooling to [N,C,1,1]
template <typename T>
class AdaptiveAvgPoolT {
 public:
  TensorT<T> forward(const TensorT<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    in_shape_ = x.shape;
    TensorT<T> y({n, c, 1, 1});
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) acc += x.at4(i, ch, yy, xx);
        y.at4(i, ch, 0, 0) = static_cast<T>(acc / (static_cast<double>(h) * w));
      }
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy) {
    TensorT<T> dx(in_shape_);
    const int n = dy.dim(0), c = dy.dim(1);
    const int h = in_shape_[2], w = in_shape_[3];
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T g = dy.at4(i, ch, 0, 0) / static_cast<T>(h * w);
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) dx.at4(i, ch, yy, xx) = g;
      }
    return dx;
  }

 private:
  std::vector<int> in_shape_;
};

template <typename T>
class LinearT {
 public:
  ParameterT<T> weight;  // [out, in]
  ParameterT<T> bias;    // [out]

  LinearT(std::string name, int in_features, int out_features, Rng& init)
      : weight(name + ".weight", {out_features, in_features}, true),
        bias(name + ".bias", {out_features}, false),
        in_(in_features),
        out_(out_features) {
    const double std = std::sqrt(2.0 / in_features);
    for (T& w : weight.value.data) w = static_cast<T>(init.normal(0.0, std));
  }

  TensorT<T> forward(const TensorT<T>& x) {
    if (x.rank() != 2 || x.dim(1) != in_) throw std::invalid_argument("linear: shape mismatch");
    x_cache_ = x;
    const int n = x.dim(0);
    TensorT<T> y({n, out_});
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) y.data[static_cast<size_t>(i) * out_ + o] = bias.value[static_cast<size_t>(o)];
    detail::gemm(false, true, n, out_, in_, T(1), x.data.data(), in_, weight.value.data.data(), in_,
                 T(1), y.data.data(), out_);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    const int n = dy.dim(0);
    // dW += dy^T * x ; db += sum(dy) ; dx = dy * W
    detail::gemm(true, false, out_, in_, n, T(1), dy.data.data(), out_, x_cache_.data.data(), in_,
                 T(1), weight.grad.data.data(), in_);
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) bias.grad[static_cast<size_t>(o)] += dy.data[static_cast<size_t>(i) * out_ + o];
    TensorT<T> dx({n, in_});
    detail::gemm(false, false, n, in_, out_, T(1), dy.data.data(), out_, weight.value.data.data(),
                 in_, T(0), dx.data.data(), in_);
    return dx;
  }

 private:
  TensorT<T> x_cache_;
  int in_, out_;
};

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  TensorT<T> p(logits.shape);
  for (int i = 0; i < n; ++i) {
    const T* row = logits.data.data() + static_cast<size_t>(i) * k;
    T* out = p.data.data() + static_cast<size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      const double e = std::exp(static_cast<double>(row[j] - mx));
      out[j] = static_cast<T>(e);
      sum += e;
    }
    for (int j = 0; j < k; ++j) out[j] = static_cast<T>(out[j] / sum);
  }
  return p;
}

// Returns (mean loss, dlogits = (p - onehot)/N).
template <typename T>
std::pair<T, TensorT<T>> softmax_cross_entropy(const TensorT<T>& logits,
                                               const std::vector<int>& labels) {
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  for (int l : labels) {
    if (l < 0 || l >= k) throw std::invalid_argument("softmax_cross_entropy: label out of range");
  }
  TensorT<T> p = softmax(logits);
  double loss = 0.0;
  TensorT<T> dlogits(logits.shape);
  for (int i = 0; i < n; ++i) {
    const T* prow = p.data.data() + static_cast<size_t>(i) * k;
    T* drow = dlogits.data.data() + static_cast<size_t>(i) * k;
    loss -= std::log(std::max(static_cast<double>(prow[labels[static_cast<size_t>(i)]]), 1e-300));
    for (int j = 0; j < k; ++j) {
      drow[j] = static_cast<T>((prow[j] - (j == labels[static_cast<size_t>(i)] ? T(1) : T(0))) / n);
    }
  }
  return {static_cast<T>(loss / n), std::move(dlogits)};
}

}  // namespace aoi::nn
