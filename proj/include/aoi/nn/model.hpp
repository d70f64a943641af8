#pragma once

#include <memory>
#include <string>

#include "aoi/nn/layers.hpp"

namespace aoi::nn {

// BN-ReLU-Conv(1x1, bottleneck)-BN-ReLU-Conv(3x3, growth); spatial size preserved.
template <typename T>
class DenseLayerT {
 public:
  DenseLayerT(std::string name, int in_ch, int growth, int bottleneck, Rng& init)
      : bn1_(name + ".bn1", in_ch),
        conv1_(name + ".conv1.weight", in_ch, bottleneck, 1, 1, 0, init),
        bn2_(name + ".bn2", bottleneck),
        conv2_(name + ".conv2.weight", bottleneck, growth, 3, 1, 1, init),
        in_ch_(in_ch) {}

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    return conv2_.forward(relu2_.forward(bn2_.forward(
        conv1_.forward(relu1_.forward(bn1_.forward(x, train))), train)));
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    return bn1_.backward(relu1_.backward(conv1_.backward(
        bn2_.backward(relu2_.backward(conv2_.backward(dy))))));
  }

  void collect(std::vector<ParameterT<T>*>& out) {
    out.push_back(&bn1_.gamma);
    out.push_back(&bn1_.beta);
    out.push_back(&conv1_.weight);
    out.push_back(&bn2_.gamma);
    out.push_back(&bn2_.beta);
    out.push_back(&conv2_.weight);
  }
  void collect_buffers(std::vector<std::pair<std::string, TensorT<T>*>>& out,
                       const std::string& prefix) {
    out.emplace_back(prefix + ".bn1.running_mean", &bn1_.running_mean);
    out.emplace_back(prefix + ".bn1.running_var", &bn1_.running_var);
    out.emplace_back(prefix + ".bn2.running_mean", &bn2_.running_mean);
    out.emplace_back(prefix + ".bn2.running_var", &bn2_.running_var);
  }

  int input_channels() const { return in_ch_; }
  int bottleneck_channels() const { return conv1_.out_channels(); }
  int growth() const { return conv2_.out_channels(); }

 private:
  BatchNorm2dT<T> bn1_;
  Conv2dT<T> conv1_;
  BatchNorm2dT<T> bn2_;
  Conv2dT<T> conv2_;
  ReluT<T> relu1_, relu2_;
  int in_ch_;
};

// Each layer consumes the concatenation of the block input and every earlier
// layer's output; output = concat(input, all layer outputs).
template <typename T>
class DenseBlockT {
 public:
  DenseBlockT(std::string name, int in_ch, int num_layers, int growth, int bottleneck, Rng& init)
      : name_(std::move(name)), in_ch_(in_ch), growth_(growth) {
    for (int l = 0; l < num_layers; ++l) {
      layers_.emplace_back(name_ + ".layer" + std::to_string(l + 1), in_ch + growth * l, growth,
                           bottleneck, init);
    }
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    features_.clear();
    features_.push_back(x);
    for (auto& layer : layers_) {
      features_.push_back(layer.forward(concat_channels(features_), train));
    }
    return concat_channels(features_);
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    // per-feature gradient accumulators, split from the concatenated output
    std::vector<TensorT<T>> grads = split_channels(dy);
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      const TensorT<T> dinput = layers_[static_cast<size_t>(l)].backward(grads[static_cast<size_t>(l) + 1]);
      // dinput covers concat(features[0..l]); fold it back into the accumulators
      std::size_t offset = 0;
      for (int f = 0; f <= l; ++f) {
        TensorT<T>& g = grads[static_cast<size_t>(f)];
        const int ch = features_[static_cast<size_t>(f)].dim(1);
        add_channel_slice(g, dinput, offset, ch);
        offset += static_cast<std::size_t>(ch);
      }
    }
    return grads[0];
  }

  int output_channels() const { return in_ch_ + growth_ * static_cast<int>(layers_.size()); }
  int input_channels() const { return in_ch_; }
  // concatenation edges: layer l consumes l feature maps
  int connection_count() const {
    const int n = static_cast<int>(layers_.size());
    return n * (n + 1) / 2;
  }
  std::vector<DenseLayerT<T>>& layers() { return layers_; }

  void collect(std::vector<ParameterT<T>*>& out) {
    for (auto& l : layers_) l.collect(out);
  }
  void collect_buffers(std::vector<std::pair<std::string, TensorT<T>*>>& out) {
    for (size_t i = 0; i < layers_.size(); ++i) {
      layers_[i].collect_buffers(out, name_ + ".layer" + std::to_string(i + 1));
    }
  }

 private:
  static TensorT<T> concat_channels(const std::vector<TensorT<T>>& parts) {
    const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    int ch = 0;
    for (const auto& p : parts) ch += p.dim(1);
    TensorT<T> out({n, ch, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
      std::size_t dst_c = 0;
      for (const auto& p : parts) {
        const int pc = p.dim(1);
        std::copy_n(p.data.data() + static_cast<std::size_t>(i) * pc * plane,
                    static_cast<std::size_t>(pc) * plane,
                    out.data.data() + (static_cast<std::size_t>(i) * ch + dst_c) * plane);
        dst_c += static_cast<std::size_t>(pc);
      }
    }
    return out;
  }

  std::vector<TensorT<T>> split_channels(const TensorT<T>& x) const {
    std::vector<TensorT<T>> out;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::size_t src_c = 0;
    for (const auto& f : features_) {
      const int ch = f.dim(1);
      TensorT<T> part({n, ch, h, w});
      for (int i = 0; i < n; ++i) {
        std::copy_n(x.data.data() + (static_cast<std::size_t>(i) * x.dim(1) + src_c) * plane,
                    static_cast<std::size_t>(ch) * plane,
                    part.data.data() + static_cast<std::size_t>(i) * ch * plane);
      }
      src_c += static_cast<std::size_t>(ch);
      out.push_back(std::move(part));
    }
    return out;
  }

  // g += slice of src starting at channel `offset`, `ch` channels wide
  static void add_channel_slice(TensorT<T>& g, const TensorT<T>& src, std::size_t offset, int ch) {
    const int n = g.dim(0), h = g.dim(2), w = g.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
      const T* s = src.data.data() + (static_cast<std::size_t>(i) * src.dim(1) + offset) * plane;
      T* d = g.data.data() + static_cast<std::size_t>(i) * ch * plane;
      for (std::size_t j = 0; j < static_cast<std::size_t>(ch) * plane; ++j) d[j] += s[j];
    }
  }

  std::string name_;
  int in_ch_;
  int growth_;
  std::vector<DenseLayerT<T>> layers_;
  std::vector<TensorT<T>> features_;
};

// BN-ReLU-Conv(1x1, C -> C/2)-AvgPool(2x2): channel and spatial halving.
template <typename T>
class TransitionT {
 public:
  TransitionT(std::string name, int in_ch, Rng& init)
      : bn_(name + ".bn", in_ch), conv_(name + ".conv.weight", in_ch, in_ch / 2, 1, 1, 0, init) {
    if (in_ch % 2 != 0) throw std::invalid_argument("transition: channel count must be even");
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    return pool_.forward(conv_.forward(relu_.forward(bn_.forward(x, train))));
  }
  TensorT<T> backward(const TensorT<T>& dy) {
    return bn_.backward(relu_.backward(conv_.backward(pool_.backward(dy))));
  }

  void collect(std::vector<ParameterT<T>*>& out) {
    out.push_back(&bn_.gamma);
    out.push_back(&bn_.beta);
    out.push_back(&conv_.weight);
  }
  void collect_buffers(std::vector<std::pair<std::string, TensorT<T>*>>& out,
                       const std::string& prefix) {
    out.emplace_back(prefix + ".bn.running_mean", &bn_.running_mean);
    out.emplace_back(prefix + ".bn.running_var", &bn_.running_var);
  }
  int output_channels() const { return conv_.out_channels(); }

 private:
  BatchNorm2dT<T> bn_;
  Conv2dT<T> conv_;
  ReluT<T> relu_;
  AvgPoolT<T> pool_;
};

// Stem 7x7/2 conv -> BN-ReLU -> 3x3/2 maxpool -> dense block (6 x growth 32,
// bottleneck 128) -> transition -> dense block -> global avg pool -> linear(6).
template <typename T>
class DensePcbNetT {
 public:
  static constexpr int kGrowth = 32;
  static constexpr int kBottleneck = 128;
  static constexpr int kStemChannels = 64;
  static constexpr int kLayersPerBlock = 6;
  static constexpr int kClasses = 6;

  explicit DensePcbNetT(std::uint64_t seed)
      : init_(mix_seed(seed, 0xA01)),
        stem_("stem.weight", 3, kStemChannels, 7, 2, 3, init_),
        stem_bn_("stem.bn", kStemChannels),
        block1_("block1", kStemChannels, kLayersPerBlock, kGrowth, kBottleneck, init_),
        transition_("transition", block1_.output_channels(), init_),
        block2_("block2", transition_.output_channels(), kLayersPerBlock, kGrowth, kBottleneck,
                init_),
        fc_("fc", block2_.output_channels(), kClasses, init_) {}

  TensorT<T> forward_logits(const TensorT<T>& x, bool train) {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != 64 || x.dim(3) != 64) {
      throw std::invalid_argument("model forward: input must be [N,3,64,64]");
    }
    TensorT<T> t = pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_.forward(x), train)));
    t = block1_.forward(t, train);
    t = transition_.forward(t, train);
    t = block2_.forward(t, train);
    t = gap_.forward(t);
    TensorT<T> flat({t.dim(0), t.dim(1)});
    flat.data = t.data;
    return fc_.forward(flat);
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) { return softmax(forward_logits(x, train)); }

  void backward(const TensorT<T>& dlogits) {
    TensorT<T> d = fc_.backward(dlogits);
    TensorT<T> d4({d.dim(0), d.dim(1), 1, 1});
    d4.data = d.data;
    d = gap_.backward(d4);
    d = block2_.backward(d);
    d = transition_.backward(d);
    d = block1_.backward(d);
    stem_.backward(stem_bn_.backward(stem_relu_.backward(pool_.backward(d))));
  }

  std::vector<ParameterT<T>*> parameters() {
    std::vector<ParameterT<T>*> out;
    out.push_back(&stem_.weight);
    out.push_back(&stem_bn_.gamma);
    out.push_back(&stem_bn_.beta);
    block1_.collect(out);
    transition_.collect(out);
    block2_.collect(out);
    out.push_back(&fc_.weight);
    out.push_back(&fc_.bias);
    return out;
  }

  std::vector<std::pair<std::string, TensorT<T>*>> buffers() {
    std::vector<std::pair<std::string, TensorT<T>*>> out;
    out.emplace_back("stem.bn.running_mean", &stem_bn_.running_mean);
    out.emplace_back("stem.bn.running_var", &stem_bn_.running_var);
    block1_.collect_buffers(out);
    transition_.collect_buffers(out, "transition");
    block2_.collect_buffers(out);
    return out;
  }

  std::size_t num_parameters() {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.numel();
    return n;
  }

  DenseBlockT<T>& block1() { return block1_; }
  DenseBlockT<T>& block2() { return block2_; }
  TransitionT<T>& transition() { return transition_; }

 private:
  Rng init_;
  Conv2dT<T> stem_;
  BatchNorm2dT<T> stem_bn_;
  ReluT<T> stem_relu_;
  MaxPoolT<T> pool_;
  DenseBlockT<T> block1_;
  TransitionT<T> transition_;
  DenseBlockT<T> block2_;
  AdaptiveAvgPoolT<T> gap_;
  LinearT<T> fc_;
};

using DensePcbNet = DensePcbNetT<float>;

// Weights file: magic "AOIW", version u8=1, little-endian; per parameter
// name (u16 length + UTF-8), rank u8, dims u32 each, float32 payload; BN
// running statistics follow as extra entries; trailing CRC32.
void save_weights(DensePcbNet& model, const std::string& path);
void load_weights(DensePcbNet& model, const std::string& path);

}  // namespace aoi::nn
