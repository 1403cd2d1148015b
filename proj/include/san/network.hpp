#ifndef SAN_NETWORK_HPP
#define SAN_NETWORK_HPP

#include <algorithm>
#include <memory>
#include <vector>

#include "san/layers.hpp"

namespace san {

enum class LayerKind {
  kConv,
  kConvStride2,
  kConvComparison,
  kBatchNorm,
  kRelu,
  kLeakyRelu,
  kSigmoid,
  kFullyConnected,
};

struct LayerSpec {
  LayerKind kind;
  i64 in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
};

// An ordered layer stack with explicit forward/backward. One instance is
// confined to a single logical thread during a training step; layers carry
// step-local caches.
template <typename T>
class NetworkT {
 public:
  void add(LayerSpec spec, std::unique_ptr<LayerT<T>> layer) {
    specs_.push_back(spec);
    layers_.push_back(std::move(layer));
  }

  TensorT<T> forward(const TensorT<T>& x, Mode mode) {
    TensorT<T> v = x;
    for (auto& layer : layers_) v = layer->forward(v, mode);
    return v;
  }

  // Applies only the first `count` layers; mainly for shape probes in tests.
  TensorT<T> forward_prefix(const TensorT<T>& x, Mode mode, size_t count) {
    TensorT<T> v = x;
    for (size_t i = 0; i < count && i < layers_.size(); ++i) v = layers_[i]->forward(v, mode);
    return v;
  }

  // Ground-truth reference pass: probe-mode forward (batch statistics, no
  // running-stat update) during which every conv-comparison layer records
  // its own output as C_g.
  TensorT<T> forward_record(const TensorT<T>& x) {
    for (auto* cmp : comparison_layers()) cmp->arm_recording();
    return forward(x, Mode::kProbe);
  }

  TensorT<T> backward(const TensorT<T>& grad_out, bool param_grads = true) {
    TensorT<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g, param_grads);
    return g;
  }

  void zero_grad() {
    for (auto& layer : layers_) layer->zero_grad();
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : layers_)
      for (auto& p : layer->params()) out.push_back(p);
    return out;
  }
  std::vector<ParamRef<T>> grads() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : layers_)
      for (auto& p : layer->grads()) out.push_back(p);
    return out;
  }
  std::vector<ParamRef<T>> state() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : layers_)
      for (auto& p : layer->state()) out.push_back(p);
    return out;
  }

  i64 param_count() {
    i64 n = 0;
    for (auto& p : params()) n += p.size;
    return n;
  }

  std::vector<ConvComparisonLayer<T>*> comparison_layers() {
    std::vector<ConvComparisonLayer<T>*> out;
    for (auto& layer : layers_)
      if (auto* cmp = dynamic_cast<ConvComparisonLayer<T>*>(layer.get())) out.push_back(cmp);
    return out;
  }

  void clear_references() {
    for (auto* cmp : comparison_layers()) cmp->clear_reference();
  }
  void set_alpha(T alpha) {
    for (auto* cmp : comparison_layers()) cmp->set_alpha(alpha);
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const std::vector<std::unique_ptr<LayerT<T>>>& layers() const { return layers_; }
  size_t size() const { return layers_.size(); }

  i64 conv_count() const {
    i64 n = 0;
    for (const auto& s : specs_)
      if (s.kind == LayerKind::kConv || s.kind == LayerKind::kConvStride2 ||
          s.kind == LayerKind::kConvComparison)
        ++n;
    return n;
  }
  std::vector<i64> conv_channels() const {
    std::vector<i64> out;
    for (const auto& s : specs_)
      if (s.kind == LayerKind::kConv || s.kind == LayerKind::kConvStride2 ||
          s.kind == LayerKind::kConvComparison)
        out.push_back(s.out_ch);
    return out;
  }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<LayerT<T>>> layers_;
};

using Network = NetworkT<float>;

template <typename T>
void sgd_step(NetworkT<T>& net, T lr) {
  sgd_step(net.params(), net.grads(), lr);
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

// G: same-size convolutions only (3x3, stride 1, pad 1), hidden layers
// batchnorm + ReLU, channel widths rise then fall, sigmoid output without
// batchnorm.
struct GNetworkOptions {
  i64 input_channels = 3;
  i64 map_dims = 9;
  std::vector<i64> hidden_channels = {16, 32, 64, 96, 96, 64, 32, 16};
};

template <typename T>
NetworkT<T> build_g_network(const GNetworkOptions& opt, Prng& prng) {
  if (opt.map_dims < 1) fail(ErrorKind::kArgument, "build_g_network: map_dims must be >= 1");
  if (opt.input_channels < 1)
    fail(ErrorKind::kArgument, "build_g_network: input_channels must be >= 1");
  NetworkT<T> net;
  i64 prev = opt.input_channels;
  for (i64 ch : opt.hidden_channels) {
    net.add({LayerKind::kConv, prev, ch, 3, 1, 1},
            std::make_unique<Conv2dLayer<T>>(prev, ch, 3, 1, 1, prng));
    net.add({LayerKind::kBatchNorm, ch, ch}, std::make_unique<BatchNormLayer<T>>(ch));
    net.add({LayerKind::kRelu, ch, ch}, std::make_unique<ReluLayer<T>>());
    prev = ch;
  }
  net.add({LayerKind::kConv, prev, opt.map_dims, 3, 1, 1},
          std::make_unique<Conv2dLayer<T>>(prev, opt.map_dims, 3, 1, 1, prng));
  net.add({LayerKind::kSigmoid, opt.map_dims, opt.map_dims},
          std::make_unique<SigmoidLayer<T>>());
  return net;
}

// D: no pooling; downsampling only via stride-2 convolutions that carry no
// batchnorm and no activation; all other convolutions get batchnorm + leaky
// ReLU; three of them use the comparison backward; one fully-connected head.
// Positions are 1-based depth indices into the conv schedule.
struct DNetworkOptions {
  i64 input_channels = 9;
  i64 num_classes = 21;
  i64 input_size = 64;
  std::vector<i64> channels = {16, 16, 32, 32, 32, 64, 64, 64, 96, 96, 96, 128, 128, 128, 128};
  std::vector<i64> stride2_positions = {3, 6, 9, 12};
  std::vector<i64> comparison_positions = {5, 10, 14};
  double leaky_slope = 0.2;
  double alpha = 0.8;
};

template <typename T>
NetworkT<T> build_d_network(const DNetworkOptions& opt, Prng& prng) {
  if (opt.num_classes < 2)
    fail(ErrorKind::kArgument, "build_d_network: num_classes must be >= 2");
  const i64 halvings = static_cast<i64>(opt.stride2_positions.size());
  const i64 factor = i64(1) << halvings;
  if (opt.input_size < factor || opt.input_size % factor != 0)
    fail(ErrorKind::kArgument, "build_d_network: input spatial size " +
                                   std::to_string(opt.input_size) + " not divisible by " +
                                   std::to_string(factor));
  auto member = [](const std::vector<i64>& v, i64 p) {
    return std::find(v.begin(), v.end(), p) != v.end();
  };
  for (i64 p : opt.comparison_positions)
    if (member(opt.stride2_positions, p))
      fail(ErrorKind::kArgument, "build_d_network: comparison position " + std::to_string(p) +
                                     " collides with a stride-2 position");
  NetworkT<T> net;
  i64 prev = opt.input_channels;
  i64 pos = 0;
  for (i64 ch : opt.channels) {
    ++pos;
    if (member(opt.stride2_positions, pos)) {
      net.add({LayerKind::kConvStride2, prev, ch, 3, 2, 1},
              std::make_unique<Conv2dLayer<T>>(prev, ch, 3, 2, 1, prng));
    } else if (member(opt.comparison_positions, pos)) {
      net.add({LayerKind::kConvComparison, prev, ch, 3, 1, 1},
              std::make_unique<ConvComparisonLayer<T>>(prev, ch, 3, 1, 1,
                                                       static_cast<T>(opt.alpha), prng));
      net.add({LayerKind::kBatchNorm, ch, ch}, std::make_unique<BatchNormLayer<T>>(ch));
      net.add({LayerKind::kLeakyRelu, ch, ch},
              std::make_unique<LeakyReluLayer<T>>(static_cast<T>(opt.leaky_slope)));
    } else {
      net.add({LayerKind::kConv, prev, ch, 3, 1, 1},
              std::make_unique<Conv2dLayer<T>>(prev, ch, 3, 1, 1, prng));
      net.add({LayerKind::kBatchNorm, ch, ch}, std::make_unique<BatchNormLayer<T>>(ch));
      net.add({LayerKind::kLeakyRelu, ch, ch},
              std::make_unique<LeakyReluLayer<T>>(static_cast<T>(opt.leaky_slope)));
    }
    prev = ch;
  }
  i64 side = opt.input_size / factor;
  i64 features = prev * side * side;
  net.add({LayerKind::kFullyConnected, features, opt.num_classes},
          std::make_unique<FullyConnectedLayer<T>>(features, opt.num_classes, prng));
  return net;
}

}  // namespace san

#endif  // SAN_NETWORK_HPP
