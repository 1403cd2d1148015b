#ifndef SAN_LAYERS_HPP
#define SAN_LAYERS_HPP

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "san/prng.hpp"
#include "san/tensor.hpp"

namespace san {

// Normal draws with variance 2/fan_in; draw order equals element order, so
// a fixed seed rebuilds the exact same tensor.
template <typename T>
TensorT<T> he_init(Shape4 shape, i64 fan_in, Prng& prng) {
  if (fan_in <= 0) fail(ErrorKind::kArgument, "he_init: fan_in must be positive");
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  TensorT<T> out(shape);
  for (i64 i = 0; i < out.numel(); ++i)
    out.at(i) = static_cast<T>(prng.next_normal() * stddev);
  return out;
}

// Named view of a parameter/gradient buffer; `dims` is the rank/dims record
// the checkpoint format stores.
template <typename T>
struct ParamRef {
  std::string name;
  T* data;
  i64 size;
  std::vector<i64> dims;
};

template <typename T>
class LayerT {
 public:
  virtual ~LayerT() = default;

  virtual TensorT<T> forward(const TensorT<T>& x, Mode mode) = 0;
  // Accumulates into the layer's gradient buffers when param_grads is set
  // and returns the gradient w.r.t. the layer input.
  virtual TensorT<T> backward(const TensorT<T>& grad_out, bool param_grads) = 0;

  virtual void zero_grad() {}
  virtual std::vector<ParamRef<T>> params() { return {}; }
  virtual std::vector<ParamRef<T>> grads() { return {}; }
  // Everything a checkpoint must round-trip (params + running stats).
  virtual std::vector<ParamRef<T>> state() { return params(); }
  virtual const char* kind_name() const = 0;
};

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
class Conv2dLayer : public LayerT<T> {
 public:
  Conv2dLayer(i64 in_ch, i64 out_ch, i64 kernel, i64 stride, i64 pad, Prng& prng)
      : stride_(stride),
        pad_(pad),
        weights_(he_init<T>({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, prng)),
        grad_w_(weights_.shape()),
        bias_(static_cast<size_t>(out_ch), T(0)),
        grad_b_(static_cast<size_t>(out_ch), T(0)) {}

  TensorT<T> forward(const TensorT<T>& x, Mode) override {
    input_ = x;
    return conv2d_forward(x, weights_, bias_, stride_, pad_);
  }

  TensorT<T> backward(const TensorT<T>& grad_out, bool param_grads) override {
    if (param_grads)
      conv2d_backward_params(input_, weights_, grad_out, stride_, pad_, grad_w_, grad_b_);
    return conv2d_backward_input(input_.shape(), weights_, grad_out, stride_, pad_);
  }

  void zero_grad() override {
    grad_w_.fill(T(0));
    std::fill(grad_b_.begin(), grad_b_.end(), T(0));
  }

  std::vector<ParamRef<T>> params() override {
    return {{"conv.w", weights_.data(), weights_.numel(),
             {weights_.n(), weights_.c(), weights_.h(), weights_.w()}},
            {"conv.b", bias_.data(), static_cast<i64>(bias_.size()),
             {static_cast<i64>(bias_.size())}}};
  }
  std::vector<ParamRef<T>> grads() override {
    return {{"conv.w", grad_w_.data(), grad_w_.numel(),
             {grad_w_.n(), grad_w_.c(), grad_w_.h(), grad_w_.w()}},
            {"conv.b", grad_b_.data(), static_cast<i64>(grad_b_.size()),
             {static_cast<i64>(grad_b_.size())}}};
  }
  const char* kind_name() const override { return "conv"; }

  i64 stride() const { return stride_; }
  i64 out_channels() const { return weights_.n(); }
  const TensorT<T>& weights() const { return weights_; }

 protected:
  i64 stride_, pad_;
  TensorT<T> weights_, grad_w_;
  std::vector<T> bias_, grad_b_;
  TensorT<T> input_;
};

// ---------------------------------------------------------------------------
// Conv-comparison: a convolution whose backward blends the upstream signal
// with the gradient of E_c = 1/2 ||C_s - C_g||^2 toward a recorded reference
// activation, after matching the comparison gradient's L2 norm to the
// upstream one.
// ---------------------------------------------------------------------------

template <typename T>
T conv_comparison_loss(const TensorT<T>& c_s, const TensorT<T>& c_g) {
  require_same_shape(c_s, c_g, "conv_comparison_loss");
  double acc = 0.0;
  for (i64 i = 0; i < c_s.numel(); ++i) {
    double d = static_cast<double>(c_s.at(i)) - static_cast<double>(c_g.at(i));
    acc += d * d;
  }
  return static_cast<T>(0.5 * acc);
}

// alpha = 0 and alpha = 1 return the respective limit operand untouched so
// those limits are bitwise, not just close.
template <typename T>
TensorT<T> blend_comparison_gradient(const TensorT<T>& grad_up, const TensorT<T>& g_c,
                                     T alpha) {
  require_same_shape(grad_up, g_c, "blend_comparison_gradient");
  if (alpha < T(0) || alpha > T(1))
    fail(ErrorKind::kArgument, "blend_comparison_gradient: alpha outside [0,1]");
  if (alpha == T(0)) return grad_up;
  T up_norm = l2_norm(grad_up);
  T gc_norm = l2_norm(g_c);
  TensorT<T> g_hat = (up_norm == T(0) || gc_norm == T(0)) ? g_c
                                                          : mul_scalar(g_c, up_norm / gc_norm);
  if (alpha == T(1)) return g_hat;
  TensorT<T> out(grad_up.shape());
  for (i64 i = 0; i < out.numel(); ++i)
    out.at(i) = (T(1) - alpha) * grad_up.at(i) + alpha * g_hat.at(i);
  return out;
}

template <typename T>
class ConvComparisonLayer : public Conv2dLayer<T> {
 public:
  ConvComparisonLayer(i64 in_ch, i64 out_ch, i64 kernel, i64 stride, i64 pad, T alpha,
                      Prng& prng)
      : Conv2dLayer<T>(in_ch, out_ch, kernel, stride, pad, prng), alpha_(alpha) {}

  TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
    TensorT<T> y = Conv2dLayer<T>::forward(x, mode);
    if (record_next_) {
      reference_ = y;
      record_next_ = false;
    } else {
      output_ = y;
    }
    return y;
  }

  // Without a reference this is a plain convolution backward.
  TensorT<T> backward(const TensorT<T>& grad_out, bool param_grads) override {
    if (!reference_.has_value())
      return Conv2dLayer<T>::backward(grad_out, param_grads);
    require_same_shape(*reference_, output_, "conv_comparison: reference vs output");
    require_same_shape(grad_out, output_, "conv_comparison: grad vs output");
    TensorT<T> g_c = sub(output_, *reference_);
    last_ec_ = conv_comparison_loss(output_, *reference_);
    TensorT<T> blended = blend_comparison_gradient(grad_out, g_c, alpha_);
    return Conv2dLayer<T>::backward(blended, param_grads);
  }

  // The next forward stores its own output as C_g instead of treating it
  // as C_s. Used by the ground-truth reference pass.
  void arm_recording() { record_next_ = true; }

  void set_reference(const TensorT<T>& ref) { reference_ = ref; }
  void clear_reference() { reference_.reset(); }
  bool has_reference() const { return reference_.has_value(); }
  const TensorT<T>& reference() const { return *reference_; }
  const TensorT<T>& last_output() const { return output_; }

  T alpha() const { return alpha_; }
  void set_alpha(T a) {
    if (a < T(0) || a > T(1)) fail(ErrorKind::kArgument, "alpha outside [0,1]");
    alpha_ = a;
  }
  T last_comparison_error() const { return last_ec_; }

  const char* kind_name() const override { return "conv_comparison"; }

 private:
  T alpha_;
  std::optional<TensorT<T>> reference_;
  TensorT<T> output_;
  bool record_next_ = false;
  T last_ec_ = T(0);
};

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
class BatchNormLayer : public LayerT<T> {
 public:
  explicit BatchNormLayer(i64 channels, T momentum = T(0.9), T eps = T(1e-5))
      : momentum_(momentum),
        eps_(eps),
        gamma_(static_cast<size_t>(channels), T(1)),
        beta_(static_cast<size_t>(channels), T(0)),
        running_mean_(static_cast<size_t>(channels), T(0)),
        running_var_(static_cast<size_t>(channels), T(1)),
        grad_gamma_(static_cast<size_t>(channels), T(0)),
        grad_beta_(static_cast<size_t>(channels), T(0)) {}

  TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
    const i64 ch = static_cast<i64>(gamma_.size());
    if (x.c() != ch) fail(ErrorKind::kShape, "batchnorm: channel mismatch");
    if (mode != Mode::kEval && x.n() < 2)
      fail(ErrorKind::kArgument, "batchnorm: train mode needs batch size >= 2");
    mode_used_ = mode;
    const i64 m = x.n() * x.h() * x.w();
    xhat_ = TensorT<T>(x.shape());
    inv_std_.assign(static_cast<size_t>(ch), T(0));
    TensorT<T> out(x.shape());
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < ch; ++c) {
      double mean, var;
      if (mode == Mode::kEval) {
        mean = running_mean_[static_cast<size_t>(c)];
        var = running_var_[static_cast<size_t>(c)];
      } else {
        double s = 0.0;
        for (i64 n = 0; n < x.n(); ++n)
          for (i64 h = 0; h < x.h(); ++h)
            for (i64 w = 0; w < x.w(); ++w) s += x(n, c, h, w);
        mean = s / static_cast<double>(m);
        double sq = 0.0;
        for (i64 n = 0; n < x.n(); ++n)
          for (i64 h = 0; h < x.h(); ++h)
            for (i64 w = 0; w < x.w(); ++w) {
              double d = x(n, c, h, w) - mean;
              sq += d * d;
            }
        var = sq / static_cast<double>(m);
        if (mode == Mode::kTrain) {
          running_mean_[static_cast<size_t>(c)] = static_cast<T>(
              momentum_ * running_mean_[static_cast<size_t>(c)] + (T(1) - momentum_) * mean);
          running_var_[static_cast<size_t>(c)] = static_cast<T>(
              momentum_ * running_var_[static_cast<size_t>(c)] + (T(1) - momentum_) * var);
        }
      }
      T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
      inv_std_[static_cast<size_t>(c)] = istd;
      T g = gamma_[static_cast<size_t>(c)], b = beta_[static_cast<size_t>(c)];
      for (i64 n = 0; n < x.n(); ++n)
        for (i64 h = 0; h < x.h(); ++h)
          for (i64 w = 0; w < x.w(); ++w) {
            T xh = (x(n, c, h, w) - static_cast<T>(mean)) * istd;
            xhat_(n, c, h, w) = xh;
            out(n, c, h, w) = g * xh + b;
          }
    }
    check_finite(out, "batchnorm_forward");
    return out;
  }

  TensorT<T> backward(const TensorT<T>& grad_out, bool param_grads) override {
    require_same_shape(grad_out, xhat_, "batchnorm_backward");
    const i64 ch = static_cast<i64>(gamma_.size());
    const i64 m = grad_out.n() * grad_out.h() * grad_out.w();
    TensorT<T> grad_in(grad_out.shape());
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (i64 n = 0; n < grad_out.n(); ++n)
        for (i64 h = 0; h < grad_out.h(); ++h)
          for (i64 w = 0; w < grad_out.w(); ++w) {
            double dy = grad_out(n, c, h, w);
            sum_dy += dy;
            sum_dy_xhat += dy * xhat_(n, c, h, w);
          }
      if (param_grads) {
        grad_beta_[static_cast<size_t>(c)] += static_cast<T>(sum_dy);
        grad_gamma_[static_cast<size_t>(c)] += static_cast<T>(sum_dy_xhat);
      }
      T g = gamma_[static_cast<size_t>(c)];
      T istd = inv_std_[static_cast<size_t>(c)];
      if (mode_used_ == Mode::kEval) {
        // Running stats are constants; the Jacobian is diagonal.
        for (i64 n = 0; n < grad_out.n(); ++n)
          for (i64 h = 0; h < grad_out.h(); ++h)
            for (i64 w = 0; w < grad_out.w(); ++w)
              grad_in(n, c, h, w) = grad_out(n, c, h, w) * g * istd;
      } else {
        T k = g * istd / static_cast<T>(m);
        for (i64 n = 0; n < grad_out.n(); ++n)
          for (i64 h = 0; h < grad_out.h(); ++h)
            for (i64 w = 0; w < grad_out.w(); ++w)
              grad_in(n, c, h, w) =
                  k * (static_cast<T>(m) * grad_out(n, c, h, w) - static_cast<T>(sum_dy) -
                       xhat_(n, c, h, w) * static_cast<T>(sum_dy_xhat));
      }
    }
    return grad_in;
  }

  void zero_grad() override {
    std::fill(grad_gamma_.begin(), grad_gamma_.end(), T(0));
    std::fill(grad_beta_.begin(), grad_beta_.end(), T(0));
  }

  std::vector<ParamRef<T>> params() override {
    i64 ch = static_cast<i64>(gamma_.size());
    return {{"bn.gamma", gamma_.data(), ch, {ch}}, {"bn.beta", beta_.data(), ch, {ch}}};
  }
  std::vector<ParamRef<T>> grads() override {
    i64 ch = static_cast<i64>(gamma_.size());
    return {{"bn.gamma", grad_gamma_.data(), ch, {ch}},
            {"bn.beta", grad_beta_.data(), ch, {ch}}};
  }
  std::vector<ParamRef<T>> state() override {
    i64 ch = static_cast<i64>(gamma_.size());
    auto s = params();
    s.push_back({"bn.running_mean", running_mean_.data(), ch, {ch}});
    s.push_back({"bn.running_var", running_var_.data(), ch, {ch}});
    return s;
  }
  const char* kind_name() const override { return "batchnorm"; }

  const std::vector<T>& running_mean() const { return running_mean_; }
  const std::vector<T>& running_var() const { return running_var_; }

 private:
  T momentum_, eps_;
  std::vector<T> gamma_, beta_, running_mean_, running_var_;
  std::vector<T> grad_gamma_, grad_beta_;
  TensorT<T> xhat_;
  std::vector<T> inv_std_;
  Mode mode_used_ = Mode::kTrain;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
class ReluLayer : public LayerT<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, Mode) override { return output_ = relu_forward(x); }
  TensorT<T> backward(const TensorT<T>& grad_out, bool) override {
    return relu_backward(output_, grad_out);
  }
  const char* kind_name() const override { return "relu"; }

 private:
  TensorT<T> output_;
};

template <typename T>
class LeakyReluLayer : public LayerT<T> {
 public:
  explicit LeakyReluLayer(T slope) : slope_(slope) {}
  TensorT<T> forward(const TensorT<T>& x, Mode) override {
    return output_ = leaky_relu_forward(x, slope_);
  }
  TensorT<T> backward(const TensorT<T>& grad_out, bool) override {
    return leaky_relu_backward(output_, grad_out, slope_);
  }
  const char* kind_name() const override { return "leaky_relu"; }
  T slope() const { return slope_; }

 private:
  T slope_;
  TensorT<T> output_;
};

template <typename T>
class SigmoidLayer : public LayerT<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, Mode) override {
    return output_ = sigmoid_forward(x);
  }
  TensorT<T> backward(const TensorT<T>& grad_out, bool) override {
    return sigmoid_backward(output_, grad_out);
  }
  const char* kind_name() const override { return "sigmoid"; }

 private:
  TensorT<T> output_;
};

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

template <typename T>
class FullyConnectedLayer : public LayerT<T> {
 public:
  FullyConnectedLayer(i64 in_features, i64 out_features, Prng& prng)
      : weights_(he_init<T>({out_features, in_features, 1, 1}, in_features, prng)),
        grad_w_(weights_.shape()),
        bias_(static_cast<size_t>(out_features), T(0)),
        grad_b_(static_cast<size_t>(out_features), T(0)) {}

  TensorT<T> forward(const TensorT<T>& x, Mode) override {
    input_ = x;
    return matmul_forward(x, weights_, bias_);
  }

  TensorT<T> backward(const TensorT<T>& grad_out, bool param_grads) override {
    MatmulGrads<T> g = matmul_backward(input_, weights_, grad_out);
    if (param_grads) {
      for (i64 i = 0; i < grad_w_.numel(); ++i) grad_w_.at(i) += g.weights.at(i);
      for (size_t i = 0; i < grad_b_.size(); ++i) grad_b_[i] += g.bias[i];
    }
    return g.input;
  }

  void zero_grad() override {
    grad_w_.fill(T(0));
    std::fill(grad_b_.begin(), grad_b_.end(), T(0));
  }

  std::vector<ParamRef<T>> params() override {
    return {{"fc.w", weights_.data(), weights_.numel(), {weights_.n(), weights_.c()}},
            {"fc.b", bias_.data(), static_cast<i64>(bias_.size()),
             {static_cast<i64>(bias_.size())}}};
  }
  std::vector<ParamRef<T>> grads() override {
    return {{"fc.w", grad_w_.data(), grad_w_.numel(), {grad_w_.n(), grad_w_.c()}},
            {"fc.b", grad_b_.data(), static_cast<i64>(grad_b_.size()),
             {static_cast<i64>(grad_b_.size())}}};
  }
  const char* kind_name() const override { return "fully_connected"; }

  i64 out_features() const { return weights_.n(); }

 private:
  TensorT<T> weights_, grad_w_;
  std::vector<T> bias_, grad_b_;
  TensorT<T> input_;
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy over 1-based labels in [1, classes]
// ---------------------------------------------------------------------------

template <typename T>
std::pair<T, TensorT<T>> softmax_cross_entropy(const TensorT<T>& logits,
                                               const std::vector<int>& labels) {
  const i64 n = logits.n(), k = logits.c();
  if (logits.h() != 1 || logits.w() != 1)
    fail(ErrorKind::kShape, "softmax_cross_entropy: logits must be (n, classes, 1, 1)");
  if (static_cast<i64>(labels.size()) != n)
    fail(ErrorKind::kShape, "softmax_cross_entropy: one label per batch row required");
  for (int lab : labels)
    if (lab < 1 || lab > k)
      fail(ErrorKind::kArgument,
           "softmax_cross_entropy: label " + std::to_string(lab) + " outside [1, " +
               std::to_string(k) + "]");
  TensorT<T> grad(logits.shape());
  double loss = 0.0;
  for (i64 i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    double mx = row[0];
    for (i64 j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (i64 j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    i64 lab = labels[static_cast<size_t>(i)] - 1;
    loss += std::log(z) - (static_cast<double>(row[lab]) - mx);
    for (i64 j = 0; j < k; ++j) {
      double p = std::exp(static_cast<double>(row[j]) - mx) / z;
      grad(i, j, 0, 0) = static_cast<T>((p - (j == lab ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  return {static_cast<T>(loss / static_cast<double>(n)), grad};
}

// ---------------------------------------------------------------------------
// Plain SGD (no momentum, no weight decay)
// ---------------------------------------------------------------------------

template <typename T>
void sgd_step(const std::vector<ParamRef<T>>& params, const std::vector<ParamRef<T>>& grads,
              T lr) {
  if (!(lr > T(0))) fail(ErrorKind::kArgument, "sgd_step: learning rate must be positive");
  if (params.size() != grads.size())
    fail(ErrorKind::kShape, "sgd_step: param/grad list size mismatch");
  for (size_t p = 0; p < params.size(); ++p) {
    if (params[p].size != grads[p].size)
      fail(ErrorKind::kShape, "sgd_step: size mismatch for " + params[p].name);
    for (i64 i = 0; i < grads[p].size; ++i)
      if (!std::isfinite(grads[p].data[i]))
        fail(ErrorKind::kNumeric, "sgd_step: non-finite gradient in " + params[p].name);
    for (i64 i = 0; i < params[p].size; ++i) params[p].data[i] -= lr * grads[p].data[i];
  }
}

}  // namespace san

#endif  // SAN_LAYERS_HPP
