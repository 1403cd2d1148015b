#ifndef SAN_TENSOR_HPP
#define SAN_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "san/common.hpp"

namespace san {

struct Shape4 {
  i64 n = 0, c = 0, h = 0, w = 0;

  i64 numel() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

// Dense row-major (n, c, h, w) tensor. float is the training scalar;
// double is the gradient-checking scalar. Freshly constructed tensors
// are zero-filled.
template <typename T>
class TensorT {
 public:
  TensorT() = default;
  TensorT(i64 n, i64 c, i64 h, i64 w) : shape_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      fail(ErrorKind::kShape, "negative tensor dimension " + shape_.str());
    data_.assign(static_cast<size_t>(shape_.numel()), T(0));
  }
  explicit TensorT(Shape4 s) : TensorT(s.n, s.c, s.h, s.w) {}

  const Shape4& shape() const { return shape_; }
  i64 n() const { return shape_.n; }
  i64 c() const { return shape_.c; }
  i64 h() const { return shape_.h; }
  i64 w() const { return shape_.w; }
  i64 numel() const { return shape_.numel(); }

  T& operator()(i64 in, i64 ic, i64 ih, i64 iw) {
    return data_[static_cast<size_t>(((in * shape_.c + ic) * shape_.h + ih) * shape_.w + iw)];
  }
  T operator()(i64 in, i64 ic, i64 ih, i64 iw) const {
    return data_[static_cast<size_t>(((in * shape_.c + ic) * shape_.h + ih) * shape_.w + iw)];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& at(i64 flat) { return data_[static_cast<size_t>(flat)]; }
  T at(i64 flat) const { return data_[static_cast<size_t>(flat)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (i64 i = 0; i < numel(); ++i) out.at(i) = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

  bool operator==(const TensorT&) const = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

template <typename T>
void check_finite(const TensorT<T>& t, const char* where) {
  for (i64 i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t.at(i)))
      fail(ErrorKind::kNumeric, std::string(where) + ": non-finite value at index " +
                                    std::to_string(i));
}

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* where) {
  if (!(a.shape() == b.shape()))
    fail(ErrorKind::kShape, std::string(where) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
}

// ---------------------------------------------------------------------------
// Elementwise suite
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "add");
  TensorT<T> out(a.shape());
  for (i64 i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
  check_finite(out, "add");
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "sub");
  TensorT<T> out(a.shape());
  for (i64 i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
  check_finite(out, "sub");
  return out;
}

template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& a, T s) {
  TensorT<T> out(a.shape());
  for (i64 i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * s;
  check_finite(out, "mul_scalar");
  return out;
}

// out = a + s * b, the axpy everyone ends up needing.
template <typename T>
TensorT<T> add_scaled(const TensorT<T>& a, const TensorT<T>& b, T s) {
  require_same_shape(a, b, "add_scaled");
  TensorT<T> out(a.shape());
  for (i64 i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + s * b.at(i);
  check_finite(out, "add_scaled");
  return out;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> out(x.shape());
  for (i64 i = 0; i < x.numel(); ++i) out.at(i) = x.at(i) > T(0) ? x.at(i) : T(0);
  check_finite(out, "relu_forward");
  return out;
}

// Sign of the output determines the branch, so the cached output suffices.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& y, const TensorT<T>& grad_out) {
  require_same_shape(y, grad_out, "relu_backward");
  TensorT<T> out(y.shape());
  for (i64 i = 0; i < y.numel(); ++i) out.at(i) = y.at(i) > T(0) ? grad_out.at(i) : T(0);
  return out;
}

template <typename T>
TensorT<T> leaky_relu_forward(const TensorT<T>& x, T slope) {
  TensorT<T> out(x.shape());
  for (i64 i = 0; i < x.numel(); ++i) out.at(i) = x.at(i) >= T(0) ? x.at(i) : slope * x.at(i);
  check_finite(out, "leaky_relu_forward");
  return out;
}

template <typename T>
TensorT<T> leaky_relu_backward(const TensorT<T>& y, const TensorT<T>& grad_out, T slope) {
  require_same_shape(y, grad_out, "leaky_relu_backward");
  TensorT<T> out(y.shape());
  for (i64 i = 0; i < y.numel(); ++i)
    out.at(i) = y.at(i) > T(0) ? grad_out.at(i) : slope * grad_out.at(i);
  return out;
}

template <typename T>
TensorT<T> sigmoid_forward(const TensorT<T>& x) {
  TensorT<T> out(x.shape());
  for (i64 i = 0; i < x.numel(); ++i) {
    T v = x.at(i);
    out.at(i) = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                          : std::exp(v) / (T(1) + std::exp(v));
  }
  check_finite(out, "sigmoid_forward");
  return out;
}

template <typename T>
TensorT<T> sigmoid_backward(const TensorT<T>& y, const TensorT<T>& grad_out) {
  require_same_shape(y, grad_out, "sigmoid_backward");
  TensorT<T> out(y.shape());
  for (i64 i = 0; i < y.numel(); ++i) out.at(i) = grad_out.at(i) * y.at(i) * (T(1) - y.at(i));
  return out;
}

template <typename T>
T sum(const TensorT<T>& t) {
  T acc = T(0);
  for (i64 i = 0; i < t.numel(); ++i) acc += t.at(i);
  return acc;
}

template <typename T>
T l2_norm(const TensorT<T>& t) {
  T acc = T(0);
  for (i64 i = 0; i < t.numel(); ++i) acc += t.at(i) * t.at(i);
  return std::sqrt(acc);
}

template <typename T>
T max_value(const TensorT<T>& t) {
  T m = t.numel() ? t.at(0) : T(0);
  for (i64 i = 1; i < t.numel(); ++i) m = std::max(m, t.at(i));
  return m;
}

template <typename T>
T min_value(const TensorT<T>& t) {
  T m = t.numel() ? t.at(0) : T(0);
  for (i64 i = 1; i < t.numel(); ++i) m = std::min(m, t.at(i));
  return m;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation) and the fully-connected map
//
// Summation contract: every output element accumulates its bias first and
// then the products in ascending (ci, kh, kw) order. The 64-bit build keeps
// exactly this order so small cases are bit-identical to a direct-summation
// oracle. The float build is free to use im2col + BLAS underneath.
// ---------------------------------------------------------------------------

template <typename T>
Shape4 conv2d_output_shape(const Shape4& in, const TensorT<T>& weights, i64 stride, i64 pad) {
  const Shape4& ws = weights.shape();
  if (in.c != ws.c)
    fail(ErrorKind::kShape, "conv2d: input channels " + std::to_string(in.c) +
                                " != weight channels " + std::to_string(ws.c));
  if (ws.h % 2 == 0 || ws.w % 2 == 0)
    fail(ErrorKind::kShape, "conv2d: kernel dims must be odd, got " + ws.str());
  if (stride < 1) fail(ErrorKind::kArgument, "conv2d: stride must be positive");
  if (pad < 0) fail(ErrorKind::kArgument, "conv2d: pad must be non-negative");
  i64 eh = in.h + 2 * pad - ws.h;
  i64 ew = in.w + 2 * pad - ws.w;
  if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0)
    fail(ErrorKind::kShape, "conv2d: non-integral output size for input " + in.str() +
                                " kernel " + ws.str() + " stride " + std::to_string(stride) +
                                " pad " + std::to_string(pad));
  return Shape4{in.n, ws.n, eh / stride + 1, ew / stride + 1};
}

template <typename T>
struct ConvGrads {
  TensorT<T> input;
  TensorT<T> weights;
  std::vector<T> bias;
};

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const std::vector<T>& bias, i64 stride, i64 pad);

template <typename T>
TensorT<T> conv2d_backward_input(const Shape4& input_shape, const TensorT<T>& weights,
                                 const TensorT<T>& grad_out, i64 stride, i64 pad);

template <typename T>
void conv2d_backward_params(const TensorT<T>& input, const TensorT<T>& weights,
                            const TensorT<T>& grad_out, i64 stride, i64 pad,
                            TensorT<T>& grad_w, std::vector<T>& grad_b);

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const TensorT<T>& grad_out, i64 stride, i64 pad) {
  Shape4 out_shape = conv2d_output_shape(input.shape(), weights, stride, pad);
  if (!(grad_out.shape() == out_shape))
    fail(ErrorKind::kShape, "conv2d_backward: grad_out shape " + grad_out.shape().str() +
                                " != forward output shape " + out_shape.str());
  ConvGrads<T> g;
  g.input = conv2d_backward_input(input.shape(), weights, grad_out, stride, pad);
  g.weights = TensorT<T>(weights.shape());
  g.bias.assign(static_cast<size_t>(weights.n()), T(0));
  conv2d_backward_params(input, weights, grad_out, stride, pad, g.weights, g.bias);
  return g;
}

// Batched affine map: x viewed as (n, c*h*w) rows, weights (out, in),
// logits come back as (n, out, 1, 1).
template <typename T>
TensorT<T> matmul_forward(const TensorT<T>& x, const TensorT<T>& weights,
                          const std::vector<T>& bias);

template <typename T>
struct MatmulGrads {
  TensorT<T> input;
  TensorT<T> weights;
  std::vector<T> bias;
};

template <typename T>
MatmulGrads<T> matmul_backward(const TensorT<T>& x, const TensorT<T>& weights,
                               const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// Finite-difference oracle (64-bit only): central differences per coordinate.
// Deliberately knows nothing about any analytic backward path.
// ---------------------------------------------------------------------------
inline DTensor finite_diff_grad(const std::function<double(const DTensor&)>& f,
                                const DTensor& point, double eps) {
  if (eps <= 0.0) fail(ErrorKind::kArgument, "finite_diff_grad: eps must be positive");
  DTensor grad(point.shape());
  DTensor probe = point;
  for (i64 i = 0; i < point.numel(); ++i) {
    double orig = probe.at(i);
    probe.at(i) = orig + eps;
    double fp = f(probe);
    probe.at(i) = orig - eps;
    double fm = f(probe);
    probe.at(i) = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      fail(ErrorKind::kNumeric, "finite_diff_grad: non-finite function value");
    grad.at(i) = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace san

#endif  // SAN_TENSOR_HPP
