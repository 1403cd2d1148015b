// Convolution and affine kernels. The double build runs direct-summation
// loops in the canonical (ci, kh, kw) order; the float build lowers to
// im2col + sgemm, which is where all the training time goes.

#include "san/tensor.hpp"

#include <cblas.h>

namespace san {

// ---------------------------------------------------------------------------
// Direct-summation path (used verbatim for double)
// ---------------------------------------------------------------------------

namespace {

template <typename T>
TensorT<T> direct_conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights,
                                 const std::vector<T>& bias, i64 stride, i64 pad) {
  Shape4 os = conv2d_output_shape(input.shape(), weights, stride, pad);
  if (static_cast<i64>(bias.size()) != os.c)
    fail(ErrorKind::kShape, "conv2d: bias size != output channels");
  TensorT<T> out(os);
  const i64 kh = weights.h(), kw = weights.w(), ci = weights.c();
  for (i64 n = 0; n < os.n; ++n)
    for (i64 co = 0; co < os.c; ++co)
      for (i64 oh = 0; oh < os.h; ++oh)
        for (i64 ow = 0; ow < os.w; ++ow) {
          T acc = bias[static_cast<size_t>(co)];
          for (i64 c = 0; c < ci; ++c)
            for (i64 y = 0; y < kh; ++y) {
              i64 ih = oh * stride + y - pad;
              if (ih < 0 || ih >= input.h()) continue;
              for (i64 x = 0; x < kw; ++x) {
                i64 iw = ow * stride + x - pad;
                if (iw < 0 || iw >= input.w()) continue;
                acc += input(n, c, ih, iw) * weights(co, c, y, x);
              }
            }
          out(n, co, oh, ow) = acc;
        }
  check_finite(out, "conv2d_forward");
  return out;
}

template <typename T>
TensorT<T> direct_conv2d_backward_input(const Shape4& in_shape, const TensorT<T>& weights,
                                        const TensorT<T>& grad_out, i64 stride, i64 pad) {
  TensorT<T> grad_in(in_shape);
  const i64 kh = weights.h(), kw = weights.w(), ci = weights.c();
  const Shape4& os = grad_out.shape();
  for (i64 n = 0; n < os.n; ++n)
    for (i64 co = 0; co < os.c; ++co)
      for (i64 oh = 0; oh < os.h; ++oh)
        for (i64 ow = 0; ow < os.w; ++ow) {
          T g = grad_out(n, co, oh, ow);
          for (i64 c = 0; c < ci; ++c)
            for (i64 y = 0; y < kh; ++y) {
              i64 ih = oh * stride + y - pad;
              if (ih < 0 || ih >= in_shape.h) continue;
              for (i64 x = 0; x < kw; ++x) {
                i64 iw = ow * stride + x - pad;
                if (iw < 0 || iw >= in_shape.w) continue;
                grad_in(n, c, ih, iw) += g * weights(co, c, y, x);
              }
            }
        }
  return grad_in;
}

template <typename T>
void direct_conv2d_backward_params(const TensorT<T>& input, const TensorT<T>& weights,
                                   const TensorT<T>& grad_out, i64 stride, i64 pad,
                                   TensorT<T>& grad_w, std::vector<T>& grad_b) {
  const i64 kh = weights.h(), kw = weights.w(), ci = weights.c();
  const Shape4& os = grad_out.shape();
  for (i64 n = 0; n < os.n; ++n)
    for (i64 co = 0; co < os.c; ++co)
      for (i64 oh = 0; oh < os.h; ++oh)
        for (i64 ow = 0; ow < os.w; ++ow) {
          T g = grad_out(n, co, oh, ow);
          grad_b[static_cast<size_t>(co)] += g;
          for (i64 c = 0; c < ci; ++c)
            for (i64 y = 0; y < kh; ++y) {
              i64 ih = oh * stride + y - pad;
              if (ih < 0 || ih >= input.h()) continue;
              for (i64 x = 0; x < kw; ++x) {
                i64 iw = ow * stride + x - pad;
                if (iw < 0 || iw >= input.w()) continue;
                grad_w(co, c, y, x) += g * input(n, c, ih, iw);
              }
            }
        }
}

// im2col for one sample: cols is (ci*kh*kw) x (oh*ow), row-major.
void im2col_sample(const Tensor& input, i64 n, i64 kh, i64 kw, i64 stride, i64 pad,
                   i64 oh, i64 ow, float* cols) {
  const i64 ci = input.c(), ih_max = input.h(), iw_max = input.w();
  const i64 m = oh * ow;
  i64 k = 0;
  for (i64 c = 0; c < ci; ++c)
    for (i64 y = 0; y < kh; ++y)
      for (i64 x = 0; x < kw; ++x, ++k) {
        float* row = cols + k * m;
        for (i64 o = 0; o < oh; ++o) {
          i64 ih = o * stride + y - pad;
          if (ih < 0 || ih >= ih_max) {
            std::fill(row + o * ow, row + (o + 1) * ow, 0.0f);
            continue;
          }
          for (i64 p = 0; p < ow; ++p) {
            i64 iw = p * stride + x - pad;
            row[o * ow + p] = (iw < 0 || iw >= iw_max) ? 0.0f : input(n, c, ih, iw);
          }
        }
      }
}

void col2im_sample(const float* cols, i64 ci, i64 kh, i64 kw, i64 stride, i64 pad,
                   i64 oh, i64 ow, Tensor& grad_in, i64 n) {
  const i64 ih_max = grad_in.h(), iw_max = grad_in.w();
  const i64 m = oh * ow;
  i64 k = 0;
  for (i64 c = 0; c < ci; ++c)
    for (i64 y = 0; y < kh; ++y)
      for (i64 x = 0; x < kw; ++x, ++k) {
        const float* row = cols + k * m;
        for (i64 o = 0; o < oh; ++o) {
          i64 ih = o * stride + y - pad;
          if (ih < 0 || ih >= ih_max) continue;
          for (i64 p = 0; p < ow; ++p) {
            i64 iw = p * stride + x - pad;
            if (iw < 0 || iw >= iw_max) continue;
            grad_in(n, c, ih, iw) += row[o * ow + p];
          }
        }
      }
}

}  // namespace

// ---------------------------------------------------------------------------
// double: direct summation, bit-stable
// ---------------------------------------------------------------------------

template <>
DTensor conv2d_forward<double>(const DTensor& input, const DTensor& weights,
                               const std::vector<double>& bias, i64 stride, i64 pad) {
  return direct_conv2d_forward(input, weights, bias, stride, pad);
}

template <>
DTensor conv2d_backward_input<double>(const Shape4& in_shape, const DTensor& weights,
                                      const DTensor& grad_out, i64 stride, i64 pad) {
  return direct_conv2d_backward_input(in_shape, weights, grad_out, stride, pad);
}

template <>
void conv2d_backward_params<double>(const DTensor& input, const DTensor& weights,
                                    const DTensor& grad_out, i64 stride, i64 pad,
                                    DTensor& grad_w, std::vector<double>& grad_b) {
  direct_conv2d_backward_params(input, weights, grad_out, stride, pad, grad_w, grad_b);
}

// ---------------------------------------------------------------------------
// float: im2col + sgemm, parallel over samples
// ---------------------------------------------------------------------------

template <>
Tensor conv2d_forward<float>(const Tensor& input, const Tensor& weights,
                             const std::vector<float>& bias, i64 stride, i64 pad) {
  Shape4 os = conv2d_output_shape(input.shape(), weights, stride, pad);
  if (static_cast<i64>(bias.size()) != os.c)
    fail(ErrorKind::kShape, "conv2d: bias size != output channels");
  Tensor out(os);
  const i64 kdim = weights.c() * weights.h() * weights.w();
  const i64 m = os.h * os.w;
#pragma omp parallel
  {
    std::vector<float> cols(static_cast<size_t>(kdim * m));
#pragma omp for schedule(static)
    for (i64 n = 0; n < os.n; ++n) {
      im2col_sample(input, n, weights.h(), weights.w(), stride, pad, os.h, os.w, cols.data());
      float* out_n = out.data() + n * os.c * m;
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(os.c),
                  static_cast<int>(m), static_cast<int>(kdim), 1.0f, weights.data(),
                  static_cast<int>(kdim), cols.data(), static_cast<int>(m), 0.0f, out_n,
                  static_cast<int>(m));
      for (i64 co = 0; co < os.c; ++co) {
        float b = bias[static_cast<size_t>(co)];
        float* row = out_n + co * m;
        for (i64 i = 0; i < m; ++i) row[i] += b;
      }
    }
  }
  check_finite(out, "conv2d_forward");
  return out;
}

template <>
Tensor conv2d_backward_input<float>(const Shape4& in_shape, const Tensor& weights,
                                    const Tensor& grad_out, i64 stride, i64 pad) {
  Tensor grad_in(in_shape);
  const i64 kdim = weights.c() * weights.h() * weights.w();
  const i64 m = grad_out.h() * grad_out.w();
  const i64 co = grad_out.c();
#pragma omp parallel
  {
    std::vector<float> cols(static_cast<size_t>(kdim * m));
#pragma omp for schedule(static)
    for (i64 n = 0; n < grad_out.n(); ++n) {
      // cols = W^T (kdim x co) * grad_out_n (co x m)
      cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(kdim),
                  static_cast<int>(m), static_cast<int>(co), 1.0f, weights.data(),
                  static_cast<int>(kdim), grad_out.data() + n * co * m, static_cast<int>(m),
                  0.0f, cols.data(), static_cast<int>(m));
      col2im_sample(cols.data(), weights.c(), weights.h(), weights.w(), stride, pad,
                    grad_out.h(), grad_out.w(), grad_in, n);
    }
  }
  return grad_in;
}

template <>
void conv2d_backward_params<float>(const Tensor& input, const Tensor& weights,
                                   const Tensor& grad_out, i64 stride, i64 pad,
                                   Tensor& grad_w, std::vector<float>& grad_b) {
  const i64 kdim = weights.c() * weights.h() * weights.w();
  const i64 m = grad_out.h() * grad_out.w();
  const i64 co = grad_out.c();
  std::vector<float> cols(static_cast<size_t>(kdim * m));
  // Serial over samples: grad accumulation order must not depend on the
  // thread count.
  for (i64 n = 0; n < grad_out.n(); ++n) {
    im2col_sample(input, n, weights.h(), weights.w(), stride, pad, grad_out.h(), grad_out.w(),
                  cols.data());
    const float* go_n = grad_out.data() + n * co * m;
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(co),
                static_cast<int>(kdim), static_cast<int>(m), 1.0f, go_n, static_cast<int>(m),
                cols.data(), static_cast<int>(m), 1.0f, grad_w.data(), static_cast<int>(kdim));
    for (i64 c = 0; c < co; ++c) {
      const float* row = go_n + c * m;
      float acc = 0.0f;
      for (i64 i = 0; i < m; ++i) acc += row[i];
      grad_b[static_cast<size_t>(c)] += acc;
    }
  }
}

// ---------------------------------------------------------------------------
// Fully-connected map
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_matmul_shapes(const TensorT<T>& x, const TensorT<T>& weights,
                         const std::vector<T>& bias) {
  i64 features = x.c() * x.h() * x.w();
  if (weights.h() != 1 || weights.w() != 1)
    fail(ErrorKind::kShape, "matmul: weights must be (out, in, 1, 1)");
  if (weights.c() != features)
    fail(ErrorKind::kShape, "matmul: weight inner dim " + std::to_string(weights.c()) +
                                " != input features " + std::to_string(features));
  if (static_cast<i64>(bias.size()) != weights.n())
    fail(ErrorKind::kShape, "matmul: bias size != output features");
}

}  // namespace

template <typename T>
TensorT<T> matmul_forward(const TensorT<T>& x, const TensorT<T>& weights,
                          const std::vector<T>& bias) {
  check_matmul_shapes(x, weights, bias);
  const i64 in = x.c() * x.h() * x.w();
  const i64 out_f = weights.n();
  TensorT<T> out(x.n(), out_f, 1, 1);
  for (i64 n = 0; n < x.n(); ++n)
    for (i64 o = 0; o < out_f; ++o) {
      T acc = bias[static_cast<size_t>(o)];
      const T* xrow = x.data() + n * in;
      const T* wrow = weights.data() + o * in;
      for (i64 i = 0; i < in; ++i) acc += xrow[i] * wrow[i];
      out(n, o, 0, 0) = acc;
    }
  check_finite(out, "matmul_forward");
  return out;
}

template <typename T>
MatmulGrads<T> matmul_backward(const TensorT<T>& x, const TensorT<T>& weights,
                               const TensorT<T>& grad_out) {
  const i64 in = x.c() * x.h() * x.w();
  const i64 out_f = weights.n();
  if (grad_out.n() != x.n() || grad_out.c() != out_f || grad_out.h() != 1 || grad_out.w() != 1)
    fail(ErrorKind::kShape, "matmul_backward: grad_out shape mismatch");
  MatmulGrads<T> g;
  g.input = TensorT<T>(x.shape());
  g.weights = TensorT<T>(weights.shape());
  g.bias.assign(static_cast<size_t>(out_f), T(0));
  for (i64 n = 0; n < x.n(); ++n) {
    const T* xrow = x.data() + n * in;
    T* gxrow = g.input.data() + n * in;
    for (i64 o = 0; o < out_f; ++o) {
      T go = grad_out(n, o, 0, 0);
      g.bias[static_cast<size_t>(o)] += go;
      const T* wrow = weights.data() + o * in;
      T* gwrow = g.weights.data() + o * in;
      for (i64 i = 0; i < in; ++i) {
        gxrow[i] += go * wrow[i];
        gwrow[i] += go * xrow[i];
      }
    }
  }
  return g;
}

template Tensor matmul_forward<float>(const Tensor&, const Tensor&, const std::vector<float>&);
template DTensor matmul_forward<double>(const DTensor&, const DTensor&,
                                        const std::vector<double>&);
template MatmulGrads<float> matmul_backward<float>(const Tensor&, const Tensor&, const Tensor&);
template MatmulGrads<double> matmul_backward<double>(const DTensor&, const DTensor&,
                                                     const DTensor&);

}  // namespace san
