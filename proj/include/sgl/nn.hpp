#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sgl/errors.hpp"

namespace sgl::nn {

// Dense CHW tensor.
template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(std::size_t(c_) * h_ * w_, T(0)) {}

  std::size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T& at(int ch, int y, int x) { return v[(std::size_t(ch) * h + y) * w + x]; }
  T at(int ch, int y, int x) const { return v[(std::size_t(ch) * h + y) * w + x]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C, backed by BLAS.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
          const float* b, float beta, float* out);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          const double* b, double beta, double* out);

// 2D convolution with square kernel, symmetric zero padding of k/2.
template <typename T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 1, stride = 1, pad = 0;
  std::vector<T> weight;   // [out_ch][in_ch * k * k]
  std::vector<T> bias;     // [out_ch]
  std::vector<T> dweight;  // gradient accumulators, same shapes
  std::vector<T> dbias;

  void configure(int in, int out, int k, int s);
  long long parameter_count() const { return (long long)weight.size() + (long long)bias.size(); }
  int out_h(int h) const { return (h + 2 * pad - ksize) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pad - ksize) / stride + 1; }

  Tensor<T> forward(const Tensor<T>& x) const;
  // Accumulates dweight/dbias from (x, dy); returns dL/dx when want_dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool want_dx);
  void zero_grad();
};

template <typename T>
void relu_inplace(Tensor<T>& t);

// In-place mask by the stored post-activation values: dy *= (y > 0).
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy);

// Upper clamp bound realizing the open interval [0, 1).
inline constexpr double kConfClampMax = 1.0 - 1e-6;

// The two-branch fully convolutional model: a deep receptive branch with
// residual shortcuts and a 1x1-conv spatial block, and a shallow structure
// branch producing per-patch 3D coordinates plus a 64-channel confidence
// volume clamped to [0, 1).
template <typename T>
struct SglNet {
  int spatial_depth = 4;
  std::array<T, 3> coordinate_offset{T(0), T(0), T(0)};

  std::array<Conv2d<T>, 4> r1;       // 3x3, c {32,64,128,256}, s {1,2,2,2}
  std::array<Conv2d<T>, 3> r2;       // {3x3/256, 1x1/256, 3x3/256}, shortcut after the first
  std::array<Conv2d<T>, 4> r3;       // {3x3/512, 1x1/512, 3x3/512, 3x3/512}, shortcut after the first
  std::vector<Conv2d<T>> spatial;    // spatial_depth x 1x1/512
  std::array<Conv2d<T>, 4> cb;       // confidence block, mirrors r1
  std::array<Conv2d<T>, 3> s1;       // {1x1/512, 1x1/512, 3x3/3} on concat(cb, receptive)
  std::array<Conv2d<T>, 2> ref;      // {1x1/128, 1x1/64 + clamp}

  void build(int spatial_depth, const std::array<T, 3>& offset, std::uint64_t weight_seed);

  std::vector<Conv2d<T>*> layers();
  std::vector<const Conv2d<T>*> layers() const;
  std::vector<std::string> layer_names() const;
  long long parameter_count() const;
  void zero_grad();

  struct Output {
    Tensor<T> coord;        // 3 x h/8 x w/8, offset already added
    Tensor<T> conf;         // 64 x h/8 x w/8, clamped to [0, 1)
    Tensor<T> conf_logits;  // pre-clamp values of the confidence head
  };

  // Post-activation intermediates kept for the backward pass.
  struct Trace {
    Tensor<T> x;
    Tensor<T> a1, a2, a3, a4;
    Tensor<T> b1, b2, b3;
    Tensor<T> c1, c2, c3, c4;
    std::vector<Tensor<T>> sp;
    Tensor<T> f1, f2, f3, f4;
    Tensor<T> cat;
    Tensor<T> g1, g2;
    Tensor<T> h1;
    Tensor<T> logits;
  };

  // trace may be null for inference. Throws InvalidConfig when the input is
  // not divisible by 8, ShapeMismatch when it is not 3-channel.
  Output forward(const Tensor<T>& image, Trace* trace) const;

  // Accumulates parameter gradients from dL/dcoord, dL/dconf (post-clamp) and
  // dL/dlogits (added directly on the pre-clamp values).
  void backward(const Trace& trace, const Tensor<T>& dcoord, const Tensor<T>& dconf,
                const Tensor<T>& dlogits_direct);
};

template <typename T>
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  std::vector<std::vector<T>> m, v;  // two slots per layer: weight, bias

  void attach(const std::vector<Conv2d<T>*>& layers);
  void step(const std::vector<Conv2d<T>*>& layers);
};

extern template struct Conv2d<float>;
extern template struct Conv2d<double>;
extern template struct SglNet<float>;
extern template struct SglNet<double>;
extern template struct Adam<float>;
extern template struct Adam<double>;
extern template void relu_inplace<float>(Tensor<float>&);
extern template void relu_inplace<double>(Tensor<double>&);
extern template void relu_backward_inplace<float>(const Tensor<float>&, Tensor<float>&);
extern template void relu_backward_inplace<double>(const Tensor<double>&, Tensor<double>&);

}  // namespace sgl::nn
