#include "sgl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <cblas.h>

namespace sgl::nn {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
          const float* b, float beta, float* out) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, trans_a ? m : k, b,
              trans_b ? k : n, beta, out, n);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          const double* b, double beta, double* out) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, trans_a ? m : k, b,
              trans_b ? k : n, beta, out, n);
}

namespace {

// col has in_ch*k*k rows and oh*ow columns.
template <typename T>
void im2col(const Tensor<T>& x, int ksize, int stride, int pad, int oh, int ow,
            std::vector<T>& col) {
  const int n = oh * ow;
  col.assign(std::size_t(x.c) * ksize * ksize * n, T(0));
  for (int c = 0; c < x.c; ++c) {
    for (int ky = 0; ky < ksize; ++ky) {
      for (int kx = 0; kx < ksize; ++kx) {
        T* row = col.data() + (std::size_t(c) * ksize * ksize + ky * ksize + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= x.h) continue;
          const T* src = x.data() + (std::size_t(c) * x.h + iy) * x.w;
          T* dst = row + std::size_t(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < x.w) dst[ox] = src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int ksize, int stride, int pad, int oh, int ow,
                Tensor<T>& dx) {
  const int n = oh * ow;
  for (int c = 0; c < dx.c; ++c) {
    for (int ky = 0; ky < ksize; ++ky) {
      for (int kx = 0; kx < ksize; ++kx) {
        const T* row = col.data() + (std::size_t(c) * ksize * ksize + ky * ksize + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= dx.h) continue;
          T* dst = dx.data() + (std::size_t(c) * dx.h + iy) * dx.w;
          const T* src = row + std::size_t(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < dx.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace

template <typename T>
void Conv2d<T>::configure(int in, int out, int k, int s) {
  in_ch = in;
  out_ch = out;
  ksize = k;
  stride = s;
  pad = k / 2;
  weight.assign(std::size_t(out) * in * k * k, T(0));
  bias.assign(out, T(0));
  dweight.assign(weight.size(), T(0));
  dbias.assign(bias.size(), T(0));
}

template <typename T>
void Conv2d<T>::zero_grad() {
  std::fill(dweight.begin(), dweight.end(), T(0));
  std::fill(dbias.begin(), dbias.end(), T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  const int oh = out_h(x.h), ow = out_w(x.w);
  const int n = oh * ow;
  Tensor<T> y(out_ch, oh, ow);
  if (ksize == 1 && stride == 1) {
    gemm(false, false, out_ch, n, in_ch, T(1), weight.data(), x.data(), T(0), y.data());
  } else {
    std::vector<T> col;
    im2col(x, ksize, stride, pad, oh, ow, col);
    gemm(false, false, out_ch, n, in_ch * ksize * ksize, T(1), weight.data(), col.data(), T(0),
         y.data());
  }
  for (int o = 0; o < out_ch; ++o) {
    T* row = y.data() + std::size_t(o) * n;
    const T b = bias[o];
    for (int i = 0; i < n; ++i) row[i] += b;
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, bool want_dx) {
  const int oh = dy.h, ow = dy.w;
  const int n = oh * ow;

  for (int o = 0; o < out_ch; ++o) {
    const T* row = dy.data() + std::size_t(o) * n;
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += row[i];
    dbias[o] += acc;
  }

  Tensor<T> dx;
  if (ksize == 1 && stride == 1) {
    gemm(false, true, out_ch, in_ch, n, T(1), dy.data(), x.data(), T(1), dweight.data());
    if (want_dx) {
      dx = Tensor<T>(in_ch, x.h, x.w);
      gemm(true, false, in_ch, n, out_ch, T(1), weight.data(), dy.data(), T(0), dx.data());
    }
  } else {
    std::vector<T> col;
    im2col(x, ksize, stride, pad, oh, ow, col);
    const int ckk = in_ch * ksize * ksize;
    gemm(false, true, out_ch, ckk, n, T(1), dy.data(), col.data(), T(1), dweight.data());
    if (want_dx) {
      std::vector<T> dcol(std::size_t(ckk) * n);
      gemm(true, false, ckk, n, out_ch, T(1), weight.data(), dy.data(), T(0), dcol.data());
      dx = Tensor<T>(in_ch, x.h, x.w);
      col2im_add(dcol, ksize, stride, pad, oh, ow, dx);
    }
  }
  return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (auto& x : t.v)
    if (x < T(0)) x = T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  for (std::size_t i = 0; i < y.v.size(); ++i)
    if (!(y.v[i] > T(0))) dy.v[i] = T(0);
}

template <typename T>
void SglNet<T>::build(int depth, const std::array<T, 3>& offset, std::uint64_t weight_seed) {
  if (depth < 1 || depth > 8) throw InvalidConfig("spatial_depth must lie in 1..8");
  spatial_depth = depth;
  coordinate_offset = offset;

  r1[0].configure(3, 32, 3, 1);
  r1[1].configure(32, 64, 3, 2);
  r1[2].configure(64, 128, 3, 2);
  r1[3].configure(128, 256, 3, 2);
  r2[0].configure(256, 256, 3, 1);
  r2[1].configure(256, 256, 1, 1);
  r2[2].configure(256, 256, 3, 1);
  r3[0].configure(256, 512, 3, 1);
  r3[1].configure(512, 512, 1, 1);
  r3[2].configure(512, 512, 3, 1);
  r3[3].configure(512, 512, 3, 1);
  spatial.assign(depth, Conv2d<T>{});
  for (auto& layer : spatial) layer.configure(512, 512, 1, 1);
  cb[0].configure(3, 32, 3, 1);
  cb[1].configure(32, 64, 3, 2);
  cb[2].configure(64, 128, 3, 2);
  cb[3].configure(128, 256, 3, 2);
  s1[0].configure(256 + 512, 512, 1, 1);
  s1[1].configure(512, 512, 1, 1);
  s1[2].configure(512, 3, 3, 1);
  ref[0].configure(256, 128, 1, 1);
  ref[1].configure(128, 64, 1, 1);

  std::mt19937_64 rng(weight_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Conv2d<T>* layer : layers()) {
    const double std_dev = std::sqrt(2.0 / double(layer->in_ch * layer->ksize * layer->ksize));
    for (auto& w : layer->weight) w = T(std_dev * gauss(rng));
    std::fill(layer->bias.begin(), layer->bias.end(), T(0));
  }
}

template <typename T>
std::vector<Conv2d<T>*> SglNet<T>::layers() {
  std::vector<Conv2d<T>*> out;
  for (auto& l : r1) out.push_back(&l);
  for (auto& l : r2) out.push_back(&l);
  for (auto& l : r3) out.push_back(&l);
  for (auto& l : spatial) out.push_back(&l);
  for (auto& l : cb) out.push_back(&l);
  for (auto& l : s1) out.push_back(&l);
  for (auto& l : ref) out.push_back(&l);
  return out;
}

template <typename T>
std::vector<const Conv2d<T>*> SglNet<T>::layers() const {
  std::vector<const Conv2d<T>*> out;
  for (const auto& l : r1) out.push_back(&l);
  for (const auto& l : r2) out.push_back(&l);
  for (const auto& l : r3) out.push_back(&l);
  for (const auto& l : spatial) out.push_back(&l);
  for (const auto& l : cb) out.push_back(&l);
  for (const auto& l : s1) out.push_back(&l);
  for (const auto& l : ref) out.push_back(&l);
  return out;
}

template <typename T>
std::vector<std::string> SglNet<T>::layer_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < 4; ++i) names.push_back("r1." + std::to_string(i));
  for (int i = 0; i < 3; ++i) names.push_back("r2." + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("r3." + std::to_string(i));
  for (int i = 0; i < spatial_depth; ++i) names.push_back("spatial." + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("cb." + std::to_string(i));
  for (int i = 0; i < 3; ++i) names.push_back("s1." + std::to_string(i));
  for (int i = 0; i < 2; ++i) names.push_back("ref." + std::to_string(i));
  return names;
}

template <typename T>
long long SglNet<T>::parameter_count() const {
  long long total = 0;
  for (const Conv2d<T>* layer : layers()) total += layer->parameter_count();
  return total;
}

template <typename T>
void SglNet<T>::zero_grad() {
  for (Conv2d<T>* layer : layers()) layer->zero_grad();
}

template <typename T>
typename SglNet<T>::Output SglNet<T>::forward(const Tensor<T>& image, Trace* trace) const {
  if (image.c != 3) throw ShapeMismatch("expected a 3-channel input image");
  if (image.h % 8 != 0 || image.w % 8 != 0 || image.h == 0 || image.w == 0)
    throw InvalidConfig("input height and width must be divisible by 8");

  Trace local;
  Trace& tr = trace ? *trace : local;
  tr.x = image;

  // Receptive branch.
  tr.a1 = r1[0].forward(tr.x);
  relu_inplace(tr.a1);
  tr.a2 = r1[1].forward(tr.a1);
  relu_inplace(tr.a2);
  tr.a3 = r1[2].forward(tr.a2);
  relu_inplace(tr.a3);
  tr.a4 = r1[3].forward(tr.a3);
  relu_inplace(tr.a4);

  tr.b1 = r2[0].forward(tr.a4);
  relu_inplace(tr.b1);
  tr.b2 = r2[1].forward(tr.b1);
  relu_inplace(tr.b2);
  tr.b3 = r2[2].forward(tr.b2);
  add_inplace(tr.b3, tr.b1);
  relu_inplace(tr.b3);

  tr.c1 = r3[0].forward(tr.b3);
  relu_inplace(tr.c1);
  tr.c2 = r3[1].forward(tr.c1);
  relu_inplace(tr.c2);
  tr.c3 = r3[2].forward(tr.c2);
  relu_inplace(tr.c3);
  tr.c4 = r3[3].forward(tr.c3);  // the block output keeps no activation
  add_inplace(tr.c4, tr.c1);

  tr.sp.clear();
  tr.sp.reserve(spatial.size());
  const Tensor<T>* prev = &tr.c4;
  for (const auto& layer : spatial) {
    Tensor<T> s = layer.forward(*prev);
    relu_inplace(s);
    tr.sp.push_back(std::move(s));
    prev = &tr.sp.back();
  }
  const Tensor<T>& receptive = *prev;

  // Structure branch.
  tr.f1 = cb[0].forward(tr.x);
  relu_inplace(tr.f1);
  tr.f2 = cb[1].forward(tr.f1);
  relu_inplace(tr.f2);
  tr.f3 = cb[2].forward(tr.f2);
  relu_inplace(tr.f3);
  tr.f4 = cb[3].forward(tr.f3);
  relu_inplace(tr.f4);

  tr.cat = concat_channels(tr.f4, receptive);
  tr.g1 = s1[0].forward(tr.cat);
  relu_inplace(tr.g1);
  tr.g2 = s1[1].forward(tr.g1);
  relu_inplace(tr.g2);

  Output out;
  out.coord = s1[2].forward(tr.g2);
  for (int ch = 0; ch < 3; ++ch) {
    T* plane = out.coord.data() + std::size_t(ch) * out.coord.h * out.coord.w;
    const T off = coordinate_offset[ch];
    for (int i = 0; i < out.coord.h * out.coord.w; ++i) plane[i] += off;
  }

  tr.h1 = ref[0].forward(tr.f4);  // no activation between the refinement convs
  tr.logits = ref[1].forward(tr.h1);
  out.conf_logits = tr.logits;
  out.conf = tr.logits;
  for (auto& value : out.conf.v) value = std::clamp(value, T(0), T(kConfClampMax));
  return out;
}

template <typename T>
void SglNet<T>::backward(const Trace& tr, const Tensor<T>& dcoord, const Tensor<T>& dconf,
                         const Tensor<T>& dlogits_direct) {
  // Confidence head: route the post-clamp gradient through the clamp mask,
  // then add the direct pre-clamp contribution.
  Tensor<T> dlogits = dlogits_direct;
  for (std::size_t i = 0; i < dlogits.v.size(); ++i) {
    const T z = tr.logits.v[i];
    if (z > T(0) && z < T(kConfClampMax)) dlogits.v[i] += dconf.v[i];
  }
  Tensor<T> dh1 = ref[1].backward(tr.h1, dlogits, true);
  Tensor<T> df4 = ref[0].backward(tr.f4, dh1, true);

  // Coordinate head (the offset add is identity in the gradient).
  Tensor<T> dg2 = s1[2].backward(tr.g2, dcoord, true);
  relu_backward_inplace(tr.g2, dg2);
  Tensor<T> dg1 = s1[1].backward(tr.g1, dg2, true);
  relu_backward_inplace(tr.g1, dg1);
  Tensor<T> dcat = s1[0].backward(tr.cat, dg1, true);

  // Split the concat gradient between the two branches.
  Tensor<T> drecept(512, dcat.h, dcat.w);
  {
    const std::size_t f4_size = tr.f4.size();
    for (std::size_t i = 0; i < f4_size; ++i) df4.v[i] += dcat.v[i];
    std::copy(dcat.v.begin() + f4_size, dcat.v.end(), drecept.v.begin());
  }

  // Confidence block.
  relu_backward_inplace(tr.f4, df4);
  Tensor<T> df3 = cb[3].backward(tr.f3, df4, true);
  relu_backward_inplace(tr.f3, df3);
  Tensor<T> df2 = cb[2].backward(tr.f2, df3, true);
  relu_backward_inplace(tr.f2, df2);
  Tensor<T> df1 = cb[1].backward(tr.f1, df2, true);
  relu_backward_inplace(tr.f1, df1);
  cb[0].backward(tr.x, df1, false);

  // Spatial block.
  Tensor<T> dsp = std::move(drecept);
  for (int i = int(spatial.size()) - 1; i >= 0; --i) {
    relu_backward_inplace(tr.sp[i], dsp);
    const Tensor<T>& input = (i > 0) ? tr.sp[i - 1] : tr.c4;
    dsp = spatial[i].backward(input, dsp, true);
  }

  // R3: c4 = c1 + conv(c3).
  Tensor<T> dc4 = std::move(dsp);
  Tensor<T> dc3 = r3[3].backward(tr.c3, dc4, true);
  relu_backward_inplace(tr.c3, dc3);
  Tensor<T> dc2 = r3[2].backward(tr.c2, dc3, true);
  relu_backward_inplace(tr.c2, dc2);
  Tensor<T> dc1 = r3[1].backward(tr.c1, dc2, true);
  add_inplace(dc1, dc4);  // shortcut
  relu_backward_inplace(tr.c1, dc1);
  Tensor<T> db3 = r3[0].backward(tr.b3, dc1, true);

  // R2: b3 = relu(b1 + conv(b2)).
  relu_backward_inplace(tr.b3, db3);
  Tensor<T> db2 = r2[2].backward(tr.b2, db3, true);
  relu_backward_inplace(tr.b2, db2);
  Tensor<T> db1 = r2[1].backward(tr.b1, db2, true);
  add_inplace(db1, db3);  // shortcut
  relu_backward_inplace(tr.b1, db1);
  Tensor<T> da4 = r2[0].backward(tr.a4, db1, true);

  // R1.
  relu_backward_inplace(tr.a4, da4);
  Tensor<T> da3 = r1[3].backward(tr.a3, da4, true);
  relu_backward_inplace(tr.a3, da3);
  Tensor<T> da2 = r1[2].backward(tr.a2, da3, true);
  relu_backward_inplace(tr.a2, da2);
  Tensor<T> da1 = r1[1].backward(tr.a1, da2, true);
  relu_backward_inplace(tr.a1, da1);
  r1[0].backward(tr.x, da1, false);
}

template <typename T>
void Adam<T>::attach(const std::vector<Conv2d<T>*>& layers) {
  m.clear();
  v.clear();
  for (const Conv2d<T>* layer : layers) {
    m.emplace_back(layer->weight.size(), T(0));
    m.emplace_back(layer->bias.size(), T(0));
    v.emplace_back(layer->weight.size(), T(0));
    v.emplace_back(layer->bias.size(), T(0));
  }
  t = 0;
}

template <typename T>
void Adam<T>::step(const std::vector<Conv2d<T>*>& layers) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  std::size_t slot = 0;
  for (Conv2d<T>* layer : layers) {
    auto update = [&](std::vector<T>& param, const std::vector<T>& grad) {
      auto& ms = m[slot];
      auto& vs = v[slot];
      ++slot;
      for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        ms[i] = T(beta1) * ms[i] + T(1.0 - beta1) * g;
        vs[i] = T(beta2) * vs[i] + T(1.0 - beta2) * g * g;
        param[i] -= T(lr) * (ms[i] / T(bc1)) / (std::sqrt(vs[i] / T(bc2)) + T(eps));
      }
    };
    update(layer->weight, layer->dweight);
    update(layer->bias, layer->dbias);
  }
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct SglNet<float>;
template struct SglNet<double>;
template struct Adam<float>;
template struct Adam<double>;
template void relu_inplace<float>(Tensor<float>&);
template void relu_inplace<double>(Tensor<double>&);
template void relu_backward_inplace<float>(const Tensor<float>&, Tensor<float>&);
template void relu_backward_inplace<double>(const Tensor<double>&, Tensor<double>&);

}  // namespace sgl::nn
