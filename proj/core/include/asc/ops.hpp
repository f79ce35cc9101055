#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "asc/rng.hpp"
#include "asc/tensor.hpp"

namespace asc {

// 3x3-by-default same-padding convolution parameters. Spatial dims must be
// odd so the output grid aligns with the input grid.
template <typename T>
struct Conv2dParams {
  Tensor<T> kernel;  // [out_ch, in_ch, kh, kw]
  Tensor<T> bias;    // [out_ch]
};

namespace detail {

template <typename T>
inline void accumulate(Tape<T>& tp, int node, const std::vector<T>& contrib) {
  if (node < 0) return;
  auto& g = tp.grad(node);
  for (std::size_t i = 0; i < contrib.size(); ++i) g[i] += contrib[i];
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  Tensor<T> out = Tensor<T>::zeros(a.shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  ensure_all_finite(out, "add");
  if (Tape<T>* tp = joint_tape<T>({&a, &b})) {
    const int an = a.node, bn = b.node;
    tp->record(out, {an, bn}, [an, bn](Tape<T>& t, const std::vector<T>& g) {
      if (an >= 0) {
        auto& ga = t.grad(an);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = t.grad(bn);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) (*out.data)[i] = (*x.data)[i] * c;
  ensure_all_finite(out, "scale");
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    tp->record(out, {xn}, [xn, c](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
    });
  }
  return out;
}

// Shape change over the same underlying data (no copy).
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape) + " to " + shape_str(new_shape) +
                     " changes element count");
  }
  Tensor<T> out;
  out.shape = std::move(new_shape);
  out.data = x.data;
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    tp->record(out, {xn}, [xn](Tape<T>& t, const std::vector<T>& g) {
      detail::accumulate(t, xn, g);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*out.data)[i] = (*x.data)[i] > T(0) ? (*x.data)[i] : T(0);
  }
  ensure_all_finite(out, "relu");
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    auto xd = x.data;
    tp->record(out, {xn}, [xn, xd](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if ((*xd)[i] > T(0)) gx[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) (*out.data)[i] = std::tanh((*x.data)[i]);
  ensure_all_finite(out, "tanh");
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    auto yd = out.data;
    tp->record(out, {xn}, [xn, yd](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = (*yd)[i];
        gx[i] += g[i] * (T(1) - y * y);
      }
    });
  }
  return out;
}

// C[m,n] = A[m,k] * B[k,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible " + shape_str(a.shape) + " x " + shape_str(b.shape));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = pa[i * k + kk];
      if (av == T(0)) continue;
      const T* brow = pb + kk * n;
      T* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  ensure_all_finite(out, "matmul");
  if (Tape<T>* tp = joint_tape<T>({&a, &b})) {
    const int an = a.node, bn = b.node;
    auto ad = a.data;
    auto bd = b.data;
    tp->record(out, {an, bn}, [an, bn, ad, bd, m, k, n](Tape<T>& t, const std::vector<T>& g) {
      if (an >= 0) {
        auto& ga = t.grad(an);  // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            T s = 0;
            const T* grow = g.data() + i * n;
            const T* brow = bd->data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[i * k + kk] += s;
          }
      }
      if (bn >= 0) {
        auto& gb = t.grad(bn);  // dB = A^T * G
        for (std::size_t kk = 0; kk < k; ++kk)
          for (std::size_t i = 0; i < m; ++i) {
            const T av = (*ad)[i * k + kk];
            if (av == T(0)) continue;
            const T* grow = g.data() + i * n;
            T* brow = gb.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    });
  }
  return out;
}

// C[m,n] = A[m,k] * B[n,k]^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: incompatible " + shape_str(a.shape) + " x " + shape_str(b.shape) + "^T");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.ptr() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.ptr() + j * k;
      T s = 0;
      for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      (*out.data)[i * n + j] = s;
    }
  }
  ensure_all_finite(out, "matmul_nt");
  if (Tape<T>* tp = joint_tape<T>({&a, &b})) {
    const int an = a.node, bn = b.node;
    auto ad = a.data;
    auto bd = b.data;
    tp->record(out, {an, bn}, [an, bn, ad, bd, m, k, n](Tape<T>& t, const std::vector<T>& g) {
      if (an >= 0) {
        auto& ga = t.grad(an);  // dA = G * B
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const T gv = g[i * n + j];
            if (gv == T(0)) continue;
            const T* brow = bd->data() + j * k;
            T* arow = ga.data() + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) arow[kk] += gv * brow[kk];
          }
      }
      if (bn >= 0) {
        auto& gb = t.grad(bn);  // dB = G^T * A
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < m; ++i) {
            const T gv = g[i * n + j];
            if (gv == T(0)) continue;
            const T* arow = ad->data() + i * k;
            T* brow = gb.data() + j * k;
            for (std::size_t kk = 0; kk < k; ++kk) brow[kk] += gv * arow[kk];
          }
      }
    });
  }
  return out;
}

// Affine map over the last axis: y = x * w + b, x is [..., D_in].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() < 1 || w.rank() != 2) {
    throw ShapeError("linear: need x [...,D_in] and w [D_in,D_out]");
  }
  const std::size_t d_in = x.shape.back();
  if (d_in != w.dim(0)) {
    throw ShapeError("linear: input width " + std::to_string(d_in) + " vs weight " +
                     shape_str(w.shape));
  }
  const std::size_t d_out = w.dim(1);
  if (b.size() != d_out) {
    throw ShapeError("linear: bias " + shape_str(b.shape) + " vs D_out " + std::to_string(d_out));
  }
  const std::size_t rows = x.size() / d_in;
  Shape out_shape = x.shape;
  out_shape.back() = d_out;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    T* orow = out.ptr() + r * d_out;
    for (std::size_t j = 0; j < d_out; ++j) orow[j] = (*b.data)[j];
    const T* xrow = x.ptr() + r * d_in;
    for (std::size_t i = 0; i < d_in; ++i) {
      const T xv = xrow[i];
      if (xv == T(0)) continue;
      const T* wrow = w.ptr() + i * d_out;
      for (std::size_t j = 0; j < d_out; ++j) orow[j] += xv * wrow[j];
    }
  }
  ensure_all_finite(out, "linear");
  if (Tape<T>* tp = joint_tape<T>({&x, &w, &b})) {
    const int xn = x.node, wn = w.node, bn = b.node;
    auto xd = x.data;
    auto wd = w.data;
    tp->record(out, {xn, wn, bn},
               [xn, wn, bn, xd, wd, rows, d_in, d_out](Tape<T>& t, const std::vector<T>& g) {
                 if (xn >= 0) {
                   auto& gx = t.grad(xn);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < d_in; ++i) {
                       const T* grow = g.data() + r * d_out;
                       const T* wrow = wd->data() + i * d_out;
                       T s = 0;
                       for (std::size_t j = 0; j < d_out; ++j) s += grow[j] * wrow[j];
                       gx[r * d_in + i] += s;
                     }
                 }
                 if (wn >= 0) {
                   auto& gw = t.grad(wn);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < d_in; ++i) {
                       const T xv = (*xd)[r * d_in + i];
                       if (xv == T(0)) continue;
                       const T* grow = g.data() + r * d_out;
                       T* wrow = gw.data() + i * d_out;
                       for (std::size_t j = 0; j < d_out; ++j) wrow[j] += xv * grow[j];
                     }
                 }
                 if (bn >= 0) {
                   auto& gb = t.grad(bn);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const T* grow = g.data() + r * d_out;
                     for (std::size_t j = 0; j < d_out; ++j) gb[j] += grow[j];
                   }
                 }
               });
  }
  return out;
}

// Same-padding stride-1 convolution, input [N,C,H,W], kernel [O,C,kh,kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  if (x.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d: need input [N,C,H,W] and kernel [O,C,kh,kw], got " +
                     shape_str(x.shape) + " and " + shape_str(kernel.shape));
  }
  if (x.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " != kernel in_ch " + std::to_string(kernel.dim(1)));
  }
  const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv2d: kernel spatial dims must be odd for same padding");
  }
  if (x.dim(2) < 1 || x.dim(3) < 1) throw ShapeError("conv2d: empty spatial dims");
  const std::size_t n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = kernel.dim(0);
  if (bias.size() != c_out) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape) + " vs out_ch " + std::to_string(c_out));
  }
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  Tensor<T> out = Tensor<T>::zeros({n_batch, c_out, h, w});

  const T* px = x.ptr();
  const T* pk = kernel.ptr();
  T* po = out.ptr();
  const std::size_t x_c_stride = h * w;
  const std::size_t x_n_stride = c_in * x_c_stride;
  const std::size_t o_c_stride = h * w;
  const std::size_t o_n_stride = c_out * o_c_stride;
  for (std::size_t nb = 0; nb < n_batch; ++nb) {
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      T* oplane = po + nb * o_n_stride + oc * o_c_stride;
      const T bv = (*bias.data)[oc];
      for (std::size_t i = 0; i < h * w; ++i) oplane[i] = bv;
      for (std::size_t ic = 0; ic < c_in; ++ic) {
        const T* xplane = px + nb * x_n_stride + ic * x_c_stride;
        const T* ktap = pk + ((oc * c_in + ic) * kh) * kw;
        for (std::size_t u = 0; u < kh; ++u) {
          for (std::size_t v = 0; v < kw; ++v) {
            const T kv = ktap[u * kw + v];
            if (kv == T(0)) continue;
            const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(u) - ph;
            const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(v) - pw;
            const std::size_t i0 = di < 0 ? static_cast<std::size_t>(-di) : 0;
            const std::size_t i1 = di > 0 ? h - static_cast<std::size_t>(di) : h;
            const std::size_t j0 = dj < 0 ? static_cast<std::size_t>(-dj) : 0;
            const std::size_t j1 = dj > 0 ? w - static_cast<std::size_t>(dj) : w;
            for (std::size_t i = i0; i < i1; ++i) {
              const T* xrow = xplane + (i + di) * w + dj;
              T* orow = oplane + i * w;
              for (std::size_t j = j0; j < j1; ++j) orow[j] += kv * xrow[j];
            }
          }
        }
      }
    }
  }
  ensure_all_finite(out, "conv2d");
  if (Tape<T>* tp = joint_tape<T>({&x, &kernel, &bias})) {
    const int xn = x.node, kn = kernel.node, bn = bias.node;
    auto xd = x.data;
    auto kd = kernel.data;
    tp->record(out, {xn, kn, bn},
               [=](Tape<T>& t, const std::vector<T>& g) {
                 if (bn >= 0) {
                   auto& gb = t.grad(bn);
                   for (std::size_t nb = 0; nb < n_batch; ++nb)
                     for (std::size_t oc = 0; oc < c_out; ++oc) {
                       const T* gplane = g.data() + nb * o_n_stride + oc * o_c_stride;
                       T s = 0;
                       for (std::size_t i = 0; i < h * w; ++i) s += gplane[i];
                       gb[oc] += s;
                     }
                 }
                 if (kn >= 0) {
                   auto& gk = t.grad(kn);
                   for (std::size_t nb = 0; nb < n_batch; ++nb)
                     for (std::size_t oc = 0; oc < c_out; ++oc) {
                       const T* gplane = g.data() + nb * o_n_stride + oc * o_c_stride;
                       for (std::size_t ic = 0; ic < c_in; ++ic) {
                         const T* xplane = xd->data() + nb * x_n_stride + ic * x_c_stride;
                         for (std::size_t u = 0; u < kh; ++u)
                           for (std::size_t v = 0; v < kw; ++v) {
                             const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(u) - ph;
                             const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(v) - pw;
                             const std::size_t i0 = di < 0 ? static_cast<std::size_t>(-di) : 0;
                             const std::size_t i1 = di > 0 ? h - static_cast<std::size_t>(di) : h;
                             const std::size_t j0 = dj < 0 ? static_cast<std::size_t>(-dj) : 0;
                             const std::size_t j1 = dj > 0 ? w - static_cast<std::size_t>(dj) : w;
                             T s = 0;
                             for (std::size_t i = i0; i < i1; ++i) {
                               const T* xrow = xplane + (i + di) * w + dj;
                               const T* grow = gplane + i * w;
                               for (std::size_t j = j0; j < j1; ++j) s += grow[j] * xrow[j];
                             }
                             gk[((oc * c_in + ic) * kh + u) * kw + v] += s;
                           }
                       }
                     }
                 }
                 if (xn >= 0) {
                   auto& gx = t.grad(xn);
                   for (std::size_t nb = 0; nb < n_batch; ++nb)
                     for (std::size_t oc = 0; oc < c_out; ++oc) {
                       const T* gplane = g.data() + nb * o_n_stride + oc * o_c_stride;
                       for (std::size_t ic = 0; ic < c_in; ++ic) {
                         T* xgplane = gx.data() + nb * x_n_stride + ic * x_c_stride;
                         const T* ktap = kd->data() + ((oc * c_in + ic) * kh) * kw;
                         for (std::size_t u = 0; u < kh; ++u)
                           for (std::size_t v = 0; v < kw; ++v) {
                             const T kv = ktap[u * kw + v];
                             if (kv == T(0)) continue;
                             const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(u) - ph;
                             const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(v) - pw;
                             const std::size_t i0 = di < 0 ? static_cast<std::size_t>(-di) : 0;
                             const std::size_t i1 = di > 0 ? h - static_cast<std::size_t>(di) : h;
                             const std::size_t j0 = dj < 0 ? static_cast<std::size_t>(-dj) : 0;
                             const std::size_t j1 = dj > 0 ? w - static_cast<std::size_t>(dj) : w;
                             for (std::size_t i = i0; i < i1; ++i) {
                               T* xgrow = xgplane + (i + di) * w + dj;
                               const T* grow = gplane + i * w;
                               for (std::size_t j = j0; j < j1; ++j) xgrow[j] += kv * grow[j];
                             }
                           }
                       }
                     }
                 }
               });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p) {
  return conv2d(x, p.kernel, p.bias);
}

// 2x2 max pooling over the two trailing spatial axes of [N,C,H,W]. Axes
// shorter than the window pass through unpooled. Gradient goes to the first
// occurrence of the maximum within each window.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t window = 2) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: need [N,C,H,W], got " + shape_str(x.shape));
  if (window < 1) throw ShapeError("maxpool2d: window must be >= 1");
  const std::size_t n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const bool pool_h = h >= window;
  const bool pool_w = w >= window;
  const std::size_t oh = pool_h ? h / window : h;
  const std::size_t ow = pool_w ? w / window : w;
  Tensor<T> out = Tensor<T>::zeros({n_batch, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const std::size_t sh = pool_h ? window : 1;
  const std::size_t sw = pool_w ? window : 1;
  const std::size_t wh = pool_h ? window : 1;
  const std::size_t ww = pool_w ? window : 1;
  for (std::size_t nb = 0; nb < n_batch; ++nb)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* xplane = x.ptr() + (nb * c + ch) * h * w;
      T* oplane = out.ptr() + (nb * c + ch) * oh * ow;
      std::uint32_t* aplane = argmax->data() + (nb * c + ch) * oh * ow;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          T best = xplane[(i * sh) * w + (j * sw)];
          std::size_t best_idx = (i * sh) * w + (j * sw);
          for (std::size_t u = 0; u < wh; ++u)
            for (std::size_t v = 0; v < ww; ++v) {
              const std::size_t idx = (i * sh + u) * w + (j * sw + v);
              if (xplane[idx] > best) {  // strict: first occurrence wins ties
                best = xplane[idx];
                best_idx = idx;
              }
            }
          oplane[i * ow + j] = best;
          aplane[i * ow + j] = static_cast<std::uint32_t>(best_idx);
        }
    }
  ensure_all_finite(out, "maxpool2d");
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    const std::size_t plane_in = h * w, plane_out = oh * ow, planes = n_batch * c;
    tp->record(out, {xn}, [xn, argmax, plane_in, plane_out, planes](Tape<T>& t,
                                                                    const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t p = 0; p < planes; ++p) {
        const std::uint32_t* aplane = argmax->data() + p * plane_out;
        const T* gplane = g.data() + p * plane_out;
        T* xgplane = gx.data() + p * plane_in;
        for (std::size_t i = 0; i < plane_out; ++i) xgplane[aplane[i]] += gplane[i];
      }
    });
  }
  return out;
}

// Numerically stable softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape));
  }
  const std::size_t len = x.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = (*x.data)[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, (*x.data)[base + l * inner]);
      T sum = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp((*x.data)[base + l * inner] - mx);
        (*out.data)[base + l * inner] = e;
        sum += e;
      }
      for (std::size_t l = 0; l < len; ++l) (*out.data)[base + l * inner] /= sum;
    }
  ensure_all_finite(out, "softmax");
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    auto yd = out.data;
    tp->record(out, {xn}, [xn, yd, outer, inner, len](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = 0;
          for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * (*yd)[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = base + l * inner;
            gx[idx] += (*yd)[idx] * (g[idx] - dot);
          }
        }
    });
  }
  return out;
}

// Per-vector standardization over the last axis, then affine by gain/shift.
// Variance is the population variance with an eps floor.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                    T eps = T(1e-5)) {
  if (x.rank() < 1) throw ShapeError("layernorm: need at least rank 1");
  const std::size_t d = x.shape.back();
  if (d < 1) throw ShapeError("layernorm: empty last axis");
  if (gain.size() != d || shift.size() != d) {
    throw ShapeError("layernorm: gain/shift must be [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.size() / d;
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto invstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * d;
    T mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const T c = xr[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*invstd)[r] = is;
    T* or_ = out.ptr() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const T xh = (xr[i] - mean) * is;
      (*xhat)[r * d + i] = xh;
      or_[i] = xh * (*gain.data)[i] + (*shift.data)[i];
    }
  }
  ensure_all_finite(out, "layernorm");
  if (Tape<T>* tp = joint_tape<T>({&x, &gain, &shift})) {
    const int xn = x.node, gn = gain.node, sn = shift.node;
    auto gd = gain.data;
    tp->record(out, {xn, gn, sn},
               [xn, gn, sn, gd, xhat, invstd, rows, d](Tape<T>& t, const std::vector<T>& g) {
                 if (gn >= 0) {
                   auto& gg = t.grad(gn);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < d; ++i)
                       gg[i] += g[r * d + i] * (*xhat)[r * d + i];
                 }
                 if (sn >= 0) {
                   auto& gs = t.grad(sn);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < d; ++i) gs[i] += g[r * d + i];
                 }
                 if (xn >= 0) {
                   auto& gx = t.grad(xn);
                   for (std::size_t r = 0; r < rows; ++r) {
                     T mean_gy = 0, mean_gyxh = 0;
                     for (std::size_t i = 0; i < d; ++i) {
                       const T gy = g[r * d + i] * (*gd)[i];
                       mean_gy += gy;
                       mean_gyxh += gy * (*xhat)[r * d + i];
                     }
                     mean_gy /= static_cast<T>(d);
                     mean_gyxh /= static_cast<T>(d);
                     for (std::size_t i = 0; i < d; ++i) {
                       const T gy = g[r * d + i] * (*gd)[i];
                       gx[r * d + i] +=
                           (*invstd)[r] * (gy - mean_gy - (*xhat)[r * d + i] * mean_gyxh);
                     }
                   }
                 }
               });
  }
  return out;
}

// Inverted dropout: in training mode kept activations scale by 1/(1-rate);
// in inference mode this is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, bool training, Rng& rng) {
  if (rate < T(0) || rate >= T(1)) {
    throw UsageError("dropout: rate must be in [0,1), got " + std::to_string(static_cast<double>(rate)));
  }
  if (!training || rate == T(0)) return x;
  auto mask = std::make_shared<std::vector<T>>(x.size());
  const T keep_scale = T(1) / (T(1) - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = u(rng) >= static_cast<double>(rate) ? keep_scale : T(0);
  }
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) (*out.data)[i] = (*x.data)[i] * (*mask)[i];
  ensure_all_finite(out, "dropout");
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    tp->record(out, {xn}, [xn, mask](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
    });
  }
  return out;
}

// Columns [c0, c1) of a [R, D] matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
  if (x.rank() != 2) throw ShapeError("slice_cols: need rank 2, got " + shape_str(x.shape));
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (c0 >= c1 || c1 > d) throw ShapeError("slice_cols: invalid column range");
  const std::size_t width = c1 - c0;
  Tensor<T> out = Tensor<T>::zeros({rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j)
      (*out.data)[r * width + j] = (*x.data)[r * d + c0 + j];
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    tp->record(out, {xn}, [xn, rows, d, c0, width](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < width; ++j) gx[r * d + c0 + j] += g[r * width + j];
    });
  }
  return out;
}

// Column-wise concatenation of [R, D_i] matrices sharing the row count.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) {
      throw ShapeError("concat_cols: all inputs must be [R,*] with equal R");
    }
    total += p.dim(1);
  }
  Tensor<T> out = Tensor<T>::zeros({rows, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t d = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) (*out.data)[r * total + off + j] = (*p.data)[r * d + j];
    off += d;
  }
  Tape<T>* tp = nullptr;
  for (const auto& p : parts) {
    Tape<T>* q = joint_tape<T>({&p});
    if (q) {
      if (tp && tp != q) throw UsageError("concat_cols: inputs on different tapes");
      tp = q;
    }
  }
  if (tp) {
    std::vector<int> in_nodes;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
      in_nodes.push_back(p.node);
      widths.push_back(p.dim(1));
    }
    tp->record(out, in_nodes, [in_nodes, widths, rows, total](Tape<T>& t, const std::vector<T>& g) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < in_nodes.size(); ++k) {
        const std::size_t d = widths[k];
        if (in_nodes[k] >= 0) {
          auto& gp = t.grad(in_nodes[k]);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gp[r * d + j] += g[r * total + off + j];
        }
        off += d;
      }
    });
  }
  return out;
}

// Concatenation of rank-1 vectors.
template <typename T>
Tensor<T> concat_vec(const std::vector<Tensor<T>>& parts) {
  std::vector<Tensor<T>> rows;
  rows.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.rank() != 1) throw ShapeError("concat_vec: need rank-1 inputs");
    rows.push_back(reshape(p, {1, p.size()}));
  }
  Tensor<T> cat = concat_cols(rows);
  return reshape(cat, {cat.size()});
}

// [1,C,H,W] -> time-major [H, C*W]: row h holds all channels' freq bins.
template <typename T>
Tensor<T> chw_to_time_major(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(0) != 1) {
    throw ShapeError("chw_to_time_major: need [1,C,H,W], got " + shape_str(x.shape));
  }
  const std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out = Tensor<T>::zeros({h, c * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        (*out.data)[i * (c * w) + ch * w + j] = (*x.data)[(ch * h + i) * w + j];
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    tp->record(out, {xn}, [xn, c, h, w](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            gx[(ch * h + i) * w + j] += g[i * (c * w) + ch * w + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (*x.data)[i];
  Tensor<T> out = Tensor<T>::scalar(s);
  ensure_all_finite(out, "sum_all");
  if (Tape<T>* tp = joint_tape<T>({&x})) {
    const int xn = x.node;
    const std::size_t n = x.size();
    tp->record(out, {xn}, [xn, n](Tape<T>& t, const std::vector<T>& g) {
      if (xn < 0) return;
      auto& gx = t.grad(xn);
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
    });
  }
  return out;
}

}  // namespace asc
