#include "stunet/tensor/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "stunet/common/error.hpp"

namespace stunet::kernels {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Upper bound on im2col buffer elements; larger problems are chunked along
// the output depth axis.
constexpr int64_t kColsBudget = int64_t{1} << 23;

struct Dims5 {
  int64_t n, c, d, h, w;
  int64_t spatial() const { return d * h * w; }
};

template <class T>
Dims5 dims5(const BasicTensor<T>& t, const char* what) {
  if (t.rank() != 5) {
    throw InvalidInput(std::string(what) + " must be rank 5 (N, C, D, H, W), got " +
                       shape_to_string(t.shape()));
  }
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.dim(4)};
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InvalidInput(std::string(what) + ": shape " + shape_to_string(a.shape()) + " vs " +
                       shape_to_string(b.shape()));
  }
}

struct ConvGeom {
  Dims5 in;
  int64_t co;
  Triple k, s, p;
  int64_t od, oh, ow;
  int64_t kvol() const { return static_cast<int64_t>(k[0]) * k[1] * k[2]; }
  int64_t K() const { return in.c * kvol(); }
  int64_t plane() const { return oh * ow; }
  int64_t P() const { return od * oh * ow; }
  bool pointwise() const {
    return k == Triple{1, 1, 1} && s == Triple{1, 1, 1} && p == Triple{0, 0, 0};
  }
};

template <class T>
ConvGeom conv_geometry(const BasicTensor<T>& x, const BasicTensor<T>& w, Triple stride, Triple pad) {
  Dims5 in = dims5(x, "conv3d input");
  if (w.rank() != 5) throw InvalidInput("conv3d weight must be rank 5, got " + shape_to_string(w.shape()));
  if (w.dim(1) != in.c) {
    throw InvalidInput("conv3d weight expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                       std::to_string(in.c));
  }
  ConvGeom g{in, w.dim(0), {int(w.dim(2)), int(w.dim(3)), int(w.dim(4))}, stride, pad, 0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    if (stride[a] < 1 || pad[a] < 0) throw InvalidInput("conv3d stride must be >= 1 and pad >= 0");
  }
  g.od = conv_out_extent(int(in.d), g.k[0], stride[0], pad[0]);
  g.oh = conv_out_extent(int(in.h), g.k[1], stride[1], pad[1]);
  g.ow = conv_out_extent(int(in.w), g.k[2], stride[2], pad[2]);
  if (g.od < 1 || g.oh < 1 || g.ow < 1) {
    throw InvalidInput("conv3d output extent would be zero for input " + shape_to_string(x.shape()) +
                       " and kernel " + shape_to_string(w.shape()));
  }
  return g;
}

// Output columns [lo, hi) whose input column ow * s - p + c lies inside [0, w).
inline void valid_span(int64_t out, int64_t in, int s, int p, int c, int64_t& lo, int64_t& hi) {
  const int64_t shift = c - p;
  lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  hi = in - 1 - shift < 0 ? 0 : (in - 1 - shift) / s + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
}

// Fills cols (K x rows*plane) for output depth slices [d0, d0 + rows).
template <class T>
void im2col(const T* xn, const ConvGeom& g, int64_t d0, int64_t rows, T* cols) {
  const int64_t pc = rows * g.plane();
  const int sw = g.s[2];
  int64_t r = 0;
  for (int64_t ci = 0; ci < g.in.c; ++ci) {
    const T* xc = xn + ci * g.in.spatial();
    for (int a = 0; a < g.k[0]; ++a) {
      for (int b = 0; b < g.k[1]; ++b) {
        for (int c = 0; c < g.k[2]; ++c, ++r) {
          T* row = cols + r * pc;
          int64_t lo, hi;
          valid_span(g.ow, g.in.w, sw, g.p[2], c, lo, hi);
          const int64_t shift = c - g.p[2];
          for (int64_t od = d0; od < d0 + rows; ++od) {
            const int64_t id = od * g.s[0] - g.p[0] + a;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              const int64_t ih = oh * g.s[1] - g.p[1] + b;
              T* dst = row + ((od - d0) * g.oh + oh) * g.ow;
              if (id < 0 || id >= g.in.d || ih < 0 || ih >= g.in.h) {
                std::fill(dst, dst + g.ow, T{0});
                continue;
              }
              const T* src = xc + (id * g.in.h + ih) * g.in.w;
              for (int64_t ow = 0; ow < lo; ++ow) dst[ow] = T{0};
              if (sw == 1) {
                std::copy(src + lo + shift, src + hi + shift, dst + lo);
              } else {
                for (int64_t ow = lo; ow < hi; ++ow) dst[ow] = src[ow * sw + shift];
              }
              for (int64_t ow = hi; ow < g.ow; ++ow) dst[ow] = T{0};
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, int64_t d0, int64_t rows, T* dxn) {
  const int64_t pc = rows * g.plane();
  const int sw = g.s[2];
  int64_t r = 0;
  for (int64_t ci = 0; ci < g.in.c; ++ci) {
    T* xc = dxn + ci * g.in.spatial();
    for (int a = 0; a < g.k[0]; ++a) {
      for (int b = 0; b < g.k[1]; ++b) {
        for (int c = 0; c < g.k[2]; ++c, ++r) {
          const T* row = cols + r * pc;
          int64_t lo, hi;
          valid_span(g.ow, g.in.w, sw, g.p[2], c, lo, hi);
          const int64_t shift = c - g.p[2];
          for (int64_t od = d0; od < d0 + rows; ++od) {
            const int64_t id = od * g.s[0] - g.p[0] + a;
            if (id < 0 || id >= g.in.d) continue;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              const int64_t ih = oh * g.s[1] - g.p[1] + b;
              if (ih < 0 || ih >= g.in.h) continue;
              const T* src = row + ((od - d0) * g.oh + oh) * g.ow;
              T* dst = xc + (id * g.in.h + ih) * g.in.w;
              if (sw == 1) {
                for (int64_t ow = lo; ow < hi; ++ow) dst[ow + shift] += src[ow];
              } else {
                for (int64_t ow = lo; ow < hi; ++ow) dst[ow * sw + shift] += src[ow];
              }
            }
          }
        }
      }
    }
  }
}

int64_t rows_per_chunk(const ConvGeom& g) {
  const int64_t per_row = std::max<int64_t>(1, g.K() * g.plane());
  return std::clamp<int64_t>(kColsBudget / per_row, 1, g.od);
}

template <class T>
void check_bias(const BasicTensor<T>* bias, int64_t channels, const char* what) {
  if (bias && !bias->empty() && (bias->rank() != 1 || bias->dim(0) != channels)) {
    throw InvalidInput(std::string(what) + " bias must have shape [" + std::to_string(channels) + "], got " +
                       shape_to_string(bias->shape()));
  }
}

}  // namespace

int conv_out_extent(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

// ---------------------------------------------------------------------------

template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                      Triple stride, Triple pad) {
  const ConvGeom g = conv_geometry(x, w, stride, pad);
  check_bias(bias, g.co, "conv3d");
  BasicTensor<T> y({g.in.n, g.co, g.od, g.oh, g.ow});
  ConstMapMat<T> wm(w.ptr(), g.co, g.K());
  const int64_t chunk = rows_per_chunk(g);
  RowMat<T> cols;
  for (int64_t n = 0; n < g.in.n; ++n) {
    const T* xn = x.ptr() + n * g.in.c * g.in.spatial();
    MapMat<T> yn(y.ptr() + n * g.co * g.P(), g.co, g.P());
    if (g.pointwise()) {
      yn.noalias() = wm * ConstMapMat<T>(xn, g.in.c, g.P());
    } else {
      for (int64_t d0 = 0; d0 < g.od; d0 += chunk) {
        const int64_t rows = std::min(chunk, g.od - d0);
        const int64_t pc = rows * g.plane();
        cols.resize(g.K(), pc);
        im2col(xn, g, d0, rows, cols.data());
        yn.middleCols(d0 * g.plane(), pc).noalias() = wm * cols;
      }
    }
    if (bias && !bias->empty()) {
      for (int64_t c = 0; c < g.co; ++c) yn.row(c).array() += (*bias)[c];
    }
  }
  return y;
}

template <class T>
Conv3dGrads<T> conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, bool has_bias,
                               const BasicTensor<T>& dy, Triple stride, Triple pad) {
  const ConvGeom g = conv_geometry(x, w, stride, pad);
  if (dy.shape() != Shape{g.in.n, g.co, g.od, g.oh, g.ow}) {
    throw InvalidInput("conv3d backward: upstream gradient shape " + shape_to_string(dy.shape()));
  }
  Conv3dGrads<T> out{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape()), {}};
  if (has_bias) out.db = BasicTensor<T>({g.co});
  ConstMapMat<T> wm(w.ptr(), g.co, g.K());
  MapMat<T> dwm(out.dw.ptr(), g.co, g.K());
  const int64_t chunk = rows_per_chunk(g);
  RowMat<T> cols;
  RowMat<T> dcols;
  for (int64_t n = 0; n < g.in.n; ++n) {
    const T* xn = x.ptr() + n * g.in.c * g.in.spatial();
    T* dxn = out.dx.ptr() + n * g.in.c * g.in.spatial();
    ConstMapMat<T> dyn(dy.ptr() + n * g.co * g.P(), g.co, g.P());
    if (has_bias) {
      for (int64_t c = 0; c < g.co; ++c) {
        T acc{0};
        for (int64_t p = 0; p < g.P(); ++p) acc += dyn(c, p);
        out.db[c] += acc;
      }
    }
    if (g.pointwise()) {
      ConstMapMat<T> xm(xn, g.in.c, g.P());
      dwm.noalias() += dyn * xm.transpose();
      MapMat<T>(dxn, g.in.c, g.P()).noalias() = wm.transpose() * dyn;
      continue;
    }
    for (int64_t d0 = 0; d0 < g.od; d0 += chunk) {
      const int64_t rows = std::min(chunk, g.od - d0);
      const int64_t pc = rows * g.plane();
      cols.resize(g.K(), pc);
      im2col(xn, g, d0, rows, cols.data());
      auto dyc = dyn.middleCols(d0 * g.plane(), pc);
      dwm.noalias() += dyc * cols.transpose();
      dcols.resize(g.K(), pc);
      dcols.noalias() = wm.transpose() * dyc;
      col2im_add(dcols.data(), g, d0, rows, dxn);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct TransposeGeom {
  Dims5 in;
  int64_t co;
  Triple s;
  int64_t kvol() const { return static_cast<int64_t>(s[0]) * s[1] * s[2]; }
};

template <class T>
TransposeGeom transpose_geometry(const BasicTensor<T>& x, const BasicTensor<T>& w, Triple stride) {
  Dims5 in = dims5(x, "transpose_conv3d input");
  for (int a = 0; a < 3; ++a) {
    if (stride[a] != 1 && stride[a] != 2) {
      throw InvalidInput("transpose_conv3d supports strides 1 or 2 per axis, got " + to_string(stride));
    }
  }
  if (w.rank() != 5 || w.dim(0) != in.c || w.dim(2) != stride[0] || w.dim(3) != stride[1] ||
      w.dim(4) != stride[2]) {
    throw InvalidInput("transpose_conv3d weight must be [Cin=" + std::to_string(in.c) + ", Cout, " +
                       to_string(stride) + "], got " + shape_to_string(w.shape()));
  }
  return {in, w.dim(1), stride};
}

}  // namespace

template <class T>
BasicTensor<T> transpose_conv3d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>* bias, Triple stride) {
  const TransposeGeom g = transpose_geometry(x, w, stride);
  check_bias(bias, g.co, "transpose_conv3d");
  const int64_t od = g.in.d * g.s[0], oh = g.in.h * g.s[1], ow = g.in.w * g.s[2];
  BasicTensor<T> y({g.in.n, g.co, od, oh, ow});
  const int64_t rows = g.co * g.kvol();
  ConstMapMat<T> wm(w.ptr(), g.in.c, rows);
  RowMat<T> taps(rows, g.in.spatial());
  for (int64_t n = 0; n < g.in.n; ++n) {
    ConstMapMat<T> xm(x.ptr() + n * g.in.c * g.in.spatial(), g.in.c, g.in.spatial());
    taps.noalias() = wm.transpose() * xm;
    for (int64_t c = 0; c < g.co; ++c) {
      const T b = (bias && !bias->empty()) ? (*bias)[c] : T{0};
      for (int a = 0; a < g.s[0]; ++a)
        for (int bb = 0; bb < g.s[1]; ++bb)
          for (int cc = 0; cc < g.s[2]; ++cc) {
            const int64_t r = ((c * g.s[0] + a) * g.s[1] + bb) * g.s[2] + cc;
            const T* src = taps.data() + r * g.in.spatial();
            for (int64_t d = 0; d < g.in.d; ++d)
              for (int64_t h = 0; h < g.in.h; ++h)
                for (int64_t wv = 0; wv < g.in.w; ++wv) {
                  y.at(n, c, d * g.s[0] + a, h * g.s[1] + bb, wv * g.s[2] + cc) =
                      src[(d * g.in.h + h) * g.in.w + wv] + b;
                }
          }
    }
  }
  return y;
}

template <class T>
Conv3dGrads<T> transpose_conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                         bool has_bias, const BasicTensor<T>& dy, Triple stride) {
  const TransposeGeom g = transpose_geometry(x, w, stride);
  const int64_t rows = g.co * g.kvol();
  Conv3dGrads<T> out{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape()), {}};
  if (has_bias) out.db = BasicTensor<T>({g.co});
  ConstMapMat<T> wm(w.ptr(), g.in.c, rows);
  MapMat<T> dwm(out.dw.ptr(), g.in.c, rows);
  RowMat<T> dtaps(rows, g.in.spatial());
  for (int64_t n = 0; n < g.in.n; ++n) {
    for (int64_t c = 0; c < g.co; ++c) {
      T bacc{0};
      for (int a = 0; a < g.s[0]; ++a)
        for (int bb = 0; bb < g.s[1]; ++bb)
          for (int cc = 0; cc < g.s[2]; ++cc) {
            const int64_t r = ((c * g.s[0] + a) * g.s[1] + bb) * g.s[2] + cc;
            T* dst = dtaps.data() + r * g.in.spatial();
            for (int64_t d = 0; d < g.in.d; ++d)
              for (int64_t h = 0; h < g.in.h; ++h)
                for (int64_t wv = 0; wv < g.in.w; ++wv) {
                  const T v = dy.at(n, c, d * g.s[0] + a, h * g.s[1] + bb, wv * g.s[2] + cc);
                  dst[(d * g.in.h + h) * g.in.w + wv] = v;
                  bacc += v;
                }
          }
      if (has_bias) out.db[c] += bacc;
    }
    ConstMapMat<T> xm(x.ptr() + n * g.in.c * g.in.spatial(), g.in.c, g.in.spatial());
    dwm.noalias() += xm * dtaps.transpose();
    MapMat<T>(out.dx.ptr() + n * g.in.c * g.in.spatial(), g.in.c, g.in.spatial()).noalias() = wm * dtaps;
  }
  return out;
}

// ---------------------------------------------------------------------------

template <class T>
NormForward<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                             const BasicTensor<T>& beta, double eps) {
  const Dims5 d = dims5(x, "instance_norm input");
  if (gamma.shape() != Shape{d.c} || beta.shape() != Shape{d.c}) {
    throw InvalidInput("instance_norm affine parameters must have shape [" + std::to_string(d.c) + "]");
  }
  NormForward<T> out{BasicTensor<T>(x.shape()), BasicTensor<T>(x.shape()),
                     std::vector<double>(static_cast<size_t>(d.n * d.c))};
  const int64_t m = d.spatial();
  for (int64_t nc = 0; nc < d.n * d.c; ++nc) {
    const int64_t c = nc % d.c;
    const T* src = x.ptr() + nc * m;
    double mean = 0.0;
    for (int64_t i = 0; i < m; ++i) mean += src[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      const double dv = src[i] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    out.inv_std[static_cast<size_t>(nc)] = inv;
    T* xh = out.xhat.ptr() + nc * m;
    T* y = out.y.ptr() + nc * m;
    const T g = gamma[c], b = beta[c];
    for (int64_t i = 0; i < m; ++i) {
      xh[i] = static_cast<T>((src[i] - mean) * inv);
      y[i] = g * xh[i] + b;
    }
  }
  return out;
}

template <class T>
NormGrads<T> instance_norm_backward(const NormForward<T>& fwd, const BasicTensor<T>& gamma,
                                    const BasicTensor<T>& dy) {
  const Dims5 d = dims5(fwd.xhat, "instance_norm input");
  NormGrads<T> out{BasicTensor<T>(fwd.xhat.shape()), BasicTensor<T>({d.c}), BasicTensor<T>({d.c})};
  const int64_t m = d.spatial();
  const double inv_m = 1.0 / static_cast<double>(m);
  for (int64_t nc = 0; nc < d.n * d.c; ++nc) {
    const int64_t c = nc % d.c;
    const T* g = dy.ptr() + nc * m;
    const T* xh = fwd.xhat.ptr() + nc * m;
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      sum_dy += g[i];
      sum_dy_xh += static_cast<double>(g[i]) * xh[i];
    }
    out.dgamma[c] += static_cast<T>(sum_dy_xh);
    out.dbeta[c] += static_cast<T>(sum_dy);
    const double gm = gamma[c];
    const double inv = fwd.inv_std[static_cast<size_t>(nc)];
    T* dx = out.dx.ptr() + nc * m;
    for (int64_t i = 0; i < m; ++i) {
      dx[i] = static_cast<T>(gm * inv * (g[i] - sum_dy * inv_m - xh[i] * sum_dy_xh * inv_m));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

template <class T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope) {
  BasicTensor<T> y = x;
  const T s = static_cast<T>(slope);
  for (auto& v : y.data()) v = v >= T{0} ? v : s * v;
  return y;
}

template <class T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy, double slope) {
  require_same_shape(x, dy, "leaky_relu backward");
  BasicTensor<T> dx = dy;
  const T s = static_cast<T>(slope);
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (x[i] < T{0}) dx[i] *= s;
  }
  return dx;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> y = a;
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += b[i];
  return y;
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  BasicTensor<T> y = a;
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= b[i];
  return y;
}

// ---------------------------------------------------------------------------

namespace {

void check_factors(const Triple& f, const char* what) {
  for (int v : f) {
    if (v != 1 && v != 2) throw InvalidInput(std::string(what) + ": factors must be 1 or 2, got " + to_string(f));
  }
}

// Half-pixel source taps for one axis.
struct AxisTaps {
  std::vector<int64_t> i0, i1;
  std::vector<double> l1;
};

AxisTaps linear_taps(int64_t in, int factor) {
  const int64_t out = in * factor;
  AxisTaps t{std::vector<int64_t>(out), std::vector<int64_t>(out), std::vector<double>(out)};
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    int64_t lo = static_cast<int64_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    t.i0[o] = lo;
    t.i1[o] = std::min(lo + 1, in - 1);
    t.l1[o] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

template <class T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, Triple f) {
  check_factors(f, "upsample_nearest");
  const Dims5 d = dims5(x, "upsample_nearest input");
  BasicTensor<T> y({d.n, d.c, d.d * f[0], d.h * f[1], d.w * f[2]});
  for (int64_t nc = 0; nc < d.n * d.c; ++nc)
    for (int64_t od = 0; od < d.d * f[0]; ++od)
      for (int64_t oh = 0; oh < d.h * f[1]; ++oh) {
        const T* src = x.ptr() + ((nc * d.d + od / f[0]) * d.h + oh / f[1]) * d.w;
        T* dst = y.ptr() + ((nc * d.d * f[0] + od) * d.h * f[1] + oh) * d.w * f[2];
        for (int64_t ow = 0; ow < d.w * f[2]; ++ow) dst[ow] = src[ow / f[2]];
      }
  return y;
}

template <class T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& dy, Triple f) {
  check_factors(f, "upsample_nearest");
  const Dims5 o = dims5(dy, "upsample_nearest gradient");
  const Dims5 d{o.n, o.c, o.d / f[0], o.h / f[1], o.w / f[2]};
  BasicTensor<T> dx({d.n, d.c, d.d, d.h, d.w});
  for (int64_t nc = 0; nc < d.n * d.c; ++nc)
    for (int64_t od = 0; od < o.d; ++od)
      for (int64_t oh = 0; oh < o.h; ++oh) {
        T* dst = dx.ptr() + ((nc * d.d + od / f[0]) * d.h + oh / f[1]) * d.w;
        const T* src = dy.ptr() + ((nc * o.d + od) * o.h + oh) * o.w;
        for (int64_t ow = 0; ow < o.w; ++ow) dst[ow / f[2]] += src[ow];
      }
  return dx;
}

template <class T>
BasicTensor<T> upsample_trilinear(const BasicTensor<T>& x, Triple f) {
  check_factors(f, "upsample_trilinear");
  const Dims5 d = dims5(x, "upsample_trilinear input");
  const AxisTaps td = linear_taps(d.d, f[0]), th = linear_taps(d.h, f[1]), tw = linear_taps(d.w, f[2]);
  const int64_t od = d.d * f[0], oh = d.h * f[1], ow = d.w * f[2];
  BasicTensor<T> y({d.n, d.c, od, oh, ow});
  for (int64_t nc = 0; nc < d.n * d.c; ++nc) {
    const T* src = x.ptr() + nc * d.spatial();
    T* dst = y.ptr() + nc * od * oh * ow;
    for (int64_t a = 0; a < od; ++a) {
      const int64_t zs[2] = {td.i0[a], td.i1[a]};
      const double zw[2] = {1.0 - td.l1[a], td.l1[a]};
      for (int64_t b = 0; b < oh; ++b) {
        const int64_t ys[2] = {th.i0[b], th.i1[b]};
        const double yw[2] = {1.0 - th.l1[b], th.l1[b]};
        for (int64_t c = 0; c < ow; ++c) {
          const int64_t xs[2] = {tw.i0[c], tw.i1[c]};
          const double xw[2] = {1.0 - tw.l1[c], tw.l1[c]};
          double acc = 0.0;
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              for (int k = 0; k < 2; ++k)
                acc += zw[i] * yw[j] * xw[k] * src[(zs[i] * d.h + ys[j]) * d.w + xs[k]];
          dst[(a * oh + b) * ow + c] = static_cast<T>(acc);
        }
      }
    }
  }
  return y;
}

template <class T>
BasicTensor<T> upsample_trilinear_backward(const BasicTensor<T>& dy, const Shape& x_shape, Triple f) {
  check_factors(f, "upsample_trilinear");
  BasicTensor<T> dx(x_shape);
  const Dims5 d = dims5(dx, "upsample_trilinear input");
  const AxisTaps td = linear_taps(d.d, f[0]), th = linear_taps(d.h, f[1]), tw = linear_taps(d.w, f[2]);
  const int64_t od = d.d * f[0], oh = d.h * f[1], ow = d.w * f[2];
  if (dy.shape() != Shape{d.n, d.c, od, oh, ow}) {
    throw InvalidInput("upsample_trilinear backward: gradient shape " + shape_to_string(dy.shape()));
  }
  for (int64_t nc = 0; nc < d.n * d.c; ++nc) {
    T* dst = dx.ptr() + nc * d.spatial();
    const T* src = dy.ptr() + nc * od * oh * ow;
    for (int64_t a = 0; a < od; ++a) {
      const int64_t zs[2] = {td.i0[a], td.i1[a]};
      const double zw[2] = {1.0 - td.l1[a], td.l1[a]};
      for (int64_t b = 0; b < oh; ++b) {
        const int64_t ys[2] = {th.i0[b], th.i1[b]};
        const double yw[2] = {1.0 - th.l1[b], th.l1[b]};
        for (int64_t c = 0; c < ow; ++c) {
          const int64_t xs[2] = {tw.i0[c], tw.i1[c]};
          const double xw[2] = {1.0 - tw.l1[c], tw.l1[c]};
          const double g = src[(a * oh + b) * ow + c];
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              for (int k = 0; k < 2; ++k)
                dst[(zs[i] * d.h + ys[j]) * d.w + xs[k]] += static_cast<T>(zw[i] * yw[j] * xw[k] * g);
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Dims5 da = dims5(a, "concat_channels lhs");
  const Dims5 db = dims5(b, "concat_channels rhs");
  if (da.n != db.n || da.d != db.d || da.h != db.h || da.w != db.w) {
    throw InvalidInput("concat_channels: batch/spatial extents differ, " + shape_to_string(a.shape()) +
                       " vs " + shape_to_string(b.shape()));
  }
  BasicTensor<T> y({da.n, da.c + db.c, da.d, da.h, da.w});
  const int64_t m = da.spatial();
  for (int64_t n = 0; n < da.n; ++n) {
    T* dst = y.ptr() + n * (da.c + db.c) * m;
    std::copy_n(a.ptr() + n * da.c * m, da.c * m, dst);
    std::copy_n(b.ptr() + n * db.c * m, db.c * m, dst + da.c * m);
  }
  return y;
}

template <class T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int64_t begin, int64_t count) {
  const Dims5 d = dims5(x, "slice_channels input");
  if (begin < 0 || count < 1 || begin + count > d.c) throw InvalidInput("slice_channels: range out of bounds");
  BasicTensor<T> y({d.n, count, d.d, d.h, d.w});
  const int64_t m = d.spatial();
  for (int64_t n = 0; n < d.n; ++n) {
    std::copy_n(x.ptr() + (n * d.c + begin) * m, count * m, y.ptr() + n * count * m);
  }
  return y;
}

template <class T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits) {
  const Dims5 d = dims5(logits, "softmax input");
  BasicTensor<T> p(logits.shape());
  const int64_t m = d.spatial();
  std::vector<double> e(static_cast<size_t>(d.c));
  for (int64_t n = 0; n < d.n; ++n) {
    const T* src = logits.ptr() + n * d.c * m;
    T* dst = p.ptr() + n * d.c * m;
    for (int64_t v = 0; v < m; ++v) {
      double mx = src[v];
      for (int64_t c = 1; c < d.c; ++c) mx = std::max<double>(mx, src[c * m + v]);
      double z = 0.0;
      for (int64_t c = 0; c < d.c; ++c) {
        e[c] = std::exp(static_cast<double>(src[c * m + v]) - mx);
        z += e[c];
      }
      for (int64_t c = 0; c < d.c; ++c) dst[c * m + v] = static_cast<T>(e[c] / z);
    }
  }
  return p;
}

template <class T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs, const BasicTensor<T>& dprobs) {
  require_same_shape(probs, dprobs, "softmax backward");
  const Dims5 d = dims5(probs, "softmax output");
  BasicTensor<T> dl(probs.shape());
  const int64_t m = d.spatial();
  for (int64_t n = 0; n < d.n; ++n) {
    const T* p = probs.ptr() + n * d.c * m;
    const T* g = dprobs.ptr() + n * d.c * m;
    T* out = dl.ptr() + n * d.c * m;
    for (int64_t v = 0; v < m; ++v) {
      double dot = 0.0;
      for (int64_t c = 0; c < d.c; ++c) dot += static_cast<double>(p[c * m + v]) * g[c * m + v];
      for (int64_t c = 0; c < d.c; ++c) out[c * m + v] = static_cast<T>(p[c * m + v] * (g[c * m + v] - dot));
    }
  }
  return dl;
}

namespace {

void check_labels(const std::vector<int32_t>& labels, const Dims5& d) {
  if (static_cast<int64_t>(labels.size()) != d.n * d.spatial()) {
    throw InvalidInput("label count " + std::to_string(labels.size()) + " does not match " +
                       std::to_string(d.n * d.spatial()) + " voxels");
  }
  for (auto l : labels) {
    if (l < 0 || l >= d.c) throw InvalidInput("label " + std::to_string(l) + " outside [0, " + std::to_string(d.c) + ")");
  }
}

}  // namespace

template <class T>
BasicTensor<T> one_hot(const std::vector<int32_t>& labels, const Shape& logits_shape) {
  BasicTensor<T> y(logits_shape);
  const Dims5 d = dims5(y, "one_hot target");
  check_labels(labels, d);
  const int64_t m = d.spatial();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t v = 0; v < m; ++v) y[(n * d.c + labels[n * m + v]) * m + v] = T{1};
  return y;
}

template <class T>
double soft_dice_loss(const BasicTensor<T>& probs, const BasicTensor<T>& onehot, double smooth) {
  require_same_shape(probs, onehot, "soft_dice_loss");
  const Dims5 d = dims5(probs, "soft_dice_loss input");
  if (d.c < 2) throw InvalidInput("soft_dice_loss needs at least 2 classes");
  const int64_t m = d.spatial();
  double total = 0.0;
  for (int64_t c = 1; c < d.c; ++c) {
    double inter = 0.0, sp = 0.0, sy = 0.0;
    for (int64_t n = 0; n < d.n; ++n) {
      const T* p = probs.ptr() + (n * d.c + c) * m;
      const T* y = onehot.ptr() + (n * d.c + c) * m;
      for (int64_t v = 0; v < m; ++v) {
        inter += static_cast<double>(p[v]) * y[v];
        sp += p[v];
        sy += y[v];
      }
    }
    total += (2.0 * inter + smooth) / (sp + sy + smooth);
  }
  return 1.0 - total / static_cast<double>(d.c - 1);
}

template <class T>
BasicTensor<T> soft_dice_loss_backward(const BasicTensor<T>& probs, const BasicTensor<T>& onehot,
                                       double smooth, double upstream) {
  require_same_shape(probs, onehot, "soft_dice_loss");
  const Dims5 d = dims5(probs, "soft_dice_loss input");
  BasicTensor<T> dp(probs.shape());
  const int64_t m = d.spatial();
  const double scale = -upstream / static_cast<double>(d.c - 1);
  for (int64_t c = 1; c < d.c; ++c) {
    double inter = 0.0, sp = 0.0, sy = 0.0;
    for (int64_t n = 0; n < d.n; ++n) {
      const T* p = probs.ptr() + (n * d.c + c) * m;
      const T* y = onehot.ptr() + (n * d.c + c) * m;
      for (int64_t v = 0; v < m; ++v) {
        inter += static_cast<double>(p[v]) * y[v];
        sp += p[v];
        sy += y[v];
      }
    }
    const double num = 2.0 * inter + smooth;
    const double den = sp + sy + smooth;
    for (int64_t n = 0; n < d.n; ++n) {
      const T* y = onehot.ptr() + (n * d.c + c) * m;
      T* g = dp.ptr() + (n * d.c + c) * m;
      for (int64_t v = 0; v < m; ++v) g[v] = static_cast<T>(scale * (2.0 * y[v] * den - num) / (den * den));
    }
  }
  return dp;
}

template <class T>
double cross_entropy(const BasicTensor<T>& logits, const std::vector<int32_t>& labels) {
  const Dims5 d = dims5(logits, "cross_entropy input");
  check_labels(labels, d);
  const int64_t m = d.spatial();
  double total = 0.0;
  for (int64_t n = 0; n < d.n; ++n) {
    const T* src = logits.ptr() + n * d.c * m;
    for (int64_t v = 0; v < m; ++v) {
      double mx = src[v];
      for (int64_t c = 1; c < d.c; ++c) mx = std::max<double>(mx, src[c * m + v]);
      double z = 0.0;
      for (int64_t c = 0; c < d.c; ++c) z += std::exp(static_cast<double>(src[c * m + v]) - mx);
      total += mx + std::log(z) - src[labels[n * m + v] * m + v];
    }
  }
  return total / static_cast<double>(d.n * m);
}

template <class T>
BasicTensor<T> cross_entropy_backward(const BasicTensor<T>& logits, const std::vector<int32_t>& labels,
                                      double upstream) {
  const Dims5 d = dims5(logits, "cross_entropy input");
  check_labels(labels, d);
  BasicTensor<T> g = softmax_channels(logits);
  const int64_t m = d.spatial();
  const double scale = upstream / static_cast<double>(d.n * m);
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t v = 0; v < m; ++v) g[(n * d.c + labels[n * m + v]) * m + v] -= T{1};
  }
  for (auto& v : g.data()) v = static_cast<T>(v * scale);
  return g;
}

#define STUNET_INSTANTIATE(T)                                                                               \
  template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>*,       \
                                 Triple, Triple);                                                          \
  template Conv3dGrads<T> conv3d_backward(const BasicTensor<T>&, const BasicTensor<T>&, bool,               \
                                          const BasicTensor<T>&, Triple, Triple);                          \
  template BasicTensor<T> transpose_conv3d(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                           const BasicTensor<T>*, Triple);                                  \
  template Conv3dGrads<T> transpose_conv3d_backward(const BasicTensor<T>&, const BasicTensor<T>&, bool,     \
                                                    const BasicTensor<T>&, Triple);                        \
  template NormForward<T> instance_norm(const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                        const BasicTensor<T>&, double);                                    \
  template NormGrads<T> instance_norm_backward(const NormForward<T>&, const BasicTensor<T>&,                \
                                               const BasicTensor<T>&);                                     \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, double);                                       \
  template BasicTensor<T> leaky_relu_backward(const BasicTensor<T>&, const BasicTensor<T>&, double);       \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> upsample_nearest(const BasicTensor<T>&, Triple);                                 \
  template BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>&, Triple);                        \
  template BasicTensor<T> upsample_trilinear(const BasicTensor<T>&, Triple);                               \
  template BasicTensor<T> upsample_trilinear_backward(const BasicTensor<T>&, const Shape&, Triple);        \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, int64_t, int64_t);                         \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                                         \
  template BasicTensor<T> softmax_channels_backward(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> one_hot(const std::vector<int32_t>&, const Shape&);                              \
  template double soft_dice_loss(const BasicTensor<T>&, const BasicTensor<T>&, double);                    \
  template BasicTensor<T> soft_dice_loss_backward(const BasicTensor<T>&, const BasicTensor<T>&, double,    \
                                                  double);                                                 \
  template double cross_entropy(const BasicTensor<T>&, const std::vector<int32_t>&);                       \
  template BasicTensor<T> cross_entropy_backward(const BasicTensor<T>&, const std::vector<int32_t>&, double);

STUNET_INSTANTIATE(float)
STUNET_INSTANTIATE(double)

#undef STUNET_INSTANTIATE

}  // namespace stunet::kernels
