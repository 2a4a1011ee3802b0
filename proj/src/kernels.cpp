#include "txsp/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace txsp::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// im2col scratch is capped at this many scalars; output rows are processed in
// blocks that fit.
constexpr std::size_t kColBudget = std::size_t{1} << 22;

struct ConvGeom {
  int cin, h, w;
  int cout, kh, kw;
  int stride, top, left;
  int oh, ow;
  int k() const { return cin * kh * kw; }
};

ConvGeom geometry(const Shape& x, const Shape& ws, const ConvSpec& spec) {
  require_nonempty(x, "conv2d");
  require_nonempty(ws, "conv2d");
  require(ws.c == x.c, "conv2d: filter expects " + std::to_string(ws.c) + " input channels, got " +
                           x.str());
  require(spec.stride >= 1, "conv2d: stride must be >= 1");
  const auto& p = spec.padding;
  require(p.top >= 0 && p.bottom >= 0 && p.left >= 0 && p.right >= 0,
          "conv2d: negative padding");
  ConvGeom g{};
  g.cin = x.c;
  g.h = x.h;
  g.w = x.w;
  g.cout = ws.n;
  g.kh = ws.h;
  g.kw = ws.w;
  g.stride = spec.stride;
  g.top = p.top;
  g.left = p.left;
  g.oh = conv_out_extent(x.h, p.top, p.bottom, ws.h, spec.stride);
  g.ow = conv_out_extent(x.w, p.left, p.right, ws.w, spec.stride);
  return g;
}

int rows_per_block(const ConvGeom& g) {
  const std::size_t per_row = static_cast<std::size_t>(g.k()) * g.ow;
  const std::size_t rows = std::max<std::size_t>(1, kColBudget / std::max<std::size_t>(per_row, 1));
  return static_cast<int>(std::min<std::size_t>(rows, g.oh));
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, int r0, int r1, T* col) {
  const std::size_t pcount = static_cast<std::size_t>(r1 - r0) * g.ow;
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* src = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* dst = col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * pcount;
        for (int oy = r0; oy < r1; ++oy) {
          T* d = dst + static_cast<std::size_t>(oy - r0) * g.ow;
          const int iy = oy * g.stride - g.top + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(d, d + g.ow, T(0));
            continue;
          }
          const T* row = src + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.left + kx;
            d[ox] = (ix >= 0 && ix < g.w) ? row[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, int r0, int r1, T* dx) {
  const std::size_t pcount = static_cast<std::size_t>(r1 - r0) * g.ow;
  for (int ci = 0; ci < g.cin; ++ci) {
    T* dst = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* s = col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * pcount;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * g.stride - g.top + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* srow = s + static_cast<std::size_t>(oy - r0) * g.ow;
          T* row = dst + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.left + kx;
            if (ix >= 0 && ix < g.w) row[ix] += srow[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void scale_planes(Tensor<T>& t, const std::vector<double>& ratio) {
  const std::size_t plane = t.shape().plane();
  const std::size_t planes = static_cast<std::size_t>(t.n()) * t.c();
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    T* d = t.ptr() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) d[i] = static_cast<T>(d[i] * ratio[i]);
  }
}

template <typename T>
void add_channel_bias(Tensor<T>& t, const Tensor<T>& bias) {
  require(static_cast<int>(bias.size()) == t.c(), "bias length " + std::to_string(bias.size()) +
                                                      " does not match " + std::to_string(t.c()) +
                                                      " channels");
  const std::size_t plane = t.shape().plane();
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c) {
      T* d = t.plane(n, c);
      const T b = bias[c];
      for (std::size_t i = 0; i < plane; ++i) d[i] += b;
    }
}

struct Tap {
  int i0, i1;
  double f;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    taps[d] = {i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

}  // namespace

int conv_out_extent(int in, int pad_lo, int pad_hi, int k, int stride) {
  const int padded = in + pad_lo + pad_hi;
  if (k < 1 || padded < k)
    throw ShapeError("kernel extent " + std::to_string(k) + " does not fit padded input " +
                     std::to_string(padded));
  return (padded - k) / stride + 1;
}

std::vector<double> partial_ratio(int in_h, int in_w, int kh, int kw, const ConvSpec& spec) {
  const auto& p = spec.padding;
  const int oh = conv_out_extent(in_h, p.top, p.bottom, kh, spec.stride);
  const int ow = conv_out_extent(in_w, p.left, p.right, kw, spec.stride);
  std::vector<double> ratio(static_cast<std::size_t>(oh) * ow, 1.0);
  if (p.kind != PaddingMode::Kind::PartialZero) return ratio;
  auto inside = [](int start, int k, int extent) {
    const int lo = std::max(start, 0);
    const int hi = std::min(start + k, extent);
    return std::max(hi - lo, 0);
  };
  for (int oy = 0; oy < oh; ++oy) {
    const int cy = inside(oy * spec.stride - p.top, kh, in_h);
    for (int ox = 0; ox < ow; ++ox) {
      const int cx = inside(ox * spec.stride - p.left, kw, in_w);
      const int valid = cy * cx;
      ratio[static_cast<std::size_t>(oy) * ow + ox] =
          valid == 0 ? 0.0 : static_cast<double>(kh * kw) / valid;
    }
  }
  return ratio;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias,
                 const ConvSpec& spec) {
  const ConvGeom g = geometry(x.shape(), w.shape(), spec);
  Tensor<T> y(Shape{x.n(), g.cout, g.oh, g.ow});
  const int block = rows_per_block(g);
  const int nblocks = (g.oh + block - 1) / block;
  const int tasks = x.n() * nblocks;
  const Eigen::Map<const RowMat<T>> wm(w.ptr(), g.cout, g.k());
  const std::size_t in_item = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(g.oh) * g.ow;

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(g.k()) * block * g.ow);
#pragma omp for schedule(static)
    for (int t = 0; t < tasks; ++t) {
      const int n = t / nblocks;
      const int r0 = (t % nblocks) * block;
      const int r1 = std::min(g.oh, r0 + block);
      const Eigen::Index pcount = static_cast<Eigen::Index>(r1 - r0) * g.ow;
      im2col(x.ptr() + n * in_item, g, r0, r1, col.data());
      const Eigen::Map<const RowMat<T>> cm(col.data(), g.k(), pcount);
      StridedMap<T> ym(y.plane(n, 0) + static_cast<std::size_t>(r0) * g.ow, g.cout, pcount,
                       Eigen::OuterStride<>(out_plane));
      ym.noalias() = wm * cm;
    }
  }
  if (spec.padding.kind == PaddingMode::Kind::PartialZero)
    scale_planes(y, partial_ratio(g.h, g.w, g.kh, g.kw, spec));
  if (bias) add_channel_bias(y, *bias);
  return y;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gout, const Tensor<T>& w, const Shape& x_shape,
                                const ConvSpec& spec) {
  const ConvGeom g = geometry(x_shape, w.shape(), spec);
  require(gout.shape() == (Shape{x_shape.n, g.cout, g.oh, g.ow}),
          "conv2d backward: upstream gradient " + gout.shape().str());
  Tensor<T> gs = gout;
  if (spec.padding.kind == PaddingMode::Kind::PartialZero)
    scale_planes(gs, partial_ratio(g.h, g.w, g.kh, g.kw, spec));

  Tensor<T> dx(x_shape);
  const int block = rows_per_block(g);
  const int nblocks = (g.oh + block - 1) / block;
  const Eigen::Map<const RowMat<T>> wm(w.ptr(), g.cout, g.k());
  const std::size_t in_item = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(g.oh) * g.ow;

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(g.k()) * block * g.ow);
#pragma omp for schedule(static)
    for (int n = 0; n < x_shape.n; ++n) {
      for (int b = 0; b < nblocks; ++b) {
        const int r0 = b * block;
        const int r1 = std::min(g.oh, r0 + block);
        const Eigen::Index pcount = static_cast<Eigen::Index>(r1 - r0) * g.ow;
        ConstStridedMap<T> gm(gs.plane(n, 0) + static_cast<std::size_t>(r0) * g.ow, g.cout,
                              pcount, Eigen::OuterStride<>(out_plane));
        Eigen::Map<RowMat<T>> cm(col.data(), g.k(), pcount);
        cm.noalias() = wm.transpose() * gm;
        col2im_add(col.data(), g, r0, r1, dx.ptr() + n * in_item);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> conv2d_backward_filter(const Tensor<T>& gout, const Tensor<T>& x, const Shape& w_shape,
                                 const ConvSpec& spec) {
  const ConvGeom g = geometry(x.shape(), w_shape, spec);
  require(gout.shape() == (Shape{x.n(), g.cout, g.oh, g.ow}),
          "conv2d backward: upstream gradient " + gout.shape().str());
  Tensor<T> gs = gout;
  if (spec.padding.kind == PaddingMode::Kind::PartialZero)
    scale_planes(gs, partial_ratio(g.h, g.w, g.kh, g.kw, spec));

  Tensor<T> dw(w_shape);
  Eigen::Map<RowMat<T>> dwm(dw.ptr(), g.cout, g.k());
  const int block = rows_per_block(g);
  const int nblocks = (g.oh + block - 1) / block;
  const std::size_t in_item = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(g.oh) * g.ow;
  std::vector<T> col(static_cast<std::size_t>(g.k()) * block * g.ow);
  for (int n = 0; n < x.n(); ++n) {
    for (int b = 0; b < nblocks; ++b) {
      const int r0 = b * block;
      const int r1 = std::min(g.oh, r0 + block);
      const Eigen::Index pcount = static_cast<Eigen::Index>(r1 - r0) * g.ow;
      im2col(x.ptr() + n * in_item, g, r0, r1, col.data());
      const Eigen::Map<const RowMat<T>> cm(col.data(), g.k(), pcount);
      ConstStridedMap<T> gm(gs.plane(n, 0) + static_cast<std::size_t>(r0) * g.ow, g.cout, pcount,
                            Eigen::OuterStride<>(out_plane));
      dwm.noalias() += gm * cm.transpose();
    }
  }
  return dw;
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& gout) {
  Tensor<T> out(Shape{1, gout.c(), 1, 1});
  const std::size_t plane = gout.shape().plane();
  for (int c = 0; c < gout.c(); ++c) {
    double acc = 0;
    for (int n = 0; n < gout.n(); ++n) {
      const T* d = gout.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) acc += d[i];
    }
    out[c] = static_cast<T>(acc);
  }
  return out;
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias) {
  require_nonempty(x.shape(), "transposed_conv2d");
  require_nonempty(w.shape(), "transposed_conv2d");
  require(w.n() == x.c(), "transposed_conv2d: filter expects " + std::to_string(w.n()) +
                              " input channels, got " + x.shape().str());
  const int cin = x.c(), cout = w.c(), kh = w.h(), kw = w.w();
  if (bias)
    require(static_cast<int>(bias->size()) == cout, "transposed_conv2d: bias length mismatch");
  const int oh = x.h() + kh - 1, ow = x.w() + kw - 1;
  Tensor<T> y(Shape{x.n(), cout, oh, ow});
  const int planes = x.n() * cout;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(oh) * ow);
#pragma omp for schedule(static)
    for (int p = 0; p < planes; ++p) {
      const int n = p / cout, co = p % cout;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ci = 0; ci < cin; ++ci) {
        const T* src = x.plane(n, ci);
        const T* filt = w.plane(ci, co);
        // One axpy of a whole input row per tap keeps the inner loop contiguous.
        for (int di = 0; di < kh; ++di)
          for (int dj = 0; dj < kw; ++dj) {
            const double f = filt[di * kw + dj];
            if (f == 0.0) continue;
            for (int a = 0; a < x.h(); ++a) {
              double* out = acc.data() + static_cast<std::size_t>(a + di) * ow + dj;
              const T* row = src + static_cast<std::size_t>(a) * x.w();
              for (int b = 0; b < x.w(); ++b) out[b] += f * row[b];
            }
          }
      }
      const double bv = bias ? static_cast<double>((*bias)[co]) : 0.0;
      T* dst = y.plane(n, co);
      for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i] + bv);
    }
  }
  return y;
}

template <typename T>
Tensor<T> transposed_conv2d_backward_filter(const Tensor<T>& gout, const Tensor<T>& x,
                                            const Shape& w_shape) {
  const int cin = w_shape.n, cout = w_shape.c, kh = w_shape.h, kw = w_shape.w;
  require(x.c() == cin && gout.c() == cout && gout.n() == x.n() &&
              gout.h() == x.h() + kh - 1 && gout.w() == x.w() + kw - 1,
          "transposed_conv2d backward: shape mismatch");
  Tensor<T> dw(w_shape);
  const int pairs = cin * cout;
  const int gw = gout.w();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < pairs; ++p) {
    const int ci = p / cout, co = p % cout;
    T* dst = dw.plane(ci, co);
    for (int di = 0; di < kh; ++di) {
      for (int dj = 0; dj < kw; ++dj) {
        double acc = 0;
        for (int n = 0; n < x.n(); ++n) {
          const T* src = x.plane(n, ci);
          const T* g = gout.plane(n, co);
          for (int a = 0; a < x.h(); ++a) {
            const T* grow = g + static_cast<std::size_t>(a + di) * gw + dj;
            const T* srow = src + static_cast<std::size_t>(a) * x.w();
            for (int b = 0; b < x.w(); ++b) acc += double(srow[b]) * grow[b];
          }
        }
        dst[di * kw + dj] = static_cast<T>(acc);
      }
    }
  }
  return dw;
}

template <typename T>
Tensor<T> batched_transposed_conv(const Tensor<T>& input, const Tensor<T>& filters) {
  require_nonempty(input.shape(), "batched_transposed_conv");
  require_nonempty(filters.shape(), "batched_transposed_conv");
  require(input.c() == 1, "batched_transposed_conv: input map must have one channel, got " +
                              input.shape().str());
  require(input.n() == filters.n(), "batched_transposed_conv: batch mismatch " +
                                        input.shape().str() + " vs " + filters.shape().str());
  const int c = filters.c(), kh = filters.h(), kw = filters.w();
  const int hi = input.h(), wi = input.w();
  const int oh = hi + kh - 1, ow = wi + kw - 1;
  Tensor<T> y(Shape{input.n(), c, oh, ow});
  const int planes = input.n() * c;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(oh) * ow);
#pragma omp for schedule(static)
    for (int p = 0; p < planes; ++p) {
      const int n = p / c, ch = p % c;
      std::fill(acc.begin(), acc.end(), 0.0);
      const T* s = input.plane(n, 0);
      const T* f = filters.plane(n, ch);
      for (int a = 0; a < hi; ++a) {
        for (int b = 0; b < wi; ++b) {
          const double v = s[a * wi + b];
          if (v == 0.0) continue;
          for (int di = 0; di < kh; ++di) {
            double* out = acc.data() + static_cast<std::size_t>(a + di) * ow + b;
            const T* frow = f + di * kw;
            for (int dj = 0; dj < kw; ++dj) out[dj] += v * frow[dj];
          }
        }
      }
      T* dst = y.plane(n, ch);
      for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
    }
  }
  return y;
}

template <typename T>
Tensor<T> batched_transposed_conv_backward_input(const Tensor<T>& gout, const Tensor<T>& filters,
                                                 const Shape& input_shape) {
  const int c = filters.c(), kh = filters.h(), kw = filters.w();
  const int hi = input_shape.h, wi = input_shape.w;
  require(gout.n() == input_shape.n && gout.c() == c && gout.h() == hi + kh - 1 &&
              gout.w() == wi + kw - 1,
          "batched_transposed_conv backward: shape mismatch");
  Tensor<T> ds(input_shape);
  const int ow = gout.w();
  const int rows = input_shape.n * hi;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int n = r / hi, a = r % hi;
    for (int b = 0; b < wi; ++b) {
      double acc = 0;
      for (int ch = 0; ch < c; ++ch) {
        const T* g = gout.plane(n, ch);
        const T* f = filters.plane(n, ch);
        for (int di = 0; di < kh; ++di) {
          const T* grow = g + static_cast<std::size_t>(a + di) * ow + b;
          const T* frow = f + di * kw;
          for (int dj = 0; dj < kw; ++dj) acc += double(grow[dj]) * frow[dj];
        }
      }
      ds(n, 0, a, b) = static_cast<T>(acc);
    }
  }
  return ds;
}

template <typename T>
Tensor<T> batched_transposed_conv_backward_filter(const Tensor<T>& gout, const Tensor<T>& input,
                                                  const Shape& filter_shape) {
  const int c = filter_shape.c, kh = filter_shape.h, kw = filter_shape.w;
  const int hi = input.h(), wi = input.w();
  require(gout.n() == input.n() && gout.c() == c && gout.h() == hi + kh - 1 &&
              gout.w() == wi + kw - 1 && filter_shape.n == input.n(),
          "batched_transposed_conv backward: shape mismatch");
  Tensor<T> df(filter_shape);
  const int ow = gout.w();
  const int planes = input.n() * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int n = p / c, ch = p % c;
    const T* s = input.plane(n, 0);
    const T* g = gout.plane(n, ch);
    T* dst = df.plane(n, ch);
    for (int di = 0; di < kh; ++di) {
      for (int dj = 0; dj < kw; ++dj) {
        double acc = 0;
        for (int a = 0; a < hi; ++a) {
          const T* grow = g + static_cast<std::size_t>(a + di) * ow + dj;
          const T* srow = s + static_cast<std::size_t>(a) * wi;
          for (int b = 0; b < wi; ++b) acc += double(srow[b]) * grow[b];
        }
        dst[di * kw + dj] = static_cast<T>(acc);
      }
    }
  }
  return df;
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w) {
  require_nonempty(x.shape(), "bilinear_upsample");
  require(out_h >= 1 && out_w >= 1, "bilinear_upsample: target size must be positive");
  const auto ty = bilinear_taps(x.h(), out_h);
  const auto tx = bilinear_taps(x.w(), out_w);
  Tensor<T> y(Shape{x.n(), x.c(), out_h, out_w});
  const int planes = x.n() * x.c();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* src = x.ptr() + static_cast<std::size_t>(p) * x.shape().plane();
    T* dst = y.ptr() + static_cast<std::size_t>(p) * y.shape().plane();
    for (int oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      const T* r0 = src + static_cast<std::size_t>(a.i0) * x.w();
      const T* r1 = src + static_cast<std::size_t>(a.i1) * x.w();
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[ox];
        const double top = r0[b.i0] + (double(r0[b.i1]) - r0[b.i0]) * b.f;
        const double bot = r1[b.i0] + (double(r1[b.i1]) - r1[b.i0]) * b.f;
        dst[static_cast<std::size_t>(oy) * out_w + ox] = static_cast<T>(top + (bot - top) * a.f);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& gout, const Shape& in_shape) {
  require(gout.n() == in_shape.n && gout.c() == in_shape.c,
          "bilinear_upsample backward: shape mismatch");
  const auto ty = bilinear_taps(in_shape.h, gout.h());
  const auto tx = bilinear_taps(in_shape.w, gout.w());
  Tensor<T> dx(in_shape);
  const int planes = in_shape.n * in_shape.c;
#pragma omp parallel
  {
    std::vector<double> acc(in_shape.plane());
#pragma omp for schedule(static)
    for (int p = 0; p < planes; ++p) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const T* g = gout.ptr() + static_cast<std::size_t>(p) * gout.shape().plane();
      for (int oy = 0; oy < gout.h(); ++oy) {
        const Tap& a = ty[oy];
        for (int ox = 0; ox < gout.w(); ++ox) {
          const Tap& b = tx[ox];
          const double v = g[static_cast<std::size_t>(oy) * gout.w() + ox];
          const double wy0 = 1.0 - a.f, wx0 = 1.0 - b.f;
          acc[a.i0 * in_shape.w + b.i0] += v * wy0 * wx0;
          acc[a.i0 * in_shape.w + b.i1] += v * wy0 * b.f;
          acc[a.i1 * in_shape.w + b.i0] += v * a.f * wx0;
          acc[a.i1 * in_shape.w + b.i1] += v * a.f * b.f;
        }
      }
      T* dst = dx.ptr() + static_cast<std::size_t>(p) * in_shape.plane();
      for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> avg_pool_global(const Tensor<T>& x) {
  require_nonempty(x.shape(), "avg_pool_global");
  Tensor<T> y(Shape{x.n(), x.c(), 1, 1});
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* d = x.plane(n, c);
      double acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += d[i];
      y(n, c, 0, 0) = static_cast<T>(acc / plane);
    }
  return y;
}

template <typename T>
BatchNormResult<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              Tensor<T>& running_mean, Tensor<T>& running_var,
                              const BatchNormOptions& opt) {
  require_nonempty(x.shape(), "batch_norm");
  const int C = x.c();
  require(static_cast<int>(gamma.size()) == C && static_cast<int>(beta.size()) == C &&
              static_cast<int>(running_mean.size()) == C &&
              static_cast<int>(running_var.size()) == C,
          "batch_norm: parameter length does not match " + std::to_string(C) + " channels");
  const std::size_t plane = x.shape().plane();
  const std::size_t m = static_cast<std::size_t>(x.n()) * plane;
  if (opt.train && m < 2)
    throw DegenerateBatchError("batch_norm: need at least 2 values per channel in train mode, got " +
                               std::to_string(m));

  BatchNormResult<T> r{Tensor<T>(x.shape()), std::vector<double>(C), std::vector<double>(C)};
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (opt.train) {
      double s = 0;
      for (int n = 0; n < x.n(); ++n) {
        const T* d = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) s += d[i];
      }
      mean = s / m;
      double ss = 0;
      for (int n = 0; n < x.n(); ++n) {
        const T* d = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) ss += (d[i] - mean) * (d[i] - mean);
      }
      var = ss / m;
      running_mean[c] = static_cast<T>((1 - opt.momentum) * running_mean[c] + opt.momentum * mean);
      running_var[c] = static_cast<T>((1 - opt.momentum) * running_var[c] +
                                      opt.momentum * var * m / (m - 1));
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double invstd = 1.0 / std::sqrt(var + opt.eps);
    r.mean[c] = mean;
    r.invstd[c] = invstd;
    const double g = gamma[c], b = beta[c];
    for (int n = 0; n < x.n(); ++n) {
      const T* d = x.plane(n, c);
      T* o = r.y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i)
        o[i] = static_cast<T>((d[i] - mean) * invstd * g + b);
    }
  }
  return r;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < T(0) ? T(0) : x[i];  // NaN passes through
  return y;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < T(0) ? x[i] * slope : x[i];
  return y;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, int top, int left, int ch, int cw) {
  require(ch >= 1 && cw >= 1 && top >= 0 && left >= 0 && top + ch <= x.h() && left + cw <= x.w(),
          "crop " + std::to_string(ch) + "x" + std::to_string(cw) + " at (" +
              std::to_string(top) + "," + std::to_string(left) + ") exceeds " + x.shape().str());
  Tensor<T> y(Shape{x.n(), x.c(), ch, cw});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < ch; ++i) {
        const T* src = x.plane(n, c) + static_cast<std::size_t>(top + i) * x.w() + left;
        std::copy(src, src + cw, y.plane(n, c) + static_cast<std::size_t>(i) * cw);
      }
  return y;
}

template <typename T>
Tensor<T> center_crop(const Tensor<T>& x, int ch, int cw) {
  require(ch <= x.h() && cw <= x.w(), "center_crop: crop larger than input " + x.shape().str());
  return crop(x, (x.h() - ch) / 2, (x.w() - cw) / 2, ch, cw);
}

CropAnchor random_anchor(int h, int w, int ch, int cw, std::mt19937_64& rng) {
  require(ch >= 1 && cw >= 1 && ch <= h && cw <= w, "random_crop: crop larger than input");
  std::uniform_int_distribution<int> dy(0, h - ch);
  std::uniform_int_distribution<int> dx(0, w - cw);
  CropAnchor a;
  a.top = dy(rng);
  a.left = dx(rng);
  return a;
}

template <typename T>
std::pair<Tensor<T>, CropAnchor> random_crop(const Tensor<T>& x, int ch, int cw,
                                             std::mt19937_64& rng) {
  const CropAnchor a = random_anchor(x.h(), x.w(), ch, cw, rng);
  return {crop(x, a.top, a.left, ch, cw), a};
}

#define TXSP_INSTANTIATE(T)                                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,                 \
                            const ConvSpec&);                                                     \
  template Tensor<T> conv2d_backward_input(const Tensor<T>&, const Tensor<T>&, const Shape&,     \
                                           const ConvSpec&);                                     \
  template Tensor<T> conv2d_backward_filter(const Tensor<T>&, const Tensor<T>&, const Shape&,    \
                                            const ConvSpec&);                                    \
  template Tensor<T> channel_sum(const Tensor<T>&);                                              \
  template Tensor<T> transposed_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);    \
  template Tensor<T> transposed_conv2d_backward_filter(const Tensor<T>&, const Tensor<T>&,       \
                                                       const Shape&);                            \
  template Tensor<T> batched_transposed_conv(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> batched_transposed_conv_backward_input(const Tensor<T>&, const Tensor<T>&,  \
                                                            const Shape&);                       \
  template Tensor<T> batched_transposed_conv_backward_filter(const Tensor<T>&, const Tensor<T>&, \
                                                             const Shape&);                      \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int, int);                              \
  template Tensor<T> bilinear_upsample_backward(const Tensor<T>&, const Shape&);                 \
  template Tensor<T> avg_pool_global(const Tensor<T>&);                                          \
  template BatchNormResult<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                         Tensor<T>&, Tensor<T>&, const BatchNormOptions&);       \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                            \
  template Tensor<T> crop(const Tensor<T>&, int, int, int, int);                                 \
  template Tensor<T> center_crop(const Tensor<T>&, int, int);                                    \
  template std::pair<Tensor<T>, CropAnchor> random_crop(const Tensor<T>&, int, int,              \
                                                        std::mt19937_64&);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp::kernels
