#include "txsp/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace txsp::ad {

using detail::accumulate;
using detail::Node;
using detail::record;

namespace {

template <typename T>
Tensor<T> scalar_tensor(double v) {
  return Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(v));
}

template <typename T>
double scalar_of(const Tensor<T>& g) {
  return static_cast<double>(g[0]);
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " +
                                      b.shape().str());
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return record<T>("add", std::move(y), {a, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], Tensor<T>(self.grad));
    accumulate(*self.inputs[1], Tensor<T>(self.grad));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " +
                                      b.shape().str());
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return record<T>("mul", std::move(y), {a, b}, [](Node<T>& self) {
    Node<T>& an = *self.inputs[0];
    Node<T>& bn = *self.inputs[1];
    if (an.tape) {
      Tensor<T> g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= bn.value[i];
      accumulate(an, std::move(g));
    }
    if (bn.tape) {
      Tensor<T> g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= an.value[i];
      accumulate(bn, std::move(g));
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch " + a.shape().str() + " vs " +
                                      b.shape().str());
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return record<T>("sub", std::move(y), {a, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], Tensor<T>(self.grad));
    if (self.inputs[1]->tape) {
      Tensor<T> g = self.grad;
      for (auto& v : g.data()) v = -v;
      accumulate(*self.inputs[1], std::move(g));
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  Tensor<T> y = a.value();
  for (auto& v : y.data()) v = static_cast<T>(v * s);
  return record<T>("scale", std::move(y), {a}, [s](Node<T>& self) {
    Tensor<T> g = self.grad;
    for (auto& v : g.data()) v = static_cast<T>(v * s);
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double s) {
  Tensor<T> y = a.value();
  for (auto& v : y.data()) v = static_cast<T>(v + s);
  return record<T>("add_scalar", std::move(y), {a}, [](Node<T>& self) {
    accumulate(*self.inputs[0], Tensor<T>(self.grad));
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data()) v = v * v;
  return record<T>("square", std::move(y), {a}, [](Node<T>& self) {
    const Tensor<T>& x = self.inputs[0]->value;
    Tensor<T> g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T(2) * x[i];
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double acc = 0;
  for (T v : a.value().data()) acc += v;
  return record<T>("sum", scalar_tensor<T>(acc), {a}, [](Node<T>& self) {
    accumulate(*self.inputs[0], Tensor<T>(self.inputs[0]->value.shape(), self.grad[0]));
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  require_nonempty(a.shape(), "mean");
  double acc = 0;
  for (T v : a.value().data()) acc += v;
  const double count = static_cast<double>(a.value().size());
  return record<T>("mean", scalar_tensor<T>(acc / count), {a}, [count](Node<T>& self) {
    accumulate(*self.inputs[0], Tensor<T>(self.inputs[0]->value.shape(),
                                          static_cast<T>(scalar_of(self.grad) / count)));
  });
}

template <typename T>
Var<T> abs_sum(const Var<T>& a) {
  double acc = 0;
  for (T v : a.value().data()) acc += std::abs(double(v));
  return record<T>("abs_sum", scalar_tensor<T>(acc), {a}, [](Node<T>& self) {
    const Tensor<T>& x = self.inputs[0]->value;
    const T g0 = self.grad[0];
    Tensor<T> g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      g[i] = x[i] > T(0) ? g0 : (x[i] < T(0) ? -g0 : T(0));
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return record<T>("relu", kernels::relu(x.value()), {x}, [](Node<T>& self) {
    const Tensor<T>& in = self.inputs[0]->value;
    Tensor<T> g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(in[i] > T(0))) g[i] = T(0);
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  const T s = static_cast<T>(slope);
  return record<T>("leaky_relu", kernels::leaky_relu(x.value(), s), {x}, [s](Node<T>& self) {
    const Tensor<T>& in = self.inputs[0]->value;
    Tensor<T> g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(in[i] > T(0))) g[i] *= s;
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::type_identity_t<const std::optional<Var<T>>&> bias,
              const ConvSpec& spec) {
  Tensor<T> y = kernels::conv2d(x.value(), w.value(), bias ? &bias->value() : nullptr, spec);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return record<T>("conv2d", std::move(y), std::move(inputs), [spec](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    Node<T>& wn = *self.inputs[1];
    if (xn.tape)
      accumulate(xn, kernels::conv2d_backward_input(self.grad, wn.value, xn.value.shape(), spec));
    if (wn.tape)
      accumulate(wn, kernels::conv2d_backward_filter(self.grad, xn.value, wn.value.shape(), spec));
    if (self.inputs.size() > 2 && self.inputs[2]->tape) {
      Node<T>& bn = *self.inputs[2];
      accumulate(bn, kernels::channel_sum(self.grad).reshaped(bn.value.shape()));
    }
  });
}

template <typename T>
Var<T> transposed_conv2d(const Var<T>& x, const Var<T>& w, std::type_identity_t<const std::optional<Var<T>>&> bias) {
  Tensor<T> y = kernels::transposed_conv2d(x.value(), w.value(), bias ? &bias->value() : nullptr);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return record<T>("transposed_conv2d", std::move(y), std::move(inputs), [](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    Node<T>& wn = *self.inputs[1];
    // Adjoint of a stride-1 transposed conv is the valid cross-correlation
    // with the same filter read as [Cin, Cout, Kh, Kw] -> conv layout.
    if (xn.tape) accumulate(xn, kernels::conv2d(self.grad, wn.value, nullptr, ConvSpec{}));
    if (wn.tape)
      accumulate(wn, kernels::transposed_conv2d_backward_filter(self.grad, xn.value,
                                                                wn.value.shape()));
    if (self.inputs.size() > 2 && self.inputs[2]->tape) {
      Node<T>& bn = *self.inputs[2];
      accumulate(bn, kernels::channel_sum(self.grad).reshaped(bn.value.shape()));
    }
  });
}

template <typename T>
Var<T> batched_transposed_conv(const Var<T>& input, const Var<T>& filters) {
  Tensor<T> y = kernels::batched_transposed_conv(input.value(), filters.value());
  return record<T>("batched_transposed_conv", std::move(y), {input, filters}, [](Node<T>& self) {
    Node<T>& sn = *self.inputs[0];
    Node<T>& fn = *self.inputs[1];
    if (sn.tape)
      accumulate(sn, kernels::batched_transposed_conv_backward_input(self.grad, fn.value,
                                                                     sn.value.shape()));
    if (fn.tape)
      accumulate(fn, kernels::batched_transposed_conv_backward_filter(self.grad, sn.value,
                                                                      fn.value.shape()));
  });
}

template <typename T>
Var<T> bilinear_upsample(const Var<T>& x, int out_h, int out_w) {
  return record<T>("bilinear_upsample", kernels::bilinear_upsample(x.value(), out_h, out_w), {x},
                   [](Node<T>& self) {
                     Node<T>& xn = *self.inputs[0];
                     accumulate(xn, kernels::bilinear_upsample_backward(self.grad,
                                                                        xn.value.shape()));
                   });
}

template <typename T>
Var<T> avg_pool_global(const Var<T>& x) {
  return record<T>("avg_pool_global", kernels::avg_pool_global(x.value()), {x},
                   [](Node<T>& self) {
                     Node<T>& xn = *self.inputs[0];
                     const Shape s = xn.value.shape();
                     const double inv = 1.0 / static_cast<double>(s.plane());
                     Tensor<T> g(s);
                     for (int n = 0; n < s.n; ++n)
                       for (int c = 0; c < s.c; ++c) {
                         const T v = static_cast<T>(self.grad(n, c, 0, 0) * inv);
                         T* d = g.plane(n, c);
                         std::fill(d, d + s.plane(), v);
                       }
                     accumulate(xn, std::move(g));
                   });
}

template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  const Shape xs = x.shape(), bs = b.shape();
  require(bs.c == xs.c && bs.h == 1 && bs.w == 1 && (bs.n == 1 || bs.n == xs.n),
          "add_channel_bias: bias " + bs.str() + " does not broadcast to " + xs.str());
  Tensor<T> y = x.value();
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const T v = b.value()(bs.n == 1 ? 0 : n, c, 0, 0);
      T* d = y.plane(n, c);
      for (std::size_t i = 0; i < xs.plane(); ++i) d[i] += v;
    }
  return record<T>("add_channel_bias", std::move(y), {x, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], Tensor<T>(self.grad));
    Node<T>& bn = *self.inputs[1];
    if (!bn.tape) return;
    const Shape gs = self.grad.shape();
    const Shape bs = bn.value.shape();
    std::vector<double> acc(bs.count(), 0.0);
    for (int n = 0; n < gs.n; ++n)
      for (int c = 0; c < gs.c; ++c) {
        const T* d = self.grad.plane(n, c);
        double s = 0;
        for (std::size_t i = 0; i < gs.plane(); ++i) s += d[i];
        acc[(bs.n == 1 ? 0 : n) * bs.c + c] += s;
      }
    Tensor<T> g(bs);
    for (std::size_t i = 0; i < acc.size(); ++i) g[i] = static_cast<T>(acc[i]);
    accumulate(bn, std::move(g));
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var,
                  const kernels::BatchNormOptions& opt) {
  auto r = kernels::batch_norm(x.value(), gamma.value(), beta.value(), running_mean, running_var,
                               opt);
  const bool train = opt.train;
  return record<T>(
      "batch_norm", std::move(r.y), {x, gamma, beta},
      [train, mean = std::move(r.mean), invstd = std::move(r.invstd)](Node<T>& self) {
        Node<T>& xn = *self.inputs[0];
        Node<T>& gn = *self.inputs[1];
        Node<T>& bn = *self.inputs[2];
        const Tensor<T>& xv = xn.value;
        const Shape s = xv.shape();
        const std::size_t plane = s.plane();
        const double m = static_cast<double>(s.n) * plane;
        Tensor<T> dx(s), dgamma(gn.value.shape()), dbeta(bn.value.shape());
        for (int c = 0; c < s.c; ++c) {
          double sum_g = 0, sum_gx = 0;
          for (int n = 0; n < s.n; ++n) {
            const T* g = self.grad.plane(n, c);
            const T* xp = xv.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
              const double xhat = (xp[i] - mean[c]) * invstd[c];
              sum_g += g[i];
              sum_gx += g[i] * xhat;
            }
          }
          dgamma[c] = static_cast<T>(sum_gx);
          dbeta[c] = static_cast<T>(sum_g);
          const double gam = gn.value[c];
          for (int n = 0; n < s.n; ++n) {
            const T* g = self.grad.plane(n, c);
            const T* xp = xv.plane(n, c);
            T* d = dx.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
              if (train) {
                const double xhat = (xp[i] - mean[c]) * invstd[c];
                d[i] = static_cast<T>(gam * invstd[c] / m * (m * g[i] - sum_g - xhat * sum_gx));
              } else {
                d[i] = static_cast<T>(g[i] * gam * invstd[c]);
              }
            }
          }
        }
        accumulate(xn, std::move(dx));
        accumulate(gn, std::move(dgamma));
        accumulate(bn, std::move(dbeta));
      });
}

template <typename T>
Var<T> crop(const Var<T>& x, int top, int left, int ch, int cw) {
  return record<T>("crop", kernels::crop(x.value(), top, left, ch, cw), {x},
                   [top, left](Node<T>& self) {
                     Node<T>& xn = *self.inputs[0];
                     const Shape gs = self.grad.shape();
                     Tensor<T> g(xn.value.shape());
                     for (int n = 0; n < gs.n; ++n)
                       for (int c = 0; c < gs.c; ++c)
                         for (int i = 0; i < gs.h; ++i)
                           for (int j = 0; j < gs.w; ++j)
                             g(n, c, top + i, left + j) = self.grad(n, c, i, j);
                     accumulate(xn, std::move(g));
                   });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape as = a.shape(), bs = b.shape();
  require(as.n == bs.n && as.h == bs.h && as.w == bs.w,
          "concat_channels: " + as.str() + " vs " + bs.str());
  Tensor<T> y(Shape{as.n, as.c + bs.c, as.h, as.w});
  const std::size_t plane = as.plane();
  for (int n = 0; n < as.n; ++n) {
    std::copy(a.value().plane(n, 0), a.value().plane(n, 0) + as.c * plane, y.plane(n, 0));
    std::copy(b.value().plane(n, 0), b.value().plane(n, 0) + bs.c * plane, y.plane(n, as.c));
  }
  return record<T>("concat_channels", std::move(y), {a, b}, [](Node<T>& self) {
    Node<T>& an = *self.inputs[0];
    Node<T>& bn = *self.inputs[1];
    const Shape as = an.value.shape(), bs = bn.value.shape();
    const std::size_t plane = as.plane();
    Tensor<T> ga(as), gb(bs);
    for (int n = 0; n < as.n; ++n) {
      const T* g = self.grad.plane(n, 0);
      std::copy(g, g + as.c * plane, ga.plane(n, 0));
      std::copy(g + as.c * plane, g + (as.c + bs.c) * plane, gb.plane(n, 0));
    }
    accumulate(an, std::move(ga));
    accumulate(bn, std::move(gb));
  });
}

template <typename T>
Var<T> concat_batch(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_batch: no inputs");
  const Shape first = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s.c == first.c && s.h == first.h && s.w == first.w,
            "concat_batch: " + s.str() + " vs " + first.str());
    total += s.n;
  }
  Tensor<T> y(Shape{total, first.c, first.h, first.w});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().ptr(), p.value().ptr() + p.value().size(), y.ptr() + off);
    off += p.value().size();
  }
  return record<T>("concat_batch", std::move(y), parts, [](Node<T>& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      Tensor<T> g(in->value.shape());
      std::copy(self.grad.ptr() + off, self.grad.ptr() + off + g.size(), g.ptr());
      off += g.size();
      accumulate(*in, std::move(g));
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  return record<T>("reshape", x.value().reshaped(shape), {x}, [](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    accumulate(xn, self.grad.reshaped(xn.value.shape()));
  });
}

template <typename T>
Var<T> gram(const Var<T>& x) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Shape s = x.shape();
  require_nonempty(s, "gram");
  const auto hw = static_cast<Eigen::Index>(s.plane());
  Tensor<T> g(Shape{s.n, 1, s.c, s.c});
  for (int n = 0; n < s.n; ++n) {
    Eigen::Map<const Mat> xm(x.value().plane(n, 0), s.c, hw);
    Eigen::Map<Mat> gm(g.plane(n, 0), s.c, s.c);
    gm.noalias() = xm * xm.transpose();
  }
  return record<T>("gram", std::move(g), {x}, [](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    const Shape s = xn.value.shape();
    const auto hw = static_cast<Eigen::Index>(s.plane());
    Tensor<T> dx(s);
    for (int n = 0; n < s.n; ++n) {
      Eigen::Map<const Mat> xm(xn.value.plane(n, 0), s.c, hw);
      Eigen::Map<const Mat> dg(self.grad.plane(n, 0), s.c, s.c);
      Eigen::Map<Mat> dxm(dx.plane(n, 0), s.c, hw);
      const Mat sym = dg + dg.transpose();
      dxm.noalias() = sym * xm;
    }
    accumulate(xn, std::move(dx));
  });
}

#define TXSP_INSTANTIATE(T)                                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                            \
  template Var<T> scale(const Var<T>&, double);                                                 \
  template Var<T> add_scalar(const Var<T>&, double);                                            \
  template Var<T> square(const Var<T>&);                                                        \
  template Var<T> sum(const Var<T>&);                                                           \
  template Var<T> mean(const Var<T>&);                                                          \
  template Var<T> abs_sum(const Var<T>&);                                                       \
  template Var<T> relu(const Var<T>&);                                                          \
  template Var<T> leaky_relu(const Var<T>&, double);                                            \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&,            \
                         const ConvSpec&);                                                      \
  template Var<T> transposed_conv2d(const Var<T>&, const Var<T>&,                               \
                                    const std::optional<Var<T>>&);                              \
  template Var<T> batched_transposed_conv(const Var<T>&, const Var<T>&);                        \
  template Var<T> bilinear_upsample(const Var<T>&, int, int);                                   \
  template Var<T> avg_pool_global(const Var<T>&);                                               \
  template Var<T> add_channel_bias(const Var<T>&, const Var<T>&);                               \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&,           \
                             Tensor<T>&, const kernels::BatchNormOptions&);                     \
  template Var<T> crop(const Var<T>&, int, int, int, int);                                      \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                \
  template Var<T> concat_batch(const std::vector<Var<T>>&);                                     \
  template Var<T> reshape(const Var<T>&, Shape);                                                \
  template Var<T> gram(const Var<T>&);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp::ad
