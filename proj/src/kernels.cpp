#include "akid/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace akid::kernels {

namespace {

void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got shape " +
                     t.shape().to_string());
  }
}

void require_same_dtype(const Tensor& a, const Tensor& b, std::string_view what) {
  if (a.dtype() != b.dtype()) {
    throw Error(std::string(what) + ": mixed element types " + to_string(a.dtype()) + " and " + to_string(b.dtype()));
  }
}

struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, cout, sh, sw;
  AxisGeometry gh, gw;
  std::size_t rows() const { return n * gh.out * gw.out; }
  std::size_t patch() const { return kh * kw * cin; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& kernel, std::size_t sh, std::size_t sw, Padding padding) {
  ConvGeometry g{};
  g.n = x[0];
  g.h = x[1];
  g.w = x[2];
  g.cin = x[3];
  g.kh = kernel[0];
  g.kw = kernel[1];
  g.cout = kernel[3];
  g.sh = sh;
  g.sw = sw;
  if (kernel[2] != g.cin) {
    throw ShapeError("conv2d: axis 3 (channels) of input " + x.to_string() + " is " + std::to_string(g.cin) +
                     " but kernel " + kernel.to_string() + " expects " + std::to_string(kernel[2]));
  }
  g.gh = axis_geometry(g.h, g.kh, sh, padding, "height");
  g.gw = axis_geometry(g.w, g.kw, sw, padding, "width");
  return g;
}

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t patch = g.patch();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.gh.out; ++oh) {
      for (std::size_t ow = 0; ow < g.gw.out; ++ow) {
        T* row = col + ((n * g.gh.out + oh) * g.gw.out + ow) * patch;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) - static_cast<std::ptrdiff_t>(g.gh.pad_lead);
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) - static_cast<std::ptrdiff_t>(g.gw.pad_lead);
            T* dst = row + (ki * g.kw + kj) * g.cin;
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.h) || iw >= static_cast<std::ptrdiff_t>(g.w)) {
              std::fill(dst, dst + g.cin, T{0});
            } else {
              const T* src = x + ((n * g.h + static_cast<std::size_t>(ih)) * g.w + static_cast<std::size_t>(iw)) * g.cin;
              std::memcpy(dst, src, g.cin * sizeof(T));
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.gh.out; ++oh) {
      for (std::size_t ow = 0; ow < g.gw.out; ++ow) {
        const T* row = col + ((n * g.gh.out + oh) * g.gw.out + ow) * patch;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) - static_cast<std::ptrdiff_t>(g.gh.pad_lead);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) - static_cast<std::ptrdiff_t>(g.gw.pad_lead);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const T* src = row + (ki * g.kw + kj) * g.cin;
            T* dst = dx + ((n * g.h + static_cast<std::size_t>(ih)) * g.w + static_cast<std::size_t>(iw)) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

std::size_t channels_of(const Tensor& x, std::string_view what) {
  if (x.rank() == 0) throw ShapeError(std::string(what) + " needs at least rank 1, got a scalar");
  return x.shape()[x.rank() - 1];
}

}  // namespace

Padding parse_padding(std::string_view text) {
  if (text == "SAME" || text == "same") return Padding::same;
  if (text == "VALID" || text == "valid") return Padding::valid;
  throw ConfigError("unknown padding \"" + std::string(text) + "\" (expected SAME or VALID)");
}

const char* to_string(Padding padding) { return padding == Padding::same ? "SAME" : "VALID"; }

AxisGeometry axis_geometry(std::size_t in, std::size_t k, std::size_t stride, Padding padding, std::string_view axis) {
  if (stride == 0) throw ConfigError("stride on " + std::string(axis) + " axis must be >= 1");
  if (k == 0) throw ConfigError("window on " + std::string(axis) + " axis must be >= 1");
  AxisGeometry g;
  if (padding == Padding::same) {
    g.out = (in + stride - 1) / stride;
    const std::size_t needed = (g.out - 1) * stride + k;
    const std::size_t total = needed > in ? needed - in : 0;
    g.pad_lead = total / 2;
    g.pad_trail = total - g.pad_lead;
  } else {
    if (k > in) {
      throw ShapeError("window " + std::to_string(k) + " larger than input " + std::to_string(in) + " on " +
                       std::string(axis) + " axis");
    }
    g.out = (in - k) / stride + 1;
  }
  return g;
}

// ---------------------------------------------------------------- gemm

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = c + i * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p];
      const T v1 = a0[k + p];
      const T v2 = a0[2 * k + p];
      const T v3 = a0[3 * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v = ai[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += v * brow[j];
    }
  }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, T{0});
  for (std::size_t r = 0; r < m; ++r) {
    const T* ar = a + r * k;
    const T* br = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T v = ar[p];
      if (v == T{0}) continue;
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += v * br[j];
    }
  }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  // Transpose B[K,N] once so the inner loop streams contiguous rows.
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  }
  gemm_nn(m, k, n, a, bt.data(), c, accumulate);
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);

// ---------------------------------------------------------------- conv2d

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride_h, std::size_t stride_w,
              Padding padding) {
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  require_rank(bias, 1, "conv2d bias");
  require_same_dtype(x, kernel, "conv2d");
  require_same_dtype(x, bias, "conv2d");
  const ConvGeometry g = conv_geometry(x.shape(), kernel.shape(), stride_h, stride_w, padding);
  if (bias.shape()[0] != g.cout) {
    throw ShapeError("conv2d: bias " + bias.shape().to_string() + " does not match kernel axis 3 (" +
                     std::to_string(g.cout) + ")");
  }
  Tensor out(Shape{g.n, g.gh.out, g.gw.out, g.cout}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> col(g.rows() * g.patch());
    im2col(x.data<T>().data(), g, col.data());
    T* y = out.data<T>().data();
    const T* b = bias.data<T>().data();
    for (std::size_t r = 0; r < g.rows(); ++r) std::copy(b, b + g.cout, y + r * g.cout);
    gemm_nn(g.rows(), g.cout, g.patch(), col.data(), kernel.data<T>().data(), y, true);
  });
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy, std::size_t stride_h,
                            std::size_t stride_w, Padding padding) {
  const ConvGeometry g = conv_geometry(x.shape(), kernel.shape(), stride_h, stride_w, padding);
  const Shape expected{g.n, g.gh.out, g.gw.out, g.cout};
  if (dy.shape() != expected) {
    throw ShapeError("conv2d backward: upstream " + dy.shape().to_string() + " != output " + expected.to_string());
  }
  Conv2dGrads grads{Tensor(x.shape(), x.dtype()), Tensor(kernel.shape(), x.dtype()), Tensor(Shape{g.cout}, x.dtype())};
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* dyp = dy.data<T>().data();
    std::vector<T> col(g.rows() * g.patch());
    im2col(x.data<T>().data(), g, col.data());
    gemm_tn(g.rows(), g.cout, g.patch(), col.data(), dyp, grads.dkernel.template data<T>().data(), false);
    T* db = grads.dbias.template data<T>().data();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cout; ++c) db[c] += dyp[r * g.cout + c];
    }
    gemm_nt(g.rows(), g.cout, g.patch(), dyp, kernel.data<T>().data(), col.data(), false);
    col2im(col.data(), g, grads.dx.template data<T>().data());
  });
  return grads;
}

// ---------------------------------------------------------------- pooling

MaxPoolResult maxpool2d(const Tensor& x, const Window2d& window) {
  require_rank(x, 4, "maxpool2d input");
  const std::size_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  const AxisGeometry gh = axis_geometry(h, window.kh, window.sh, window.padding, "height");
  const AxisGeometry gw = axis_geometry(w, window.kw, window.sw, window.padding, "width");
  MaxPoolResult result{Tensor(Shape{n, gh.out, gw.out, c}, x.dtype()), {}};
  result.argmax.resize(result.out.numel());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>().data();
    T* yp = result.out.template data<T>().data();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oh = 0; oh < gh.out; ++oh) {
        for (std::size_t ow = 0; ow < gw.out; ++ow) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_index = 0;
            bool found = false;
            for (std::size_t ki = 0; ki < window.kh; ++ki) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * window.sh + ki) - static_cast<std::ptrdiff_t>(gh.pad_lead);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kj = 0; kj < window.kw; ++kj) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * window.sw + kj) - static_cast<std::ptrdiff_t>(gw.pad_lead);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                const std::size_t idx = ((b * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)) * c + ch;
                if (!found || xp[idx] > best) {
                  best = xp[idx];
                  best_index = idx;
                  found = true;
                }
              }
            }
            const std::size_t out_idx = ((b * gh.out + oh) * gw.out + ow) * c + ch;
            yp[out_idx] = best;
            result.argmax[out_idx] = best_index;
          }
        }
      }
    }
  });
  return result;
}

Tensor maxpool2d_backward(const Shape& x_shape, const std::vector<std::size_t>& argmax, const Tensor& dy) {
  if (argmax.size() != dy.numel()) throw ShapeError("maxpool2d backward: upstream size does not match forward output");
  Tensor dx(x_shape, dy.dtype());
  dispatch(dy.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto g = dy.data<T>();
    auto d = dx.data<T>();
    for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += g[i];
  });
  return dx;
}

// ---------------------------------------------------------------- activations

Tensor relu(const Tensor& x) {
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] > T{0} ? in[i] : T{0};
  });
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (x.shape() != dy.shape()) throw ShapeError("relu backward: upstream shape mismatch");
  Tensor dx(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    const auto g = dy.data<T>();
    auto d = dx.data<T>();
    for (std::size_t i = 0; i < in.size(); ++i) d[i] = in[i] > T{0} ? g[i] : T{0};
  });
  return dx;
}

MaxoutResult maxout(const Tensor& x, std::size_t group_size) {
  const std::size_t c = channels_of(x, "maxout");
  if (group_size == 0 || c % group_size != 0) {
    throw ConfigError("maxout: group_size " + std::to_string(group_size) + " does not divide channel count " +
                      std::to_string(c));
  }
  auto extents = x.shape().extents();
  extents.back() = c / group_size;
  MaxoutResult result{Tensor(Shape(extents), x.dtype()), {}};
  result.argmax.resize(result.out.numel());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    auto y = result.out.template data<T>();
    for (std::size_t o = 0; o < y.size(); ++o) {
      const std::size_t base = o * group_size;
      std::size_t best = base;
      for (std::size_t j = 1; j < group_size; ++j) {
        if (in[base + j] > in[best]) best = base + j;
      }
      y[o] = in[best];
      result.argmax[o] = best;
    }
  });
  return result;
}

Tensor maxout_backward(const Shape& x_shape, const std::vector<std::size_t>& argmax, const Tensor& dy) {
  return maxpool2d_backward(x_shape, argmax, dy);
}

// ---------------------------------------------------------------- inner product

Tensor inner_product(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "inner_product weight");
  require_rank(bias, 1, "inner_product bias");
  require_same_dtype(x, weight, "inner_product");
  if (x.rank() < 1) throw ShapeError("inner_product input must have a batch axis");
  const std::size_t n = x.shape()[0];
  const std::size_t d = x.numel() / n;
  const std::size_t k = weight.shape()[1];
  if (weight.shape()[0] != d) {
    throw ShapeError("inner_product: flattened input width " + std::to_string(d) + " (from " + x.shape().to_string() +
                     ") does not match weight axis 0 of " + weight.shape().to_string());
  }
  if (bias.shape()[0] != k) throw ShapeError("inner_product: bias " + bias.shape().to_string() + " != output width");
  Tensor out(Shape{n, k}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* y = out.data<T>().data();
    const T* b = bias.data<T>().data();
    for (std::size_t r = 0; r < n; ++r) std::copy(b, b + k, y + r * k);
    gemm_nn(n, k, d, x.data<T>().data(), weight.data<T>().data(), y, true);
  });
  return out;
}

InnerProductGrads inner_product_backward(const Tensor& x, const Tensor& weight, const Tensor& dy) {
  const std::size_t n = x.shape()[0];
  const std::size_t d = x.numel() / n;
  const std::size_t k = weight.shape()[1];
  if (dy.shape() != Shape{n, k}) throw ShapeError("inner_product backward: upstream shape mismatch");
  InnerProductGrads grads{Tensor(x.shape(), x.dtype()), Tensor(weight.shape(), x.dtype()), Tensor(Shape{k}, x.dtype())};
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* g = dy.data<T>().data();
    gemm_tn(n, k, d, x.data<T>().data(), g, grads.dweight.template data<T>().data(), false);
    gemm_nt(n, k, d, g, weight.data<T>().data(), grads.dx.template data<T>().data(), false);
    T* db = grads.dbias.template data<T>().data();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < k; ++c) db[c] += g[r * k + c];
    }
  });
  return grads;
}

// ---------------------------------------------------------------- batch norm

BatchNormTrainResult batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon) {
  const std::size_t c = channels_of(x, "batch_norm");
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("batch_norm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  const std::size_t rows = x.numel() / c;
  BatchNormTrainResult r{Tensor(x.shape(), x.dtype()), Tensor(Shape{c}, x.dtype()), Tensor(Shape{c}, x.dtype()),
                         Tensor(x.shape(), x.dtype()), Tensor(Shape{c}, x.dtype())};
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    const auto gm = gamma.data<T>();
    const auto bt = beta.data<T>();
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += in[i * c + ch];
    }
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double dev = in[i * c + ch] - mean[ch];
        var[ch] += dev * dev;
      }
    }
    for (auto& v : var) v /= static_cast<double>(rows);
    auto xhat = r.xhat.template data<T>();
    auto out = r.out.template data<T>();
    for (std::size_t ch = 0; ch < c; ++ch) {
      r.mean.set(ch, mean[ch]);
      r.var.set(ch, var[ch]);
      r.inv_std.set(ch, 1.0 / std::sqrt(var[ch] + epsilon));
    }
    const auto inv = r.inv_std.template data<T>();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t idx = i * c + ch;
        xhat[idx] = static_cast<T>((in[idx] - mean[ch]) * inv[ch]);
        out[idx] = gm[ch] * xhat[idx] + bt[ch];
      }
    }
  });
  return r;
}

Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                            const Tensor& running_var, double epsilon) {
  const std::size_t c = channels_of(x, "batch_norm");
  const std::size_t rows = x.numel() / c;
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    auto y = out.data<T>();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(running_var.at(ch) + epsilon);
      const double mu = running_mean.at(ch);
      const double g = gamma.at(ch), b = beta.at(ch);
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t idx = i * c + ch;
        y[idx] = static_cast<T>(g * (in[idx] - mu) * inv + b);
      }
    }
  });
  return out;
}

BatchNormGrads batch_norm_backward(const Tensor& xhat, const Tensor& inv_std, const Tensor& gamma, const Tensor& dy) {
  const std::size_t c = channels_of(xhat, "batch_norm");
  const std::size_t rows = xhat.numel() / c;
  BatchNormGrads g{Tensor(xhat.shape(), xhat.dtype()), Tensor(Shape{c}, xhat.dtype()), Tensor(Shape{c}, xhat.dtype())};
  dispatch(xhat.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto xh = xhat.data<T>();
    const auto up = dy.data<T>();
    const auto gm = gamma.data<T>();
    const auto inv = inv_std.data<T>();
    std::vector<double> sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0), dgamma(c, 0.0), dbeta(c, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t idx = i * c + ch;
        const double dxh = static_cast<double>(up[idx]) * gm[ch];
        sum_dxhat[ch] += dxh;
        sum_dxhat_xhat[ch] += dxh * xh[idx];
        dgamma[ch] += static_cast<double>(up[idx]) * xh[idx];
        dbeta[ch] += up[idx];
      }
    }
    auto dx = g.dx.template data<T>();
    const double count = static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t idx = i * c + ch;
        const double dxh = static_cast<double>(up[idx]) * gm[ch];
        dx[idx] = static_cast<T>(inv[ch] / count * (count * dxh - sum_dxhat[ch] - xh[idx] * sum_dxhat_xhat[ch]));
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      g.dgamma.set(ch, dgamma[ch]);
      g.dbeta.set(ch, dbeta[ch]);
    }
  });
  return g;
}

Tensor moving_average(const Tensor& running, const Tensor& batch, double momentum) {
  if (running.shape() != batch.shape()) throw ShapeError("moving_average: shape mismatch");
  Tensor out(running.shape(), running.dtype());
  for (std::size_t i = 0; i < running.numel(); ++i) {
    out.set(i, momentum * running.at(i) + (1.0 - momentum) * batch.at(i));
  }
  return out;
}

// ---------------------------------------------------------------- dropout

DropoutResult dropout(const Tensor& x, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError("dropout keep_prob must be in (0, 1], got " + std::to_string(keep_prob));
  }
  if (keep_prob == 1.0) return {x, Tensor::full(x.shape(), 1.0, x.dtype())};
  DropoutResult r{Tensor(x.shape(), x.dtype()), Tensor(x.shape(), x.dtype())};
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto in = x.data<T>();
    auto out = r.out.template data<T>();
    auto mask = r.mask.template data<T>();
    const T kept = static_cast<T>(1.0 / keep_prob);
    for (std::size_t i = 0; i < in.size(); ++i) {
      mask[i] = rng.bernoulli(keep_prob) ? kept : T{0};
      out[i] = in[i] * mask[i];
    }
  });
  return r;
}

// ---------------------------------------------------------------- softmax xent

SoftmaxXentResult softmax_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  SoftmaxXentResult r;
  r.probabilities = Tensor(logits.shape(), logits.dtype());
  r.predictions.resize(n);
  double total = 0.0;
  std::size_t correct = 0;
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto z = logits.data<T>();
    auto p = r.probabilities.template data<T>();
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t label = labels[i];
      if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                         std::to_string(k) + ")");
      }
      const T* row = z.data() + i * k;
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (row[j] > row[arg]) arg = j;
      }
      const double max = row[arg];
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - max);
      const double log_denom = std::log(denom);
      for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<T>(std::exp(row[j] - max - log_denom));
      total += log_denom - (static_cast<double>(row[static_cast<std::size_t>(label)]) - max);
      r.predictions[i] = arg;
      if (arg == static_cast<std::size_t>(label)) ++correct;
    }
  });
  r.loss = total / static_cast<double>(n);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return r;
}

Tensor softmax_cross_entropy_backward(const Tensor& probabilities, const std::vector<std::int64_t>& labels,
                                      double upstream) {
  const std::size_t n = probabilities.shape()[0];
  const std::size_t k = probabilities.shape()[1];
  Tensor dz(probabilities.shape(), probabilities.dtype());
  dispatch(probabilities.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto p = probabilities.data<T>();
    auto d = dz.data<T>();
    const double factor = upstream / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double target = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
        d[i * k + j] = static_cast<T>((p[i * k + j] - target) * factor);
      }
    }
  });
  return dz;
}

std::vector<std::int64_t> labels_from_tensor(const Tensor& labels) {
  std::vector<std::int64_t> out(labels.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int64_t>(std::llround(labels.at(i)));
  return out;
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + a.shape().to_string() + " and " + b.shape().to_string() + " differ");
  }
  require_same_dtype(a, b, "add");
  Tensor out = a;
  accumulate(out, b);
  return out;
}

void accumulate(Tensor& acc, const Tensor& x) {
  if (acc.shape() != x.shape()) {
    throw ShapeError("accumulate: shapes " + acc.shape().to_string() + " and " + x.shape().to_string() + " differ");
  }
  dispatch(acc.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = acc.data<T>();
    const auto src = x.data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto src = x.data<T>();
    auto dst = out.data<T>();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i] * factor);
  });
  return out;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("multiply: shape mismatch");
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto x = a.data<T>();
    const auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * y[i];
  });
  return out;
}

double sum(const Tensor& x) {
  return dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double s = 0.0;
    for (T v : x.data<T>()) s += v;
    return s;
  });
}

double sum_squares(const Tensor& x) {
  return dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double s = 0.0;
    for (T v : x.data<T>()) s += static_cast<double>(v) * v;
    return s;
  });
}

}  // namespace akid::kernels
