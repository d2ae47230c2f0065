#include <algorithm>
#include <stdexcept>

#include "dense/tensor.hpp"

namespace dense {
namespace {

// Eight independent partial sums: keeps the reduction order fixed while
// letting the compiler vectorize it.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  T tail{0};
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
T total(const T* a, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l];
  }
  T tail{0};
  for (; i < n; ++i) tail += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

struct SpatialLayout {
  bool batched = true;
  std::size_t batch = 1;
  std::size_t channels = 0;
  std::vector<std::size_t> size;  // spatial extents
  std::size_t plane = 1;          // product of spatial extents
};

// Interprets x as [N, C, S...] (batched) or [C, S...] with d spatial axes.
template <typename T>
SpatialLayout spatial_layout(const BasicTensor<T>& x, std::size_t d, const char* op) {
  SpatialLayout l;
  if (x.rank() == d + 2) {
    l.batch = x.dim(0);
  } else if (x.rank() == d + 1) {
    l.batched = false;
  } else {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(d + 1) +
                                " or " + std::to_string(d + 2) + " input, got " +
                                shape_str(x.shape()));
  }
  const std::size_t off = l.batched ? 1 : 0;
  l.channels = x.dim(off);
  for (std::size_t a = 0; a < d; ++a) {
    l.size.push_back(x.dim(off + 1 + a));
    l.plane *= l.size.back();
  }
  return l;
}

Shape layout_shape(const SpatialLayout& l, std::size_t channels,
                   const std::vector<std::size_t>& size) {
  Shape s;
  if (l.batched) s.push_back(l.batch);
  s.push_back(channels);
  s.insert(s.end(), size.begin(), size.end());
  return s;
}

// Per output plane position: flat source position, or -1 for a hole.
template <typename T>
BasicTensor<T> gather_planes(const BasicTensor<T>& x, const SpatialLayout& l,
                             const std::vector<std::size_t>& out_size,
                             std::vector<std::ptrdiff_t> src, const BasicTensor<T>* fill) {
  const std::size_t out_plane = src.size();
  const std::size_t planes = l.batch * l.channels;
  const T fill_value = fill ? fill->data()[0] : T{0};
  std::vector<T> out(planes * out_plane);
  auto xd = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = xd.data() + p * l.plane;
    T* o = out.data() + p * out_plane;
    for (std::size_t j = 0; j < out_plane; ++j) o[j] = src[j] >= 0 ? in[src[j]] : fill_value;
  }
  std::vector<BasicTensor<T>> inputs{x};
  if (fill) inputs.push_back(*fill);
  const std::size_t in_plane = l.plane;
  return BasicTensor<T>::from_op(
      layout_shape(l, l.channels, out_size), std::move(out), std::move(inputs),
      [src = std::move(src), planes, in_plane, out_plane](detail::Node<T>& self) {
        const auto& xn = self.inputs[0];
        if (xn->requires_grad) {
          auto& g = xn->grad_buffer();
          for (std::size_t p = 0; p < planes; ++p) {
            T* gi = g.data() + p * in_plane;
            const T* go = self.grad.data() + p * out_plane;
            for (std::size_t j = 0; j < out_plane; ++j) {
              if (src[j] >= 0) gi[src[j]] += go[j];
            }
          }
        }
        if (self.inputs.size() > 1 && self.inputs[1]->requires_grad) {
          T acc{0};
          for (std::size_t p = 0; p < planes; ++p) {
            const T* go = self.grad.data() + p * out_plane;
            for (std::size_t j = 0; j < out_plane; ++j) {
              if (src[j] < 0) acc += go[j];
            }
          }
          self.inputs[1]->grad_buffer()[0] += acc;
        }
      });
}

// Row-major flat index maps from per-axis maps (-1 marks a hole on that axis).
std::vector<std::ptrdiff_t> combine_axes(const std::vector<std::vector<std::ptrdiff_t>>& maps,
                                         const std::vector<std::size_t>& in_size) {
  std::vector<std::ptrdiff_t> flat{0};
  for (std::size_t a = 0; a < maps.size(); ++a) {
    std::vector<std::ptrdiff_t> next;
    next.reserve(flat.size() * maps[a].size());
    for (auto base : flat) {
      for (auto idx : maps[a]) {
        next.push_back(base < 0 || idx < 0
                           ? -1
                           : base * static_cast<std::ptrdiff_t>(in_size[a]) + idx);
      }
    }
    flat = std::move(next);
  }
  return flat;
}

template <typename T>
void conv1d_forward(const T* x, const T* w, const T* b, T* y, std::size_t batch, std::size_t ci_n,
                    std::size_t co_n, std::size_t len, std::size_t k) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto S = static_cast<std::ptrdiff_t>(len);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < co_n; ++co) {
      T* yr = y + (n * co_n + co) * len;
      std::fill(yr, yr + len, b[co]);
      for (std::size_t ci = 0; ci < ci_n; ++ci) {
        const T* xr = x + (n * ci_n + ci) * len;
        const T* wr = w + (co * ci_n + ci) * k;
        for (std::size_t t = 0; t < k; ++t) {
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - pad;
          const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t hi = std::min(S, S - off);
          if (hi > lo) axpy(wr[t], xr + lo + off, yr + lo, static_cast<std::size_t>(hi - lo));
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, std::size_t batch,
                     std::size_t ci_n, std::size_t co_n, std::size_t len, std::size_t k) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto S = static_cast<std::ptrdiff_t>(len);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < co_n; ++co) {
      const T* gyr = gy + (n * co_n + co) * len;
      for (std::size_t ci = 0; ci < ci_n; ++ci) {
        const T* xr = x + (n * ci_n + ci) * len;
        const T* wr = w + (co * ci_n + ci) * k;
        T* gxr = gx ? gx + (n * ci_n + ci) * len : nullptr;
        T* gwr = gw ? gw + (co * ci_n + ci) * k : nullptr;
        for (std::size_t t = 0; t < k; ++t) {
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - pad;
          const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t hi = std::min(S, S - off);
          if (hi <= lo) continue;
          const auto m = static_cast<std::size_t>(hi - lo);
          if (gxr) axpy(wr[t], gyr + lo, gxr + lo + off, m);
          if (gwr) gwr[t] += dot(gyr + lo, xr + lo + off, m);
        }
      }
    }
  }
}

// 2-D variant; loops rows so the inner kernels stay contiguous.
template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y, std::size_t batch, std::size_t ci_n,
                    std::size_t co_n, std::size_t rows, std::size_t cols, std::size_t k) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto R = static_cast<std::ptrdiff_t>(rows);
  const auto C = static_cast<std::ptrdiff_t>(cols);
  const std::size_t plane = rows * cols;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < co_n; ++co) {
      T* yp = y + (n * co_n + co) * plane;
      std::fill(yp, yp + plane, b[co]);
      for (std::size_t ci = 0; ci < ci_n; ++ci) {
        const T* xp = x + (n * ci_n + ci) * plane;
        const T* wp = w + (co * ci_n + ci) * k * k;
        for (std::size_t tr = 0; tr < k; ++tr) {
          const std::ptrdiff_t offr = static_cast<std::ptrdiff_t>(tr) - pad;
          const std::ptrdiff_t r_lo = std::max<std::ptrdiff_t>(0, -offr);
          const std::ptrdiff_t r_hi = std::min(R, R - offr);
          for (std::size_t tc = 0; tc < k; ++tc) {
            const std::ptrdiff_t offc = static_cast<std::ptrdiff_t>(tc) - pad;
            const std::ptrdiff_t c_lo = std::max<std::ptrdiff_t>(0, -offc);
            const std::ptrdiff_t c_hi = std::min(C, C - offc);
            if (c_hi <= c_lo) continue;
            const T wv = wp[tr * k + tc];
            for (std::ptrdiff_t r = r_lo; r < r_hi; ++r) {
              axpy(wv, xp + (r + offr) * C + c_lo + offc, yp + r * C + c_lo,
                   static_cast<std::size_t>(c_hi - c_lo));
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, std::size_t batch,
                     std::size_t ci_n, std::size_t co_n, std::size_t rows, std::size_t cols,
                     std::size_t k) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto R = static_cast<std::ptrdiff_t>(rows);
  const auto C = static_cast<std::ptrdiff_t>(cols);
  const std::size_t plane = rows * cols;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < co_n; ++co) {
      const T* gyp = gy + (n * co_n + co) * plane;
      for (std::size_t ci = 0; ci < ci_n; ++ci) {
        const T* xp = x + (n * ci_n + ci) * plane;
        const T* wp = w + (co * ci_n + ci) * k * k;
        T* gxp = gx ? gx + (n * ci_n + ci) * plane : nullptr;
        T* gwp = gw ? gw + (co * ci_n + ci) * k * k : nullptr;
        for (std::size_t tr = 0; tr < k; ++tr) {
          const std::ptrdiff_t offr = static_cast<std::ptrdiff_t>(tr) - pad;
          const std::ptrdiff_t r_lo = std::max<std::ptrdiff_t>(0, -offr);
          const std::ptrdiff_t r_hi = std::min(R, R - offr);
          for (std::size_t tc = 0; tc < k; ++tc) {
            const std::ptrdiff_t offc = static_cast<std::ptrdiff_t>(tc) - pad;
            const std::ptrdiff_t c_lo = std::max<std::ptrdiff_t>(0, -offc);
            const std::ptrdiff_t c_hi = std::min(C, C - offc);
            if (c_hi <= c_lo) continue;
            const auto m = static_cast<std::size_t>(c_hi - c_lo);
            const T wv = wp[tr * k + tc];
            T acc{0};
            for (std::ptrdiff_t r = r_lo; r < r_hi; ++r) {
              const T* g = gyp + r * C + c_lo;
              if (gxp) axpy(wv, g, gxp + (r + offr) * C + c_lo + offc, m);
              if (gwp) acc += dot(g, xp + (r + offr) * C + c_lo + offc, m);
            }
            if (gwp) gwp[tr * k + tc] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicLayerParams<T>& p) {
  if (p.kernel.rank() != 2) throw std::invalid_argument("fully_connected: kernel must be [n_out, n_in]");
  const std::size_t n_out = p.kernel.dim(0);
  const std::size_t n_in = p.kernel.dim(1);
  if (p.bias.shape() != Shape{n_out}) throw std::invalid_argument("fully_connected: bias shape mismatch");
  const bool batched = x.rank() == 2;
  if (!(batched || x.rank() == 1) || x.shape().back() != n_in) {
    throw std::invalid_argument("fully_connected: input " + shape_str(x.shape()) +
                                " does not match kernel " + shape_str(p.kernel.shape()));
  }
  const std::size_t batch = batched ? x.dim(0) : 1;
  std::vector<T> y(batch * n_out);
  const T* xd = x.data().data();
  const T* wd = p.kernel.data().data();
  const T* bd = p.bias.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < n_out; ++o) {
      y[n * n_out + o] = bd[o] + dot(wd + o * n_in, xd + n * n_in, n_in);
    }
  }
  Shape out = batched ? Shape{batch, n_out} : Shape{n_out};
  return BasicTensor<T>::from_op(
      std::move(out), std::move(y), {x, p.kernel, p.bias},
      [batch, n_in, n_out](detail::Node<T>& self) {
        const auto& xn = self.inputs[0];
        const auto& wn = self.inputs[1];
        const auto& bn = self.inputs[2];
        const T* gy = self.grad.data();
        if (xn->requires_grad) {
          auto& gx = xn->grad_buffer();
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t o = 0; o < n_out; ++o) {
              axpy(gy[n * n_out + o], wn->value.data() + o * n_in, gx.data() + n * n_in, n_in);
            }
          }
        }
        if (wn->requires_grad) {
          auto& gw = wn->grad_buffer();
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t o = 0; o < n_out; ++o) {
              axpy(gy[n * n_out + o], xn->value.data() + n * n_in, gw.data() + o * n_in, n_in);
            }
          }
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t o = 0; o < n_out; ++o) gb[o] += gy[n * n_out + o];
          }
        }
      });
}

template <typename T>
BasicTensor<T> conv(const BasicTensor<T>& x, const BasicLayerParams<T>& p) {
  const std::size_t krank = p.kernel.rank();
  if (krank != 3 && krank != 4) {
    throw std::invalid_argument("conv: kernel must be [C_out, C_in, k] or [C_out, C_in, k, k]");
  }
  const std::size_t d = krank - 2;
  const std::size_t k = p.kernel.shape().back();
  if (k % 2 == 0) throw std::invalid_argument("conv: kernel size must be odd, got " + std::to_string(k));
  if (d == 2 && p.kernel.dim(2) != k) throw std::invalid_argument("conv: kernel must be square");
  const std::size_t co_n = p.kernel.dim(0);
  const std::size_t ci_n = p.kernel.dim(1);
  if (p.bias.shape() != Shape{co_n}) throw std::invalid_argument("conv: bias shape mismatch");
  const SpatialLayout l = spatial_layout(x, d, "conv");
  if (l.channels != ci_n) {
    throw std::invalid_argument("conv: input channels " + std::to_string(l.channels) +
                                " but kernel expects " + std::to_string(ci_n));
  }
  std::vector<T> y(l.batch * co_n * l.plane);
  const T* xd = x.data().data();
  const T* wd = p.kernel.data().data();
  const T* bd = p.bias.data().data();
  const std::size_t batch = l.batch;
  const std::size_t rows = l.size[0];
  const std::size_t cols = d == 2 ? l.size[1] : 1;
  if (d == 1) {
    conv1d_forward(xd, wd, bd, y.data(), batch, ci_n, co_n, rows, k);
  } else {
    conv2d_forward(xd, wd, bd, y.data(), batch, ci_n, co_n, rows, cols, k);
  }
  return BasicTensor<T>::from_op(
      layout_shape(l, co_n, l.size), std::move(y), {x, p.kernel, p.bias},
      [=](detail::Node<T>& self) {
        const auto& xn = self.inputs[0];
        const auto& wn = self.inputs[1];
        const auto& bn = self.inputs[2];
        const T* gy = self.grad.data();
        T* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        T* gw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
        if (gx || gw) {
          if (d == 1) {
            conv1d_backward(xn->value.data(), wn->value.data(), gy, gx, gw, batch, ci_n, co_n,
                            rows, k);
          } else {
            conv2d_backward(xn->value.data(), wn->value.data(), gy, gx, gw, batch, ci_n, co_n,
                            rows, cols, k);
          }
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          const std::size_t plane = rows * cols;
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t co = 0; co < co_n; ++co) {
              gb[co] += total(gy + (n * co_n + co) * plane, plane);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> nn_upsample(const BasicTensor<T>& x, const std::vector<std::size_t>& out_size) {
  const SpatialLayout l = spatial_layout(x, out_size.size(), "nn_upsample");
  std::vector<std::vector<std::ptrdiff_t>> maps(out_size.size());
  for (std::size_t a = 0; a < out_size.size(); ++a) {
    if (out_size[a] < l.size[a]) {
      throw std::invalid_argument("nn_upsample: cannot downsample axis " + std::to_string(a) +
                                  " from " + std::to_string(l.size[a]) + " to " +
                                  std::to_string(out_size[a]));
    }
    for (std::size_t j = 0; j < out_size[a]; ++j) {
      maps[a].push_back(static_cast<std::ptrdiff_t>(j * l.size[a] / out_size[a]));
    }
  }
  return gather_planes<T>(x, l, out_size, combine_axes(maps, l.size), nullptr);
}

template <typename T>
BasicTensor<T> expand_fill(const BasicTensor<T>& x, const BasicTensor<T>& fill,
                           const std::vector<std::size_t>& out_size) {
  if (fill.size() != 1) throw std::invalid_argument("expand_fill: fill must be a scalar tensor");
  const SpatialLayout l = spatial_layout(x, out_size.size(), "expand_fill");
  std::vector<std::vector<std::ptrdiff_t>> maps(out_size.size());
  for (std::size_t a = 0; a < out_size.size(); ++a) {
    if (out_size[a] <= l.size[a]) {
      throw std::invalid_argument("expand_fill: output size must exceed input size on axis " +
                                  std::to_string(a));
    }
    const std::size_t stride = (out_size[a] + l.size[a] - 1) / l.size[a];
    for (std::size_t j = 0; j < out_size[a]; ++j) {
      maps[a].push_back(j % stride == 0 ? static_cast<std::ptrdiff_t>(j / stride) : -1);
    }
  }
  return gather_planes(x, l, out_size, combine_axes(maps, l.size), &fill);
}

template <typename T>
BasicTensor<T> mod_transposed_conv(const BasicTensor<T>& x, const BasicLayerParams<T>& p,
                                   const std::vector<std::size_t>& out_size) {
  if (!p.has_fill()) {
    throw std::invalid_argument("mod_transposed_conv: layer has no fill constant");
  }
  return conv(expand_fill(x, p.fill_constant, out_size), p);
}

#define DENSE_INSTANTIATE(T)                                                                  \
  template BasicTensor<T> fully_connected<T>(const BasicTensor<T>&, const BasicLayerParams<T>&);        \
  template BasicTensor<T> conv<T>(const BasicTensor<T>&, const BasicLayerParams<T>&);         \
  template BasicTensor<T> nn_upsample<T>(const BasicTensor<T>&, const std::vector<std::size_t>&); \
  template BasicTensor<T> expand_fill<T>(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         const std::vector<std::size_t>&);                    \
  template BasicTensor<T> mod_transposed_conv<T>(const BasicTensor<T>&,                       \
                                                 const BasicLayerParams<T>&,                  \
                                                 const std::vector<std::size_t>&);

DENSE_INSTANTIATE(float)
DENSE_INSTANTIATE(double)

#undef DENSE_INSTANTIATE

}  // namespace dense
