#include "vseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "gemm.hpp"
#include "vseg/parallel.hpp"

namespace vseg {

namespace {

using Ext3 = std::array<std::int64_t, 3>;

// Upper bound on im2col buffer elements per chunk.
constexpr std::int64_t kColBudget = std::int64_t{1} << 22;

Ext3 canonical_kernel(const Shape& w_shape, int spatial_dims) {
  if (static_cast<int>(w_shape.size()) != 2 + spatial_dims) {
    throw ValidationError("kernel rank does not match input rank");
  }
  Ext3 k{1, 1, 1};
  for (int i = 0; i < spatial_dims; ++i) {
    k[static_cast<std::size_t>(3 - spatial_dims + i)] = w_shape[static_cast<std::size_t>(2 + i)];
  }
  return k;
}

Shape make_shape(std::int64_t n, std::int64_t c, const Ext3& s, int spatial_dims) {
  Shape sh{n, c};
  for (int i = 3 - spatial_dims; i < 3; ++i) sh.push_back(s[static_cast<std::size_t>(i)]);
  return sh;
}

template <typename T>
void im2col(const T* x, std::int64_t ci_n, const Ext3& s, const Ext3& k, const Ext3& o, std::int64_t line0,
            std::int64_t nlines, T* col) {
  const std::int64_t q = nlines * o[2];
  const std::int64_t rows = ci_n * k[0] * k[1] * k[2];
  parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t r = r0; r < r1; ++r) {
      std::int64_t rem = r;
      const std::int64_t c = rem % k[2];
      rem /= k[2];
      const std::int64_t b = rem % k[1];
      rem /= k[1];
      const std::int64_t a = rem % k[0];
      const std::int64_t ci = rem / k[0];
      T* dst = col + r * q;
      for (std::int64_t l = 0; l < nlines; ++l) {
        const std::int64_t line = line0 + l;
        const std::int64_t od = line / o[1];
        const std::int64_t oh = line % o[1];
        const T* src = x + ((ci * s[0] + od + a) * s[1] + oh + b) * s[2] + c;
        std::memcpy(dst + l * o[2], src, static_cast<std::size_t>(o[2]) * sizeof(T));
      }
    }
  }, 8);
}

template <typename T>
void col2im_add(const T* col, std::int64_t ci_n, const Ext3& s, const Ext3& k, const Ext3& o, std::int64_t line0,
                std::int64_t nlines, T* dx) {
  const std::int64_t q = nlines * o[2];
  const std::int64_t kk = k[0] * k[1] * k[2];
  // One thread per input channel keeps the accumulation order fixed.
  parallel_for(ci_n, [&](std::int64_t c0, std::int64_t c1) {
    for (std::int64_t ci = c0; ci < c1; ++ci) {
      for (std::int64_t kr = 0; kr < kk; ++kr) {
        const std::int64_t c = kr % k[2];
        const std::int64_t b = (kr / k[2]) % k[1];
        const std::int64_t a = kr / (k[1] * k[2]);
        const T* src = col + (ci * kk + kr) * q;
        for (std::int64_t l = 0; l < nlines; ++l) {
          const std::int64_t line = line0 + l;
          const std::int64_t od = line / o[1];
          const std::int64_t oh = line % o[1];
          T* dst = dx + ((ci * s[0] + od + a) * s[1] + oh + b) * s[2] + c;
          const T* sl = src + l * o[2];
          for (std::int64_t w = 0; w < o[2]; ++w) dst[w] += sl[w];
        }
      }
    }
  }, 1);
}

std::int64_t lines_per_chunk(std::int64_t rows, std::int64_t line_len, std::int64_t total_lines) {
  const std::int64_t per = std::max<std::int64_t>(1, kColBudget / std::max<std::int64_t>(1, rows * line_len));
  return std::min(per, total_lines);
}

bool is_pointwise(const Ext3& k) { return k[0] == 1 && k[1] == 1 && k[2] == 1; }

int as_int(std::int64_t v) {
  if (v > std::numeric_limits<int>::max()) throw ValidationError("tensor too large for BLAS indexing");
  return static_cast<int>(v);
}

template <typename T>
BasicTensor<T> conv_valid(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const Layout L = x.layout();
  const Ext3 k = canonical_kernel(w.shape(), L.spatial_dims);
  const std::int64_t co_n = w.dim(0);
  if (w.dim(1) != L.c) throw ValidationError("conv: input has " + std::to_string(L.c) + " channels, kernel expects " + std::to_string(w.dim(1)));
  if (static_cast<std::int64_t>(b.size()) != co_n) throw ValidationError("conv: bias size mismatch");
  Ext3 o{};
  for (int i = 0; i < 3; ++i) {
    o[i] = L.s[i] - k[i] + 1;
    if (o[i] < 1) throw ValidationError("conv: input smaller than kernel without padding");
  }
  BasicTensor<T> y(make_shape(L.n, co_n, o, L.spatial_dims));
  const std::int64_t P = o[0] * o[1] * o[2];
  const std::int64_t K = L.c * k[0] * k[1] * k[2];
  const std::int64_t in_item = L.c * L.spatial();
  std::vector<T> col;
  for (std::int64_t n = 0; n < L.n; ++n) {
    const T* xn = x.data() + n * in_item;
    T* yn = y.data() + n * co_n * P;
    if (is_pointwise(k)) {
      detail::gemm(false, false, as_int(co_n), as_int(P), as_int(K), T{1}, w.data(), as_int(K), xn, as_int(P), T{0}, yn,
                   as_int(P));
    } else {
      const std::int64_t total = o[0] * o[1];
      const std::int64_t chunk = lines_per_chunk(K, o[2], total);
      col.resize(static_cast<std::size_t>(K * chunk * o[2]));
      for (std::int64_t l0 = 0; l0 < total; l0 += chunk) {
        const std::int64_t nl = std::min(chunk, total - l0);
        const std::int64_t q = nl * o[2];
        im2col(xn, L.c, L.s, k, o, l0, nl, col.data());
        detail::gemm(false, false, as_int(co_n), as_int(q), as_int(K), T{1}, w.data(), as_int(K), col.data(),
                     as_int(q), T{0}, yn + l0 * o[2], as_int(P));
      }
    }
    for (std::int64_t co = 0; co < co_n; ++co) {
      const T bias = b[static_cast<std::size_t>(co)];
      T* row = yn + co * P;
      for (std::int64_t p = 0; p < P; ++p) row[p] += bias;
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv_valid_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                                 bool need_dx) {
  const Layout L = x.layout();
  const Ext3 k = canonical_kernel(w.shape(), L.spatial_dims);
  const Layout O = dy.layout();
  const Ext3 o = O.s;
  const std::int64_t co_n = w.dim(0);
  const std::int64_t P = o[0] * o[1] * o[2];
  const std::int64_t K = L.c * k[0] * k[1] * k[2];
  const std::int64_t in_item = L.c * L.spatial();

  ConvGrads<T> g;
  g.dw = BasicTensor<T>(w.shape());
  g.db = BasicTensor<T>(Shape{co_n});
  if (need_dx) g.dx = BasicTensor<T>(x.shape());

  std::vector<double> db(static_cast<std::size_t>(co_n), 0.0);
  std::vector<T> col;
  std::vector<T> dcol;
  for (std::int64_t n = 0; n < L.n; ++n) {
    const T* xn = x.data() + n * in_item;
    const T* dyn = dy.data() + n * co_n * P;
    for (std::int64_t co = 0; co < co_n; ++co) {
      double acc = 0.0;
      const T* row = dyn + co * P;
      for (std::int64_t p = 0; p < P; ++p) acc += row[p];
      db[static_cast<std::size_t>(co)] += acc;
    }
    if (is_pointwise(k)) {
      // dW += dY * X^T ; dX = W^T * dY
      detail::gemm(false, true, as_int(co_n), as_int(K), as_int(P), T{1}, dyn, as_int(P), xn, as_int(P), T{1},
                   g.dw.data(), as_int(K));
      if (need_dx) {
        detail::gemm(true, false, as_int(K), as_int(P), as_int(co_n), T{1}, w.data(), as_int(K), dyn, as_int(P), T{0},
                     g.dx.data() + n * in_item, as_int(P));
      }
      continue;
    }
    const std::int64_t total = o[0] * o[1];
    const std::int64_t chunk = lines_per_chunk(K, o[2], total);
    col.resize(static_cast<std::size_t>(K * chunk * o[2]));
    if (need_dx) dcol.resize(col.size());
    for (std::int64_t l0 = 0; l0 < total; l0 += chunk) {
      const std::int64_t nl = std::min(chunk, total - l0);
      const std::int64_t q = nl * o[2];
      im2col(xn, L.c, L.s, k, o, l0, nl, col.data());
      detail::gemm(false, true, as_int(co_n), as_int(K), as_int(q), T{1}, dyn + l0 * o[2], as_int(P), col.data(),
                   as_int(q), T{1}, g.dw.data(), as_int(K));
      if (need_dx) {
        detail::gemm(true, false, as_int(K), as_int(q), as_int(co_n), T{1}, w.data(), as_int(K), dyn + l0 * o[2],
                     as_int(P), T{0}, dcol.data(), as_int(q));
        col2im_add(dcol.data(), L.c, L.s, k, o, l0, nl, g.dx.data() + n * in_item);
      }
    }
  }
  for (std::int64_t co = 0; co < co_n; ++co) g.db[static_cast<std::size_t>(co)] = static_cast<T>(db[static_cast<std::size_t>(co)]);
  return g;
}

std::pair<Pad3, Pad3> same_padding(const Ext3& k) {
  Pad3 lo{}, hi{};
  for (int i = 0; i < 3; ++i) {
    if (k[i] % 2 == 0) throw ValidationError("same-size padding needs odd kernel extents");
    lo[i] = hi[i] = (k[i] - 1) / 2;
  }
  return {lo, hi};
}

std::array<std::int64_t, 3> pool_factors(int spatial_dims) {
  std::array<std::int64_t, 3> f{1, 1, 1};
  for (int i = 3 - spatial_dims; i < 3; ++i) f[static_cast<std::size_t>(i)] = 2;
  return f;
}

}  // namespace

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

template <typename T>
BasicTensor<T> pad_spatial(const BasicTensor<T>& x, const Pad3& lo, const Pad3& hi, Padding mode) {
  const Layout L = x.layout();
  Ext3 s{};
  for (int i = 0; i < 3; ++i) s[i] = L.s[i] + lo[i] + hi[i];
  BasicTensor<T> y(make_shape(L.n, L.c, s, L.spatial_dims));
  if (mode == Padding::none) throw ValidationError("pad_spatial needs zero or reflect mode");
  const std::int64_t planes = L.n * L.c;
  parallel_for(planes, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t p = p0; p < p1; ++p) {
      const T* src = x.data() + p * L.spatial();
      T* dst = y.data() + p * (s[0] * s[1] * s[2]);
      for (std::int64_t d = 0; d < s[0]; ++d) {
        std::int64_t sd = d - lo[0];
        const bool in_d = sd >= 0 && sd < L.s[0];
        if (mode == Padding::reflect) sd = reflect_index(sd, L.s[0]);
        for (std::int64_t h = 0; h < s[1]; ++h) {
          std::int64_t sh = h - lo[1];
          const bool in_h = sh >= 0 && sh < L.s[1];
          if (mode == Padding::reflect) sh = reflect_index(sh, L.s[1]);
          T* out = dst + (d * s[1] + h) * s[2];
          for (std::int64_t w = 0; w < s[2]; ++w) {
            std::int64_t sw = w - lo[2];
            const bool in_w = sw >= 0 && sw < L.s[2];
            if (mode == Padding::reflect) {
              sw = reflect_index(sw, L.s[2]);
              out[w] = src[(sd * L.s[1] + sh) * L.s[2] + sw];
            } else {
              out[w] = (in_d && in_h && in_w) ? src[(sd * L.s[1] + sh) * L.s[2] + sw] : T{0};
            }
          }
        }
      }
    }
  }, 1);
  return y;
}

template <typename T>
BasicTensor<T> pad_spatial_adjoint(const BasicTensor<T>& dy, const Shape& x_shape, const Pad3& lo, const Pad3& hi,
                                   Padding mode) {
  const Layout L = layout_of(x_shape);
  const Layout P = dy.layout();
  (void)hi;
  BasicTensor<T> dx(x_shape);
  const std::int64_t planes = L.n * L.c;
  parallel_for(planes, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t p = p0; p < p1; ++p) {
      const T* src = dy.data() + p * P.spatial();
      T* dst = dx.data() + p * L.spatial();
      for (std::int64_t d = 0; d < P.s[0]; ++d) {
        std::int64_t sd = d - lo[0];
        const bool in_d = sd >= 0 && sd < L.s[0];
        if (mode == Padding::reflect) sd = reflect_index(sd, L.s[0]);
        for (std::int64_t h = 0; h < P.s[1]; ++h) {
          std::int64_t sh = h - lo[1];
          const bool in_h = sh >= 0 && sh < L.s[1];
          if (mode == Padding::reflect) sh = reflect_index(sh, L.s[1]);
          const T* row = src + (d * P.s[1] + h) * P.s[2];
          for (std::int64_t w = 0; w < P.s[2]; ++w) {
            std::int64_t sw = w - lo[2];
            const bool in_w = sw >= 0 && sw < L.s[2];
            if (mode == Padding::reflect) {
              sw = reflect_index(sw, L.s[2]);
              dst[(sd * L.s[1] + sh) * L.s[2] + sw] += row[w];
            } else if (in_d && in_h && in_w) {
              dst[(sd * L.s[1] + sh) * L.s[2] + sw] += row[w];
            }
          }
        }
      }
    }
  }, 1);
  return dx;
}

template <typename T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, Padding pad) {
  if (pad == Padding::none) return conv_valid(x, w, b);
  const Ext3 k = canonical_kernel(w.shape(), x.layout().spatial_dims);
  if (is_pointwise(k)) return conv_valid(x, w, b);
  const auto [lo, hi] = same_padding(k);
  return conv_valid(pad_spatial(x, lo, hi, pad), w, b);
}

template <typename T>
ConvGrads<T> conv_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, Padding pad, const BasicTensor<T>& dy,
                           bool need_dx) {
  const Ext3 k = canonical_kernel(w.shape(), x.layout().spatial_dims);
  if (pad == Padding::none || is_pointwise(k)) return conv_valid_backward(x, w, dy, need_dx);
  const auto [lo, hi] = same_padding(k);
  ConvGrads<T> g = conv_valid_backward(pad_spatial(x, lo, hi, pad), w, dy, need_dx);
  if (need_dx) g.dx = pad_spatial_adjoint(g.dx, x.shape(), lo, hi, pad);
  return g;
}

template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& x) {
  const Layout L = x.layout();
  const auto f = pool_factors(L.spatial_dims);
  Ext3 o{};
  for (int i = 0; i < 3; ++i) {
    if (L.s[i] % f[i] != 0) throw ValidationError("maxpool: odd spatial extent " + std::to_string(L.s[i]));
    o[i] = L.s[i] / f[i];
  }
  PoolResult<T> r;
  r.y = BasicTensor<T>(make_shape(L.n, L.c, o, L.spatial_dims));
  r.argmax.assign(r.y.size(), 0);
  const std::int64_t planes = L.n * L.c;
  const std::int64_t op = o[0] * o[1] * o[2];
  parallel_for(planes, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t p = p0; p < p1; ++p) {
      const T* src = x.data() + p * L.spatial();
      for (std::int64_t d = 0; d < o[0]; ++d) {
        for (std::int64_t h = 0; h < o[1]; ++h) {
          for (std::int64_t w = 0; w < o[2]; ++w) {
            T best = -std::numeric_limits<T>::infinity();
            std::uint8_t arg = 0;
            std::uint8_t idx = 0;
            for (std::int64_t a = 0; a < f[0]; ++a) {
              for (std::int64_t b = 0; b < f[1]; ++b) {
                for (std::int64_t c = 0; c < f[2]; ++c, ++idx) {
                  const T v = src[((d * f[0] + a) * L.s[1] + h * f[1] + b) * L.s[2] + w * f[2] + c];
                  if (idx == 0 || v > best) {
                    best = v;
                    arg = idx;
                  }
                }
              }
            }
            const std::size_t out = static_cast<std::size_t>(p * op + (d * o[1] + h) * o[2] + w);
            r.y[out] = best;
            r.argmax[out] = arg;
          }
        }
      }
    }
  }, 1);
  return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape& x_shape, const std::vector<std::uint8_t>& argmax,
                                const BasicTensor<T>& dy, bool spread) {
  const Layout L = layout_of(x_shape);
  const auto f = pool_factors(L.spatial_dims);
  const Layout O = dy.layout();
  BasicTensor<T> dx(x_shape);
  const std::int64_t planes = L.n * L.c;
  const std::int64_t op = O.spatial();
  parallel_for(planes, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t p = p0; p < p1; ++p) {
      T* dst = dx.data() + p * L.spatial();
      for (std::int64_t d = 0; d < O.s[0]; ++d) {
        for (std::int64_t h = 0; h < O.s[1]; ++h) {
          for (std::int64_t w = 0; w < O.s[2]; ++w) {
            const std::size_t out = static_cast<std::size_t>(p * op + (d * O.s[1] + h) * O.s[2] + w);
            std::uint8_t idx = 0;
            for (std::int64_t a = 0; a < f[0]; ++a) {
              for (std::int64_t b = 0; b < f[1]; ++b) {
                for (std::int64_t c = 0; c < f[2]; ++c, ++idx) {
                  if (spread || idx == argmax[out]) {
                    dst[((d * f[0] + a) * L.s[1] + h * f[1] + b) * L.s[2] + w * f[2] + c] += dy[out];
                  }
                }
              }
            }
          }
        }
      }
    }
  }, 1);
  return dx;
}

template <typename T>
BasicTensor<T> upconv_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const Layout L = x.layout();
  const Ext3 k = canonical_kernel(w.shape(), L.spatial_dims);
  const auto f = pool_factors(L.spatial_dims);
  if (k != f) throw ValidationError("upconv: kernel must be 2 per spatial axis");
  if (w.dim(0) != L.c) throw ValidationError("upconv: channel mismatch");
  const std::int64_t co_n = w.dim(1);
  const std::int64_t kk = k[0] * k[1] * k[2];
  Ext3 o{};
  for (int i = 0; i < 3; ++i) o[i] = L.s[i] * f[i];
  BasicTensor<T> y(make_shape(L.n, co_n, o, L.spatial_dims));
  const std::int64_t P = L.spatial();
  const std::int64_t M = co_n * kk;
  std::vector<T> blocks(static_cast<std::size_t>(M * P));
  for (std::int64_t n = 0; n < L.n; ++n) {
    const T* xn = x.data() + n * L.c * P;
    detail::gemm(true, false, as_int(M), as_int(P), as_int(L.c), T{1}, w.data(), as_int(M), xn, as_int(P), T{0},
                 blocks.data(), as_int(P));
    T* yn = y.data() + n * co_n * o[0] * o[1] * o[2];
    parallel_for(co_n, [&](std::int64_t c0, std::int64_t c1) {
      for (std::int64_t co = c0; co < c1; ++co) {
        const T bias = b[static_cast<std::size_t>(co)];
        for (std::int64_t kr = 0; kr < kk; ++kr) {
          const std::int64_t c = kr % k[2];
          const std::int64_t bb = (kr / k[2]) % k[1];
          const std::int64_t a = kr / (k[1] * k[2]);
          const T* src = blocks.data() + (co * kk + kr) * P;
          for (std::int64_t d = 0; d < L.s[0]; ++d) {
            for (std::int64_t h = 0; h < L.s[1]; ++h) {
              T* dst = yn + ((co * o[0] + d * f[0] + a) * o[1] + h * f[1] + bb) * o[2] + c;
              const T* s = src + (d * L.s[1] + h) * L.s[2];
              for (std::int64_t ww = 0; ww < L.s[2]; ++ww) dst[ww * f[2]] = s[ww] + bias;
            }
          }
        }
      }
    }, 1);
  }
  return y;
}

template <typename T>
ConvGrads<T> upconv_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                             bool need_dx) {
  const Layout L = x.layout();
  const Ext3 k = canonical_kernel(w.shape(), L.spatial_dims);
  const auto f = pool_factors(L.spatial_dims);
  const std::int64_t co_n = w.dim(1);
  const std::int64_t kk = k[0] * k[1] * k[2];
  const Layout O = dy.layout();
  const std::int64_t P = L.spatial();
  const std::int64_t M = co_n * kk;

  ConvGrads<T> g;
  g.dw = BasicTensor<T>(w.shape());
  g.db = BasicTensor<T>(Shape{co_n});
  if (need_dx) g.dx = BasicTensor<T>(x.shape());
  std::vector<double> db(static_cast<std::size_t>(co_n), 0.0);
  std::vector<T> blocks(static_cast<std::size_t>(M * P));
  for (std::int64_t n = 0; n < L.n; ++n) {
    const T* dyn = dy.data() + n * co_n * O.spatial();
    for (std::int64_t co = 0; co < co_n; ++co) {
      double acc = 0.0;
      const T* row = dyn + co * O.spatial();
      for (std::int64_t p = 0; p < O.spatial(); ++p) acc += row[p];
      db[static_cast<std::size_t>(co)] += acc;
    }
    parallel_for(co_n, [&](std::int64_t c0, std::int64_t c1) {
      for (std::int64_t co = c0; co < c1; ++co) {
        for (std::int64_t kr = 0; kr < kk; ++kr) {
          const std::int64_t c = kr % k[2];
          const std::int64_t bb = (kr / k[2]) % k[1];
          const std::int64_t a = kr / (k[1] * k[2]);
          T* dst = blocks.data() + (co * kk + kr) * P;
          for (std::int64_t d = 0; d < L.s[0]; ++d) {
            for (std::int64_t h = 0; h < L.s[1]; ++h) {
              const T* src = dyn + ((co * O.s[0] + d * f[0] + a) * O.s[1] + h * f[1] + bb) * O.s[2] + c;
              T* out = dst + (d * L.s[1] + h) * L.s[2];
              for (std::int64_t ww = 0; ww < L.s[2]; ++ww) out[ww] = src[ww * f[2]];
            }
          }
        }
      }
    }, 1);
    const T* xn = x.data() + n * L.c * P;
    detail::gemm(false, true, as_int(L.c), as_int(M), as_int(P), T{1}, xn, as_int(P), blocks.data(), as_int(P), T{1},
                 g.dw.data(), as_int(M));
    if (need_dx) {
      detail::gemm(false, false, as_int(L.c), as_int(P), as_int(M), T{1}, w.data(), as_int(M), blocks.data(),
                   as_int(P), T{0}, g.dx.data() + n * L.c * P, as_int(P));
    }
  }
  for (std::int64_t co = 0; co < co_n; ++co) g.db[static_cast<std::size_t>(co)] = static_cast<T>(db[static_cast<std::size_t>(co)]);
  return g;
}

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 const BasicTensor<T>& running_mean, const BasicTensor<T>& running_var, Mode mode,
                                 BatchNormCache<T>* cache) {
  const Layout L = x.layout();
  const std::int64_t S = L.spatial();
  const std::int64_t count = L.n * S;
  const auto C = static_cast<std::size_t>(L.c);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C) {
    throw ValidationError("batchnorm: parameter size mismatch");
  }
  BatchNormCache<T> local;
  BatchNormCache<T>& bc = cache ? *cache : local;
  bc.mode = mode;
  bc.mean.assign(C, 0.0);
  bc.inv_std.assign(C, 0.0);
  bc.batch_var_unbiased.clear();
  if (mode == Mode::train) {
    if (count < 2) throw ValidationError("batchnorm: train mode needs at least 2 samples per channel");
    bc.batch_var_unbiased.assign(C, 0.0);
    parallel_for(L.c, [&](std::int64_t c0, std::int64_t c1) {
      for (std::int64_t c = c0; c < c1; ++c) {
        double sum = 0.0;
        for (std::int64_t n = 0; n < L.n; ++n) {
          const T* p = x.data() + (n * L.c + c) * S;
          for (std::int64_t i = 0; i < S; ++i) sum += p[i];
        }
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::int64_t n = 0; n < L.n; ++n) {
          const T* p = x.data() + (n * L.c + c) * S;
          for (std::int64_t i = 0; i < S; ++i) {
            const double d = p[i] - mean;
            sq += d * d;
          }
        }
        const auto cc = static_cast<std::size_t>(c);
        bc.mean[cc] = mean;
        bc.inv_std[cc] = 1.0 / std::sqrt(sq / static_cast<double>(count) + batchnorm_eps);
        bc.batch_var_unbiased[cc] = sq / static_cast<double>(count - 1);
      }
    }, 1);
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      bc.mean[c] = running_mean[c];
      bc.inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + batchnorm_eps);
    }
  }
  BasicTensor<T> y(x.shape());
  parallel_for(L.n * L.c, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t p = p0; p < p1; ++p) {
      const auto c = static_cast<std::size_t>(p % L.c);
      const double scale = gamma[c] * bc.inv_std[c];
      const double shift = beta[c] - bc.mean[c] * scale;
      const T* src = x.data() + p * S;
      T* dst = y.data() + p * S;
      for (std::int64_t i = 0; i < S; ++i) dst[i] = static_cast<T>(src[i] * scale + shift);
    }
  }, 1);
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache, const BasicTensor<T>& dy) {
  const Layout L = x.layout();
  const std::int64_t S = L.spatial();
  const double count = static_cast<double>(L.n * S);
  BatchNormGrads<T> g;
  g.dx = BasicTensor<T>(x.shape());
  g.dgamma = BasicTensor<T>(Shape{L.c});
  g.dbeta = BasicTensor<T>(Shape{L.c});
  parallel_for(L.c, [&](std::int64_t c0, std::int64_t c1) {
    for (std::int64_t c = c0; c < c1; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      const double mean = cache.mean[cc];
      const double inv = cache.inv_std[cc];
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (std::int64_t n = 0; n < L.n; ++n) {
        const T* xp = x.data() + (n * L.c + c) * S;
        const T* gp = dy.data() + (n * L.c + c) * S;
        for (std::int64_t i = 0; i < S; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += gp[i] * (xp[i] - mean) * inv;
        }
      }
      g.dgamma[cc] = static_cast<T>(sum_dy_xhat);
      g.dbeta[cc] = static_cast<T>(sum_dy);
      const double gm = gamma[cc];
      for (std::int64_t n = 0; n < L.n; ++n) {
        const T* xp = x.data() + (n * L.c + c) * S;
        const T* gp = dy.data() + (n * L.c + c) * S;
        T* dp = g.dx.data() + (n * L.c + c) * S;
        if (cache.mode == Mode::train) {
          for (std::int64_t i = 0; i < S; ++i) {
            const double xhat = (xp[i] - mean) * inv;
            dp[i] = static_cast<T>(gm * inv * (gp[i] - sum_dy / count - xhat * sum_dy_xhat / count));
          }
        } else {
          for (std::int64_t i = 0; i < S; ++i) dp[i] = static_cast<T>(gm * inv * gp[i]);
        }
      }
    }
  }, 1);
  return g;
}

template <typename T>
void batchnorm_update_running(BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                              const BatchNormCache<T>& cache) {
  if (cache.mode != Mode::train) return;
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = static_cast<T>(batchnorm_momentum * running_mean[c] + (1.0 - batchnorm_momentum) * cache.mean[c]);
    running_var[c] = static_cast<T>(batchnorm_momentum * running_var[c] +
                                    (1.0 - batchnorm_momentum) * cache.batch_var_unbiased[c]);
  }
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  const auto n = static_cast<std::int64_t>(x.size());
  parallel_for(n, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      const T v = x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(i)] = v > T{0} ? v : T{0};
    }
  }, 1 << 16);
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy) {
  BasicTensor<T> dx(y.shape());
  const auto n = static_cast<std::int64_t>(y.size());
  parallel_for(n, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      const auto k = static_cast<std::size_t>(i);
      dx[k] = y[k] > T{0} ? dy[k] : T{0};
    }
  }, 1 << 16);
  return dx;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x) {
  const Layout L = x.layout();
  const std::int64_t S = L.spatial();
  BasicTensor<T> y(x.shape());
  parallel_for(L.n * S, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t q = b; q < e; ++q) {
      const std::int64_t n = q / S;
      const std::int64_t i = q % S;
      const T* src = x.data() + n * L.c * S + i;
      T* dst = y.data() + n * L.c * S + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t c = 0; c < L.c; ++c) mx = std::max(mx, static_cast<double>(src[c * S]));
      double sum = 0.0;
      for (std::int64_t c = 0; c < L.c; ++c) sum += std::exp(static_cast<double>(src[c * S]) - mx);
      for (std::int64_t c = 0; c < L.c; ++c) {
        dst[c * S] = static_cast<T>(std::exp(static_cast<double>(src[c * S]) - mx) / sum);
      }
    }
  }, 1 << 14);
  return y;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy) {
  const Layout L = y.layout();
  const std::int64_t S = L.spatial();
  BasicTensor<T> dx(y.shape());
  parallel_for(L.n * S, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t q = b; q < e; ++q) {
      const std::int64_t off = (q / S) * L.c * S + q % S;
      double dot = 0.0;
      for (std::int64_t c = 0; c < L.c; ++c) dot += static_cast<double>(dy[off + c * S]) * y[off + c * S];
      for (std::int64_t c = 0; c < L.c; ++c) {
        const auto k = static_cast<std::size_t>(off + c * S);
        dx[k] = static_cast<T>(y[k] * (static_cast<double>(dy[k]) - dot));
      }
    }
  }, 1 << 14);
  return dx;
}

Pad3 crop_offsets(const Shape& skip, const Shape& up) {
  const Layout a = layout_of(skip);
  const Layout b = layout_of(up);
  if (a.spatial_dims != b.spatial_dims || a.n != b.n) throw ValidationError("concat_crop: incompatible ranks or batch");
  Pad3 off{};
  for (int i = 0; i < 3; ++i) {
    const std::int64_t diff = a.s[i] - b.s[i];
    if (diff < 0) throw ValidationError("concat_crop: skip smaller than upsampled tensor");
    if (diff % 2 != 0) throw ValidationError("concat_crop: odd size difference");
    off[i] = diff / 2;
  }
  return off;
}

template <typename T>
BasicTensor<T> concat_crop(const BasicTensor<T>& skip, const BasicTensor<T>& up) {
  const Pad3 off = crop_offsets(skip.shape(), up.shape());
  const Layout A = skip.layout();
  const Layout B = up.layout();
  BasicTensor<T> y(make_shape(B.n, A.c + B.c, B.s, B.spatial_dims));
  const std::int64_t S = B.spatial();
  for (std::int64_t n = 0; n < B.n; ++n) {
    for (std::int64_t c = 0; c < A.c; ++c) {
      const T* src = skip.data() + (n * A.c + c) * A.spatial();
      T* dst = y.data() + (n * (A.c + B.c) + c) * S;
      for (std::int64_t d = 0; d < B.s[0]; ++d) {
        for (std::int64_t h = 0; h < B.s[1]; ++h) {
          const T* s = src + ((d + off[0]) * A.s[1] + h + off[1]) * A.s[2] + off[2];
          std::copy(s, s + B.s[2], dst + (d * B.s[1] + h) * B.s[2]);
        }
      }
    }
    std::copy(up.data() + n * B.c * S, up.data() + (n + 1) * B.c * S, y.data() + (n * (A.c + B.c) + A.c) * S);
  }
  return y;
}

template <typename T>
ConcatGrads<T> concat_crop_backward(const Shape& skip_shape, const Shape& up_shape, const BasicTensor<T>& dy) {
  const Pad3 off = crop_offsets(skip_shape, up_shape);
  const Layout A = layout_of(skip_shape);
  const Layout B = layout_of(up_shape);
  ConcatGrads<T> g{BasicTensor<T>(skip_shape), BasicTensor<T>(up_shape)};
  const std::int64_t S = B.spatial();
  for (std::int64_t n = 0; n < B.n; ++n) {
    for (std::int64_t c = 0; c < A.c; ++c) {
      const T* src = dy.data() + (n * (A.c + B.c) + c) * S;
      T* dst = g.dskip.data() + (n * A.c + c) * A.spatial();
      for (std::int64_t d = 0; d < B.s[0]; ++d) {
        for (std::int64_t h = 0; h < B.s[1]; ++h) {
          const T* s = src + (d * B.s[1] + h) * B.s[2];
          std::copy(s, s + B.s[2], dst + ((d + off[0]) * A.s[1] + h + off[1]) * A.s[2] + off[2]);
        }
      }
    }
    const T* s = dy.data() + (n * (A.c + B.c) + A.c) * S;
    std::copy(s, s + B.c * S, g.dup.data() + n * B.c * S);
  }
  return g;
}

#define VSEG_INSTANTIATE_LAYERS(T)                                                                                   \
  template BasicTensor<T> pad_spatial(const BasicTensor<T>&, const Pad3&, const Pad3&, Padding);                    \
  template BasicTensor<T> pad_spatial_adjoint(const BasicTensor<T>&, const Shape&, const Pad3&, const Pad3&,        \
                                              Padding);                                                             \
  template BasicTensor<T> conv_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, Padding); \
  template ConvGrads<T> conv_backward(const BasicTensor<T>&, const BasicTensor<T>&, Padding, const BasicTensor<T>&, \
                                      bool);                                                                        \
  template PoolResult<T> maxpool_forward(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> maxpool_backward(const Shape&, const std::vector<std::uint8_t>&, const BasicTensor<T>&,   \
                                           bool);                                                                   \
  template BasicTensor<T> upconv_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);      \
  template ConvGrads<T> upconv_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, bool); \
  template BasicTensor<T> batchnorm_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                            const BasicTensor<T>&, const BasicTensor<T>&, Mode, BatchNormCache<T>*); \
  template BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>&, const BasicTensor<T>&,                       \
                                                const BatchNormCache<T>&, const BasicTensor<T>&);                   \
  template void batchnorm_update_running(BasicTensor<T>&, BasicTensor<T>&, const BatchNormCache<T>&);               \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> softmax_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> concat_crop(const BasicTensor<T>&, const BasicTensor<T>&);                                \
  template ConcatGrads<T> concat_crop_backward(const Shape&, const Shape&, const BasicTensor<T>&);

VSEG_INSTANTIATE_LAYERS(float)
VSEG_INSTANTIATE_LAYERS(double)

#undef VSEG_INSTANTIATE_LAYERS

}  // namespace vseg
