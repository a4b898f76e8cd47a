// OpenMP kernels. Each output element is owned by exactly one thread and
// inner accumulation order is fixed, so results do not depend on the
// schedule; they may differ from the serial reference by rounding only
// where the loop nest is restructured (e.g. gather-form conv backward).

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "gregait/kernels.hpp"

namespace gregait {
namespace par {

template <class T>
void conv1x1_fwd(const T* x, int64_t n, int64_t ci, int64_t hw, const T* w,
                 const T* b, int64_t co, T* y) {
#pragma omp parallel for collapse(2)
  for (int64_t nb = 0; nb < n; ++nb) {
    for (int64_t o = 0; o < co; ++o) {
      const T* xn = x + nb * ci * hw;
      T* yr = y + (nb * co + o) * hw;
      const T bias = b ? b[o] : T(0);
      for (int64_t p = 0; p < hw; ++p) yr[p] = bias;
      for (int64_t i = 0; i < ci; ++i) {
        const T wv = w[o * ci + i];
        const T* xr = xn + i * hw;
        for (int64_t p = 0; p < hw; ++p) yr[p] += wv * xr[p];
      }
    }
  }
}

template <class T>
void conv1x1_bwd_input(const T* gy, int64_t n, int64_t co, int64_t hw,
                       const T* w, int64_t ci, T* gx) {
#pragma omp parallel for collapse(2)
  for (int64_t nb = 0; nb < n; ++nb) {
    for (int64_t i = 0; i < ci; ++i) {
      const T* gyn = gy + nb * co * hw;
      T* gr = gx + (nb * ci + i) * hw;
      for (int64_t p = 0; p < hw; ++p) gr[p] = T(0);
      for (int64_t o = 0; o < co; ++o) {
        const T wv = w[o * ci + i];
        const T* gyr = gyn + o * hw;
        for (int64_t p = 0; p < hw; ++p) gr[p] += wv * gyr[p];
      }
    }
  }
}

template <class T>
void conv1x1_bwd_params(const T* x, const T* gy, int64_t n, int64_t ci,
                        int64_t co, int64_t hw, T* gw, T* gb) {
#pragma omp parallel for
  for (int64_t o = 0; o < co; ++o) {
    for (int64_t i = 0; i < ci; ++i) {
      T acc = T(0);
      for (int64_t nb = 0; nb < n; ++nb) {
        const T* gyr = gy + (nb * co + o) * hw;
        const T* xr = x + (nb * ci + i) * hw;
        for (int64_t p = 0; p < hw; ++p) acc += gyr[p] * xr[p];
      }
      gw[o * ci + i] += acc;
    }
    if (gb) {
      T acc = T(0);
      for (int64_t nb = 0; nb < n; ++nb) {
        const T* gyr = gy + (nb * co + o) * hw;
        for (int64_t p = 0; p < hw; ++p) acc += gyr[p];
      }
      gb[o] += acc;
    }
  }
}

template <class T>
void conv3x3_fwd(const T* x, int64_t n, int64_t ci, int64_t h, int64_t w,
                 const T* wgt, const T* b, int64_t co, int stride, T* y) {
  const int64_t oh = conv_out_extent(h, stride);
  const int64_t ow = conv_out_extent(w, stride);
#pragma omp parallel for collapse(2)
  for (int64_t nb = 0; nb < n; ++nb) {
    for (int64_t o = 0; o < co; ++o) {
      T* yr = y + (nb * co + o) * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox) {
          T acc = b ? b[o] : T(0);
          for (int64_t i = 0; i < ci; ++i) {
            const T* xr = x + (nb * ci + i) * h * w;
            const T* wr = wgt + ((o * ci + i) * 9);
            for (int ky = 0; ky < 3; ++ky) {
              const int64_t iy = oy * stride + ky - 1;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int64_t ix = ox * stride + kx - 1;
                if (ix < 0 || ix >= w) continue;
                acc += wr[ky * 3 + kx] * xr[iy * w + ix];
              }
            }
          }
          yr[oy * ow + ox] = acc;
        }
      }
    }
  }
}

template <class T>
void conv3x3_bwd_input(const T* gy, int64_t n, int64_t co, const T* wgt,
                       int64_t ci, int64_t h, int64_t w, int stride, T* gx) {
  const int64_t oh = conv_out_extent(h, stride);
  const int64_t ow = conv_out_extent(w, stride);
  // gather form: each input cell collects from the outputs that read it
#pragma omp parallel for collapse(2)
  for (int64_t nb = 0; nb < n; ++nb) {
    for (int64_t i = 0; i < ci; ++i) {
      T* gr = gx + (nb * ci + i) * h * w;
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
          T acc = T(0);
          for (int64_t o = 0; o < co; ++o) {
            const T* gyr = gy + (nb * co + o) * oh * ow;
            const T* wr = wgt + ((o * ci + i) * 9);
            for (int ky = 0; ky < 3; ++ky) {
              const int64_t num_y = y + 1 - ky;
              if (num_y % stride != 0) continue;
              const int64_t oy = num_y / stride;
              if (oy < 0 || oy >= oh) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int64_t num_x = xx + 1 - kx;
                if (num_x % stride != 0) continue;
                const int64_t ox = num_x / stride;
                if (ox < 0 || ox >= ow) continue;
                acc += gyr[oy * ow + ox] * wr[ky * 3 + kx];
              }
            }
          }
          gr[y * w + xx] = acc;
        }
      }
    }
  }
}

template <class T>
void conv3x3_bwd_params(const T* x, const T* gy, int64_t n, int64_t ci,
                        int64_t co, int64_t h, int64_t w, int stride, T* gw,
                        T* gb) {
  const int64_t oh = conv_out_extent(h, stride);
  const int64_t ow = conv_out_extent(w, stride);
#pragma omp parallel for collapse(2)
  for (int64_t o = 0; o < co; ++o) {
    for (int64_t i = 0; i < ci; ++i) {
      T* wr = gw + ((o * ci + i) * 9);
      for (int64_t nb = 0; nb < n; ++nb) {
        const T* gyr = gy + (nb * co + o) * oh * ow;
        const T* xr = x + (nb * ci + i) * h * w;
        for (int64_t oy = 0; oy < oh; ++oy) {
          for (int64_t ox = 0; ox < ow; ++ox) {
            const T g = gyr[oy * ow + ox];
            for (int ky = 0; ky < 3; ++ky) {
              const int64_t iy = oy * stride + ky - 1;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int64_t ix = ox * stride + kx - 1;
                if (ix < 0 || ix >= w) continue;
                wr[ky * 3 + kx] += g * xr[iy * w + ix];
              }
            }
          }
        }
      }
    }
  }
  if (gb) {
#pragma omp parallel for
    for (int64_t o = 0; o < co; ++o) {
      T acc = T(0);
      for (int64_t nb = 0; nb < n; ++nb) {
        const T* gyr = gy + (nb * co + o) * oh * ow;
        for (int64_t p = 0; p < oh * ow; ++p) acc += gyr[p];
      }
      gb[o] += acc;
    }
  }
}

template <class T>
void bn2d_stats(const T* x, int64_t n, int64_t c, int64_t hw, double* mean,
                double* var) {
  const int64_t m = n * hw;
#pragma omp parallel for
  for (int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int64_t nb = 0; nb < n; ++nb) {
      const T* xr = x + (nb * c + ch) * hw;
      for (int64_t p = 0; p < hw; ++p) s += static_cast<double>(xr[p]);
    }
    const double mu = s / static_cast<double>(m);
    double v = 0.0;
    for (int64_t nb = 0; nb < n; ++nb) {
      const T* xr = x + (nb * c + ch) * hw;
      for (int64_t p = 0; p < hw; ++p) {
        const double d = static_cast<double>(xr[p]) - mu;
        v += d * d;
      }
    }
    mean[ch] = mu;
    var[ch] = v / static_cast<double>(m);
  }
}

template <class T>
void bn2d_fwd(const T* x, int64_t n, int64_t c, int64_t hw, const double* mean,
              const double* invstd, const T* gamma, const T* beta, T* y,
              T* xhat) {
#pragma omp parallel for collapse(2)
  for (int64_t nb = 0; nb < n; ++nb) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* xr = x + (nb * c + ch) * hw;
      T* yr = y + (nb * c + ch) * hw;
      T* hr = xhat ? xhat + (nb * c + ch) * hw : nullptr;
      const double mu = mean[ch];
      const double is = invstd[ch];
      const T g = gamma[ch];
      const T be = beta[ch];
      for (int64_t p = 0; p < hw; ++p) {
        const T xh = static_cast<T>((static_cast<double>(xr[p]) - mu) * is);
        if (hr) hr[p] = xh;
        yr[p] = g * xh + be;
      }
    }
  }
}

template <class T>
void bn2d_bwd(const T* xhat, const T* gy, int64_t n, int64_t c, int64_t hw,
              const T* gamma, const double* invstd, bool batch_stats, T* gx,
              T* ggamma, T* gbeta) {
  const int64_t m = n * hw;
#pragma omp parallel for
  for (int64_t ch = 0; ch < c; ++ch) {
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int64_t nb = 0; nb < n; ++nb) {
      const T* gr = gy + (nb * c + ch) * hw;
      const T* hr = xhat + (nb * c + ch) * hw;
      for (int64_t p = 0; p < hw; ++p) {
        sum_gy += static_cast<double>(gr[p]);
        sum_gy_xhat += static_cast<double>(gr[p]) * static_cast<double>(hr[p]);
      }
    }
    if (ggamma) ggamma[ch] += static_cast<T>(sum_gy_xhat);
    if (gbeta) gbeta[ch] += static_cast<T>(sum_gy);
    const double gi = static_cast<double>(gamma[ch]) * invstd[ch];
    const double mg = sum_gy / static_cast<double>(m);
    const double mgh = sum_gy_xhat / static_cast<double>(m);
    for (int64_t nb = 0; nb < n; ++nb) {
      const T* gr = gy + (nb * c + ch) * hw;
      const T* hr = xhat + (nb * c + ch) * hw;
      T* gxr = gx + (nb * c + ch) * hw;
      for (int64_t p = 0; p < hw; ++p) {
        if (batch_stats) {
          gxr[p] = static_cast<T>(
              gi * (static_cast<double>(gr[p]) - mg -
                    static_cast<double>(hr[p]) * mgh));
        } else {
          gxr[p] = static_cast<T>(gi * static_cast<double>(gr[p]));
        }
      }
    }
  }
}

template <class T>
void channel_softmax_fwd(const T* x, int64_t n, int64_t c, int64_t hw, T* y) {
#pragma omp parallel for
  for (int64_t idx = 0; idx < n * hw; ++idx) {
    const int64_t nb = idx / hw;
    const int64_t p = idx % hw;
    const T* xn = x + nb * c * hw;
    T* yn = y + nb * c * hw;
    T mx = xn[p];
    for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, xn[ch * hw + p]);
    T denom = T(0);
    for (int64_t ch = 0; ch < c; ++ch) {
      const T e = std::exp(xn[ch * hw + p] - mx);
      yn[ch * hw + p] = e;
      denom += e;
    }
    for (int64_t ch = 0; ch < c; ++ch) yn[ch * hw + p] /= denom;
  }
}

template <class T>
void channel_softmax_bwd(const T* y, const T* gy, int64_t n, int64_t c,
                         int64_t hw, T* gx) {
#pragma omp parallel for
  for (int64_t idx = 0; idx < n * hw; ++idx) {
    const int64_t nb = idx / hw;
    const int64_t p = idx % hw;
    const T* yn = y + nb * c * hw;
    const T* gn = gy + nb * c * hw;
    T* gxn = gx + nb * c * hw;
    T dot = T(0);
    for (int64_t ch = 0; ch < c; ++ch) dot += gn[ch * hw + p] * yn[ch * hw + p];
    for (int64_t ch = 0; ch < c; ++ch)
      gxn[ch * hw + p] = yn[ch * hw + p] * (gn[ch * hw + p] - dot);
  }
}

template <class T>
void gelu_fwd(const T* x, int64_t n, T* y) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    y[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
  }
}

template <class T>
void gelu_bwd(const T* x, const T* gy, int64_t n, T* gx) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(x[i]);
    const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    gx[i] = static_cast<T>(static_cast<double>(gy[i]) * (cdf + v * pdf));
  }
}

template <class T>
void relu_fwd(const T* x, int64_t n, T* y) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* y, const T* gy, int64_t n, T* gx) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) gx[i] = y[i] > T(0) ? gy[i] : T(0);
}

namespace {

template <class T>
inline void sample_axis(double src, int64_t extent, int64_t* i0, int64_t* i1,
                        T* t) {
  const double f = std::floor(src);
  *t = static_cast<T>(src - f);
  int64_t lo = static_cast<int64_t>(f);
  int64_t hi = lo + 1;
  lo = std::clamp<int64_t>(lo, 0, extent - 1);
  hi = std::clamp<int64_t>(hi, 0, extent - 1);
  *i0 = lo;
  *i1 = hi;
}

template <class T>
void bilinear_resize_impl(const T* x, int64_t c, int64_t h, int64_t w, T* y,
                          int64_t oh, int64_t ow) {
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
#pragma omp parallel for collapse(2)
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      const T* xc = x + ch * h * w;
      T* yc = y + ch * oh * ow;
      int64_t y0, y1;
      T ty;
      sample_axis((static_cast<double>(oy) + 0.5) * sy - 0.5, h, &y0, &y1, &ty);
      for (int64_t ox = 0; ox < ow; ++ox) {
        int64_t x0, x1;
        T tx;
        sample_axis((static_cast<double>(ox) + 0.5) * sx - 0.5, w, &x0, &x1,
                    &tx);
        const T a = xc[y0 * w + x0], b = xc[y0 * w + x1];
        const T cc = xc[y1 * w + x0], d = xc[y1 * w + x1];
        const T top = a + tx * (b - a);
        const T bot = cc + tx * (d - cc);
        yc[oy * ow + ox] = top + ty * (bot - top);
      }
    }
  }
}

constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

inline int64_t clamp_idx(int64_t v, int64_t n) {
  return v < 0 ? 0 : (v >= n ? n - 1 : v);
}

}  // namespace

template <class T>
void bilinear_up2x(const T* x, int64_t c, int64_t h, int64_t w, T* y) {
  bilinear_resize_impl(x, c, h, w, y, 2 * h, 2 * w);
}

template <class T>
void bilinear_resize(const T* x, int64_t c, int64_t h, int64_t w, T* y,
                     int64_t oh, int64_t ow) {
  bilinear_resize_impl(x, c, h, w, y, oh, ow);
}

template <class T>
void sobel_fwd(const T* x, int64_t c, int64_t h, int64_t w, T* gx_map,
               T* gy_map) {
#pragma omp parallel for
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* xc = x + ch * h * w;
    T* gxc = gx_map + ch * h * w;
    T* gyc = gy_map + ch * h * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) {
        T ax = T(0), ay = T(0);
        for (int ky = 0; ky < 3; ++ky) {
          const int64_t iy = clamp_idx(y + ky - 1, h);
          for (int kx = 0; kx < 3; ++kx) {
            const int64_t ix = clamp_idx(xx + kx - 1, w);
            const T v = xc[iy * w + ix];
            ax += static_cast<T>(kSobelX[ky][kx]) * v;
            ay += static_cast<T>(kSobelY[ky][kx]) * v;
          }
        }
        gxc[y * w + xx] = ax;
        gyc[y * w + xx] = ay;
      }
    }
  }
}

template <class T>
void sobel_bwd_abs(const T* gx_map, const T* gy_map, const uint8_t* fg,
                   int64_t c, int64_t h, int64_t w, T scale, T* gin) {
  // channels are disjoint, so the per-channel scatter is race-free
#pragma omp parallel for
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* gxc = gx_map + ch * h * w;
    const T* gyc = gy_map + ch * h * w;
    T* gc = gin + ch * h * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) {
        if (fg && !fg[y * w + xx]) continue;
        const T vx = gxc[y * w + xx];
        const T vy = gyc[y * w + xx];
        const T sx = vx > T(0) ? scale : (vx < T(0) ? -scale : T(0));
        const T sy = vy > T(0) ? scale : (vy < T(0) ? -scale : T(0));
        for (int ky = 0; ky < 3; ++ky) {
          const int64_t iy = clamp_idx(y + ky - 1, h);
          for (int kx = 0; kx < 3; ++kx) {
            const int64_t ix = clamp_idx(xx + kx - 1, w);
            gc[iy * w + ix] += sx * static_cast<T>(kSobelX[ky][kx]) +
                               sy * static_cast<T>(kSobelY[ky][kx]);
          }
        }
      }
    }
  }
}

template <class T>
void pairwise_part_distance(const T* a, int64_t na, const T* b, int64_t nb,
                            int64_t parts, int64_t dim, T* dist) {
#pragma omp parallel for collapse(2)
  for (int64_t i = 0; i < na; ++i) {
    for (int64_t j = 0; j < nb; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < parts; ++p) {
        const T* ap = a + (i * parts + p) * dim;
        const T* bp = b + (j * parts + p) * dim;
        double sq = 0.0;
        for (int64_t d = 0; d < dim; ++d) {
          const double diff =
              static_cast<double>(ap[d]) - static_cast<double>(bp[d]);
          sq += diff * diff;
        }
        acc += std::sqrt(sq);
      }
      dist[i * nb + j] = static_cast<T>(acc / static_cast<double>(parts));
    }
  }
}

#define GREGAIT_INSTANTIATE(T)                                                 \
  template void conv1x1_fwd<T>(const T*, int64_t, int64_t, int64_t, const T*, \
                               const T*, int64_t, T*);                         \
  template void conv1x1_bwd_input<T>(const T*, int64_t, int64_t, int64_t,     \
                                     const T*, int64_t, T*);                   \
  template void conv1x1_bwd_params<T>(const T*, const T*, int64_t, int64_t,   \
                                      int64_t, int64_t, T*, T*);               \
  template void conv3x3_fwd<T>(const T*, int64_t, int64_t, int64_t, int64_t,  \
                               const T*, const T*, int64_t, int, T*);          \
  template void conv3x3_bwd_input<T>(const T*, int64_t, int64_t, const T*,    \
                                     int64_t, int64_t, int64_t, int, T*);      \
  template void conv3x3_bwd_params<T>(const T*, const T*, int64_t, int64_t,   \
                                      int64_t, int64_t, int64_t, int, T*,     \
                                      T*);                                     \
  template void bn2d_stats<T>(const T*, int64_t, int64_t, int64_t, double*,   \
                              double*);                                        \
  template void bn2d_fwd<T>(const T*, int64_t, int64_t, int64_t,              \
                            const double*, const double*, const T*, const T*, \
                            T*, T*);                                           \
  template void bn2d_bwd<T>(const T*, const T*, int64_t, int64_t, int64_t,    \
                            const T*, const double*, bool, T*, T*, T*);        \
  template void channel_softmax_fwd<T>(const T*, int64_t, int64_t, int64_t,   \
                                       T*);                                    \
  template void channel_softmax_bwd<T>(const T*, const T*, int64_t, int64_t,  \
                                       int64_t, T*);                           \
  template void gelu_fwd<T>(const T*, int64_t, T*);                           \
  template void gelu_bwd<T>(const T*, const T*, int64_t, T*);                 \
  template void relu_fwd<T>(const T*, int64_t, T*);                           \
  template void relu_bwd<T>(const T*, const T*, int64_t, T*);                 \
  template void bilinear_up2x<T>(const T*, int64_t, int64_t, int64_t, T*);    \
  template void bilinear_resize<T>(const T*, int64_t, int64_t, int64_t, T*,   \
                                   int64_t, int64_t);                          \
  template void sobel_fwd<T>(const T*, int64_t, int64_t, int64_t, T*, T*);    \
  template void sobel_bwd_abs<T>(const T*, const T*, const uint8_t*, int64_t, \
                                 int64_t, int64_t, T, T*);                     \
  template void pairwise_part_distance<T>(const T*, int64_t, const T*,        \
                                          int64_t, int64_t, int64_t, T*);

GREGAIT_INSTANTIATE(float)
GREGAIT_INSTANTIATE(double)
#undef GREGAIT_INSTANTIATE

}  // namespace par
}  // namespace gregait
