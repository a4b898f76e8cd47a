#pragma once

#include <cstdint>

#include "gregait/common.hpp"

// Dense compute kernels. Every kernel exists twice with the same
// signature: gregait::ref holds the serial reference loops, gregait::par
// the OpenMP versions. The dispatch wrappers in gregait::kernels pick one
// based on the global execution mode. Parallel reductions accumulate into
// per-output or fixed-block partials so results do not depend on the
// thread count.
//
// Layout conventions: activations are [N, C, H*W] row-major ("hw" is the
// flattened spatial extent), conv3x3 takes [N, C, H, W] with zero padding
// of 1, weights are [Co, Ci] for 1x1 and [Co, Ci, 3, 3] for 3x3.

namespace gregait {

// output extent of a 3x3 conv with padding 1 at the given stride
int64_t conv_out_extent(int64_t n, int stride);

#define GREGAIT_KERNEL_DECLS                                                  \
  template <class T>                                                           \
  void conv1x1_fwd(const T* x, int64_t n, int64_t ci, int64_t hw, const T* w,  \
                   const T* b, int64_t co, T* y);                              \
  template <class T>                                                           \
  void conv1x1_bwd_input(const T* gy, int64_t n, int64_t co, int64_t hw,       \
                         const T* w, int64_t ci, T* gx);                       \
  template <class T>                                                           \
  void conv1x1_bwd_params(const T* x, const T* gy, int64_t n, int64_t ci,      \
                          int64_t co, int64_t hw, T* gw, T* gb);               \
  template <class T>                                                           \
  void conv3x3_fwd(const T* x, int64_t n, int64_t ci, int64_t h, int64_t w,    \
                   const T* wgt, const T* b, int64_t co, int stride, T* y);    \
  template <class T>                                                           \
  void conv3x3_bwd_input(const T* gy, int64_t n, int64_t co, const T* wgt,     \
                         int64_t ci, int64_t h, int64_t w, int stride, T* gx); \
  template <class T>                                                           \
  void conv3x3_bwd_params(const T* x, const T* gy, int64_t n, int64_t ci,      \
                          int64_t co, int64_t h, int64_t w, int stride, T* gw, \
                          T* gb);                                              \
  template <class T>                                                           \
  void bn2d_stats(const T* x, int64_t n, int64_t c, int64_t hw, double* mean,  \
                  double* var);                                                \
  template <class T>                                                           \
  void bn2d_fwd(const T* x, int64_t n, int64_t c, int64_t hw,                  \
                const double* mean, const double* invstd, const T* gamma,      \
                const T* beta, T* y, T* xhat);                                 \
  template <class T>                                                           \
  void bn2d_bwd(const T* xhat, const T* gy, int64_t n, int64_t c, int64_t hw,  \
                const T* gamma, const double* invstd, bool batch_stats, T* gx, \
                T* ggamma, T* gbeta);                                          \
  template <class T>                                                           \
  void channel_softmax_fwd(const T* x, int64_t n, int64_t c, int64_t hw,       \
                           T* y);                                              \
  template <class T>                                                           \
  void channel_softmax_bwd(const T* y, const T* gy, int64_t n, int64_t c,      \
                           int64_t hw, T* gx);                                 \
  template <class T>                                                           \
  void gelu_fwd(const T* x, int64_t n, T* y);                                  \
  template <class T>                                                           \
  void gelu_bwd(const T* x, const T* gy, int64_t n, T* gx);                    \
  template <class T>                                                           \
  void relu_fwd(const T* x, int64_t n, T* y);                                  \
  template <class T>                                                           \
  void relu_bwd(const T* y, const T* gy, int64_t n, T* gx);                    \
  template <class T>                                                           \
  void bilinear_up2x(const T* x, int64_t c, int64_t h, int64_t w, T* y);       \
  template <class T>                                                           \
  void bilinear_resize(const T* x, int64_t c, int64_t h, int64_t w, T* y,      \
                       int64_t oh, int64_t ow);                                \
  template <class T>                                                           \
  void sobel_fwd(const T* x, int64_t c, int64_t h, int64_t w, T* gx_map,       \
                 T* gy_map);                                                   \
  template <class T>                                                           \
  void sobel_bwd_abs(const T* gx_map, const T* gy_map, const uint8_t* fg,      \
                     int64_t c, int64_t h, int64_t w, T scale, T* gin);        \
  template <class T>                                                           \
  void pairwise_part_distance(const T* a, int64_t na, const T* b, int64_t nb,  \
                              int64_t parts, int64_t dim, T* dist);

namespace ref {
GREGAIT_KERNEL_DECLS
}
namespace par {
GREGAIT_KERNEL_DECLS
}

#undef GREGAIT_KERNEL_DECLS

namespace kernels {

#define GREGAIT_DISPATCH(fn, ...)                       \
  do {                                                  \
    if (exec_mode() == Exec::Serial)                    \
      ref::fn(__VA_ARGS__);                             \
    else                                                \
      par::fn(__VA_ARGS__);                             \
  } while (0)

template <class T>
void conv1x1_fwd(const T* x, int64_t n, int64_t ci, int64_t hw, const T* w,
                 const T* b, int64_t co, T* y) {
  GREGAIT_DISPATCH(conv1x1_fwd, x, n, ci, hw, w, b, co, y);
}
template <class T>
void conv1x1_bwd_input(const T* gy, int64_t n, int64_t co, int64_t hw,
                       const T* w, int64_t ci, T* gx) {
  GREGAIT_DISPATCH(conv1x1_bwd_input, gy, n, co, hw, w, ci, gx);
}
template <class T>
void conv1x1_bwd_params(const T* x, const T* gy, int64_t n, int64_t ci,
                        int64_t co, int64_t hw, T* gw, T* gb) {
  GREGAIT_DISPATCH(conv1x1_bwd_params, x, gy, n, ci, co, hw, gw, gb);
}
template <class T>
void conv3x3_fwd(const T* x, int64_t n, int64_t ci, int64_t h, int64_t w,
                 const T* wgt, const T* b, int64_t co, int stride, T* y) {
  GREGAIT_DISPATCH(conv3x3_fwd, x, n, ci, h, w, wgt, b, co, stride, y);
}
template <class T>
void conv3x3_bwd_input(const T* gy, int64_t n, int64_t co, const T* wgt,
                       int64_t ci, int64_t h, int64_t w, int stride, T* gx) {
  GREGAIT_DISPATCH(conv3x3_bwd_input, gy, n, co, wgt, ci, h, w, stride, gx);
}
template <class T>
void conv3x3_bwd_params(const T* x, const T* gy, int64_t n, int64_t ci,
                        int64_t co, int64_t h, int64_t w, int stride, T* gw,
                        T* gb) {
  GREGAIT_DISPATCH(conv3x3_bwd_params, x, gy, n, ci, co, h, w, stride, gw, gb);
}
template <class T>
void bn2d_stats(const T* x, int64_t n, int64_t c, int64_t hw, double* mean,
                double* var) {
  GREGAIT_DISPATCH(bn2d_stats, x, n, c, hw, mean, var);
}
template <class T>
void bn2d_fwd(const T* x, int64_t n, int64_t c, int64_t hw, const double* mean,
              const double* invstd, const T* gamma, const T* beta, T* y,
              T* xhat) {
  GREGAIT_DISPATCH(bn2d_fwd, x, n, c, hw, mean, invstd, gamma, beta, y, xhat);
}
template <class T>
void bn2d_bwd(const T* xhat, const T* gy, int64_t n, int64_t c, int64_t hw,
              const T* gamma, const double* invstd, bool batch_stats, T* gx,
              T* ggamma, T* gbeta) {
  GREGAIT_DISPATCH(bn2d_bwd, xhat, gy, n, c, hw, gamma, invstd, batch_stats,
                   gx, ggamma, gbeta);
}
template <class T>
void channel_softmax_fwd(const T* x, int64_t n, int64_t c, int64_t hw, T* y) {
  GREGAIT_DISPATCH(channel_softmax_fwd, x, n, c, hw, y);
}
template <class T>
void channel_softmax_bwd(const T* y, const T* gy, int64_t n, int64_t c,
                         int64_t hw, T* gx) {
  GREGAIT_DISPATCH(channel_softmax_bwd, y, gy, n, c, hw, gx);
}
template <class T>
void gelu_fwd(const T* x, int64_t n, T* y) {
  GREGAIT_DISPATCH(gelu_fwd, x, n, y);
}
template <class T>
void gelu_bwd(const T* x, const T* gy, int64_t n, T* gx) {
  GREGAIT_DISPATCH(gelu_bwd, x, gy, n, gx);
}
template <class T>
void relu_fwd(const T* x, int64_t n, T* y) {
  GREGAIT_DISPATCH(relu_fwd, x, n, y);
}
template <class T>
void relu_bwd(const T* y, const T* gy, int64_t n, T* gx) {
  GREGAIT_DISPATCH(relu_bwd, y, gy, n, gx);
}
template <class T>
void bilinear_up2x(const T* x, int64_t c, int64_t h, int64_t w, T* y) {
  GREGAIT_DISPATCH(bilinear_up2x, x, c, h, w, y);
}
template <class T>
void bilinear_resize(const T* x, int64_t c, int64_t h, int64_t w, T* y,
                     int64_t oh, int64_t ow) {
  GREGAIT_DISPATCH(bilinear_resize, x, c, h, w, y, oh, ow);
}
template <class T>
void sobel_fwd(const T* x, int64_t c, int64_t h, int64_t w, T* gx_map,
               T* gy_map) {
  GREGAIT_DISPATCH(sobel_fwd, x, c, h, w, gx_map, gy_map);
}
template <class T>
void sobel_bwd_abs(const T* gx_map, const T* gy_map, const uint8_t* fg,
                   int64_t c, int64_t h, int64_t w, T scale, T* gin) {
  GREGAIT_DISPATCH(sobel_bwd_abs, gx_map, gy_map, fg, c, h, w, scale, gin);
}
template <class T>
void pairwise_part_distance(const T* a, int64_t na, const T* b, int64_t nb,
                            int64_t parts, int64_t dim, T* dist) {
  GREGAIT_DISPATCH(pairwise_part_distance, a, na, b, nb, parts, dim, dist);
}

#undef GREGAIT_DISPATCH

}  // namespace kernels
}  // namespace gregait
