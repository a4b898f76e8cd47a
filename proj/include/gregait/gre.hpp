#pragma once

#include <cstdint>
#include <vector>

#include "gregait/layers.hpp"
#include "gregait/tensor.hpp"

// Unsupervised representation extractor sitting between the frozen feature
// backbone and the recognition head. Three branches over the concatenated
// multi-level feature map f_c [N, 4E, H, W]:
//   mask:       two-channel soft assignment trained by reconstructing the
//               deepest level from the assignment alone
//   appearance: linear channel mixdown of the foreground-masked features
//   denoising:  small bottleneck conv stack with channel softmax, regularized
//               by a smoothness and a diversity penalty
// The binary foreground mask is a constant in the downstream graph: only the
// reconstruction loss trains the mask branch.

namespace gregait {

// Threshold a soft foreground map at 0.5 and apply a 3x3 morphological
// closing (dilate then erode, all-ones structuring element). Erosion takes
// the min over in-bounds neighbors only, so a fully-set map stays fully set.
void binarize_close(const float* soft, int64_t h, int64_t w, uint8_t* out);

// Pick which of the two assignment channels is the foreground: score each
// channel by the Gaussian-center-weighted mean of its binarized mask
// (sigma_y = H/4, sigma_x = W/4, peak 1 at the center). All-zero masks score
// 0; ties resolve to channel 0. Returns 0 or 1.
int select_foreground_channel(const uint8_t* m0, const uint8_t* m1, int64_t h,
                              int64_t w);

// Diversity objective for one frame: p[i] = foreground-aggregated mass of
// channel i (normalized over channels), value = sum_i p_i * log(C * p_i)
// with 0*log0 := 0, clamped into [0, log C]. Uniform p gives 0, one-hot
// gives log C, both exactly.
double diversity_value(const double* p, int64_t c);

// Mean over foreground pixels (all frames pooled) of the per-pixel channel
// entropy -sum_c q_c log q_c of a channel-softmax map [N, C, H, W]. The
// collapse diagnostic: uniform channels give log C, one-hot channels 0.
double mean_pixel_entropy(const TensorF& f_de, const std::vector<uint8_t>& fg);

template <class T>
struct GREConfig {
  int64_t embed = 384;  // per-level backbone width E; input has 4E channels
  int64_t c_out = 16;   // output channels C of appearance/denoise branches
  int64_t c_mid = 256;  // denoise encoder hidden width
  T gamma_rec = T(1);
  T gamma_smo = T(0.01);
  T gamma_div = T(5);
  bool disable_mask = false;  // ablation: skip masking, losses use full frame
  uint64_t seed = 1;
};

template <class T>
class GRE {
 public:
  explicit GRE(const GREConfig<T>& cfg);

  struct Output {
    Tensor<T> f_ap;            // [N, C, H, W]
    Tensor<T> f_de;            // [N, C, H, W]
    std::vector<uint8_t> fg;   // [N, H, W] binary foreground
    double l_rec = 0, l_smo = 0, l_div = 0;
  };

  // f_c [N, 4E, H, W]; training toggles BN mode in the denoise encoder
  Output forward(const Tensor<T>& f_c, bool training);

  // gy_* are d(total)/d(f_ap), d(total)/d(f_de) from the head; the loss
  // gradients (scaled by the gammas) are folded in internally. The input
  // features are frozen so nothing is returned.
  void backward(const Tensor<T>& gy_ap, const Tensor<T>& gy_de);

  void collect(ParamRefs<T>& out);
  void collect_bn(std::vector<BatchNorm2d<T>*>& out);

  const GREConfig<T>& config() const { return cfg_; }

  // exposed for pre-training visualization and unit tests
  Conv1x1<T>& mask_encoder() { return enc_; }
  BatchNorm2d<T>& denoise_bn() { return de_bn_; }

 private:
  GREConfig<T> cfg_;
  Conv1x1<T> enc_, dec_;   // mask branch: E->2 and 2->E on the deepest tap
  ChannelSoftmax<T> mask_sm_;
  Conv1x1<T> ap_;          // appearance: 4E->C, with bias
  Conv1x1<T> de1_, de2_;   // denoise encoder convs
  BatchNorm2d<T> de_bn_;
  GELU<T> de_gelu_;
  ChannelSoftmax<T> de_sm_;

  // forward caches for the loss backward
  Tensor<T> f4_, f4_rec_, f_m_;
  std::vector<uint8_t> fg_;
  std::vector<int64_t> n_fg_;              // per frame
  Tensor<T> sobel_gx_, sobel_gy_;          // per frame-channel maps
  std::vector<double> div_grad_;           // [N, C] d l_div / d s_i (unscaled)
  int64_t n_ = 0, h_ = 0, w_ = 0;
  bool training_ = false;
};

using GREF = GRE<float>;
using GRED = GRE<double>;

}  // namespace gregait
