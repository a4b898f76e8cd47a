#pragma once

#include <array>
#include <string>
#include <vector>

#include "gregait/layers.hpp"
#include "gregait/tensor.hpp"

// Recognition head. Two parallel shallow stems (one per representation
// stream) feed a learned per-channel two-way selection, then a small
// residual trunk, frame pooling over each sequence, horizontal strip
// pooling, per-strip embeddings, and a BN neck whose post-BN side drives
// bias-free per-strip classifiers. Metric losses and evaluation read the
// pre-BN embeddings.

namespace gregait {

struct HeadConfig {
  int64_t in_channels = 16;
  std::array<int64_t, 4> widths = {64, 64, 128, 256};
  int64_t parts = 16;
  int64_t dim = 256;        // per-part embedding width
  int64_t num_classes = 0;  // 0 disables the classifier branch
  std::string streams = "dual";  // dual | ap | de
  std::string pool = "max";      // frame pooling: max | meanmax
  uint64_t seed = 2;
};

// per-channel two-way gate between the two stream activations
template <class T>
class CrossSelect {
 public:
  void setup(const std::string& name, int64_t c, SplitMix64& rng);
  // a, b [N, C, H, W]
  Tensor<T> forward(const Tensor<T>& a, const Tensor<T>& b);
  void backward(const Tensor<T>& gy, Tensor<T>& ga, Tensor<T>& gb);
  void collect(ParamRefs<T>& out);
  // gate weights of the last forward, [N, C] each (for visualization)
  const Tensor<T>& gate_a() const { return wa_; }

 private:
  int64_t c_ = 0;
  Linear<T> squeeze_, excite_a_, excite_b_;
  ReLU<T> relu_;
  Tensor<T> a_, b_, wa_, wb_;
};

template <class T>
class Head {
 public:
  explicit Head(const HeadConfig& cfg);

  struct Output {
    Tensor<T> emb;     // pre-BN embeddings [B, P, D]
    Tensor<T> logits;  // [B, P, K] (empty when num_classes == 0)
  };

  // x_ap/x_de are [B*L, C, H, W] with frames of each sequence contiguous;
  // unused streams may be empty tensors.
  Output forward(const Tensor<T>& x_ap, const Tensor<T>& x_de, int64_t b,
                 int64_t l, bool training);

  // g_emb [B,P,D] on the pre-BN embeddings, g_logits [B,P,K] (may be empty);
  // returns gradients for the stream inputs (empty for unused streams)
  void backward(const Tensor<T>& g_emb, const Tensor<T>& g_logits,
                Tensor<T>& gx_ap, Tensor<T>& gx_de);

  void collect(ParamRefs<T>& out);
  void collect_bn(std::vector<BatchNorm2d<T>*>& out);

  const HeadConfig& config() const { return cfg_; }

  // spatial feature taps of the last forward, for attribution maps
  const Tensor<T>& tap_b1_ap() const { return tap_ap_; }
  const Tensor<T>& tap_b1_de() const { return tap_de_; }
  const Tensor<T>& tap_fused() const { return tap_fused_; }
  // gradient of a pre-BN embedding functional at each tap; unused-stream
  // outputs come back empty. Must follow a forward on the same batch.
  void taps_gradient(const Tensor<T>& g_emb, Tensor<T>& g_tap_ap,
                     Tensor<T>& g_tap_de, Tensor<T>& g_tap_fused);

 private:
  Tensor<T> trunk_forward(const Tensor<T>& fused, int64_t b, int64_t l,
                          bool training);
  Tensor<T> trunk_backward(const Tensor<T>& g_emb_total);
  Tensor<T> stem_forward(int which, const Tensor<T>& x, bool training);
  Tensor<T> stem_backward(int which, const Tensor<T>& g);

  HeadConfig cfg_;
  bool use_ap_ = true, use_de_ = true;

  // per-stream stems: conv-bn-relu + one residual block
  Conv3x3<T> stem_conv_[2];
  BatchNorm2d<T> stem_bn_[2];
  ReLU<T> stem_relu_[2];
  BasicBlock<T> stem_block_[2];
  CrossSelect<T> fuse_;
  BasicBlock<T> b2_, b3_, b4_;

  Param<T> part_fc_;   // [P, D, W4]
  BatchNorm2d<T> neck_bn_;
  Param<T> cls_;       // [P, K, D]

  // caches
  int64_t b_ = 0, l_ = 0;
  int64_t fh_ = 0, fw_ = 0;             // spatial extent after b4
  Tensor<T> trunk_out_;                 // [B*L, W4, fh, fw]
  std::vector<int64_t> frame_argmax_;   // frame index per pooled element
  Tensor<T> pooled_;                    // [B, W4, fh, fw]
  std::vector<int64_t> strip_lo_, strip_hi_;
  std::vector<int64_t> strip_argmax_;   // flat spatial argmax per [B,W4,P]
  Tensor<T> strips_;                    // [B, P, W4] (mean+max per strip)
  Tensor<T> emb_pre_, emb_post_;
  Tensor<T> tap_ap_, tap_de_, tap_fused_;
  bool training_ = false;
};

using HeadF = Head<float>;

}  // namespace gregait
