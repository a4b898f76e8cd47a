#include "gregait/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "gregait/kernels.hpp"

namespace gregait {

TensorF cam_from_activation(const TensorF& act, const TensorF& grad) {
  GG_CHECK(act.same_shape(grad) && act.ndim() == 4,
           "activation/gradient shape mismatch");
  const int64_t l = act.shape(0), c = act.shape(1);
  const int64_t h = act.shape(2), w = act.shape(3), hw = h * w;
  TensorF map({h, w});
  std::vector<double> wgt(static_cast<size_t>(c));
  for (int64_t f = 0; f < l; ++f) {
    // channel weights: spatial means of the gradient
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0;
      const float* gp = grad.data() + (f * c + ch) * hw;
      for (int64_t k = 0; k < hw; ++k) acc += gp[k];
      wgt[static_cast<size_t>(ch)] = acc / hw;
    }
    for (int64_t i = 0; i < hw; ++i) {
      double acc = 0;
      for (int64_t ch = 0; ch < c; ++ch)
        acc += wgt[static_cast<size_t>(ch)] * act[(f * c + ch) * hw + i];
      if (acc > 0) map[i] += static_cast<float>(acc / l);
    }
  }
  return map;
}

TensorF grad_cam(GaitModel& model, const SequenceRecord& rec,
                 const std::string& layer, int64_t out_h, int64_t out_w) {
  GG_CHECK(layer == "head-B1-ap" || layer == "head-B1-de" ||
               layer == "head-fused",
           "unknown activation layer '" << layer << "'");
  GG_CHECK(!rec.frames.empty(), "sequence has no frames");

  TensorF fc = model.sequence_features(rec, {});
  auto fwd = model.forward(fc, 1, fc.shape(0), /*training=*/false);

  // d(||emb||^2)/d(emb) = 2*emb on the pre-BN embeddings
  TensorF g_emb(fwd.head.emb.shape());
  for (int64_t i = 0; i < g_emb.numel(); ++i)
    g_emb[i] = 2.0f * fwd.head.emb[i];

  TensorF g_ap, g_de, g_fused;
  model.head().taps_gradient(g_emb, g_ap, g_de, g_fused);

  const TensorF* act = nullptr;
  const TensorF* grad = nullptr;
  if (layer == "head-B1-ap") {
    act = &model.head().tap_b1_ap();
    grad = &g_ap;
  } else if (layer == "head-B1-de") {
    act = &model.head().tap_b1_de();
    grad = &g_de;
  } else {
    act = &model.head().tap_fused();
    grad = &g_fused;
  }
  GG_CHECK(act->numel() > 0,
           "layer " << layer << " is inactive under streams="
                    << model.config().streams);

  TensorF map = cam_from_activation(*act, *grad);

  TensorF up({out_h, out_w});
  kernels::bilinear_resize(map.data(), 1, map.shape(0), map.shape(1),
                           up.data(), out_h, out_w);
  float lo = up[0], hi = up[0];
  for (int64_t i = 1; i < up.numel(); ++i) {
    lo = std::min(lo, up[i]);
    hi = std::max(hi, up[i]);
  }
  if (hi > lo) {
    for (int64_t i = 0; i < up.numel(); ++i) up[i] = (up[i] - lo) / (hi - lo);
  } else if (hi != 0.0f) {
    up.fill(1.0f);  // constant nonzero map
  }
  return up;
}

}  // namespace gregait
