#pragma once

#include <string>

#include "gregait/model.hpp"

namespace gregait {

// Gradient-weighted activation map at one of the head's spatial taps
// (head-B1-ap, head-B1-de, head-fused) for the label-free target
// "squared norm of the pooled pre-BN embedding". Per frame, channel
// weights are the spatial gradient means; the rectified weighted sum is
// averaged over frames, bilinearly upsampled to (out_h, out_w) and min-max
// normalized to [0,1] (an all-zero map stays zero).
TensorF grad_cam(GaitModel& model, const SequenceRecord& rec,
                 const std::string& layer, int64_t out_h, int64_t out_w);

// core step, exposed for tests: act/grad [L, C, h, w] -> [h, w]
TensorF cam_from_activation(const TensorF& act, const TensorF& grad);

}  // namespace gregait
