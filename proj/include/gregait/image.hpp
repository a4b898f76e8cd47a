#pragma once

#include <string>

#include "gregait/tensor.hpp"

namespace gregait {

// Images are [3, H, W] float tensors with values in [0, 1].
using ImageF = Tensor<float>;

ImageF read_image(const std::string& path);          // PNG, PPM (P6) or PGM (P5)
void write_png(const std::string& path, const ImageF& img);
void write_png_gray(const std::string& path, const Tensor<float>& map);

// Equalize the aspect ratio to target_h:target_w by symmetric zero padding
// on the short axis (odd remainder goes to bottom/right), then bilinear
// resize. Never crops or stretches the content.
ImageF pad_and_resize(const ImageF& img, int64_t target_h = 448,
                      int64_t target_w = 224);

// Plain bilinear resize (stretches the content; the ablation baseline).
ImageF resize_image(const ImageF& img, int64_t target_h, int64_t target_w);

}  // namespace gregait
