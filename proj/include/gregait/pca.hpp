#pragma once

#include <cstdint>
#include <vector>

#include "gregait/tensor.hpp"

namespace gregait {

// Top-3 principal directions of pixel-wise feature vectors, fitted over a
// collection of [C, H, W] maps. Directions are unit-norm and mutually
// orthogonal; the sign convention makes each direction's largest-magnitude
// coordinate positive. Rank-deficient inputs flag the missing directions
// instead of failing.
struct PCABasis {
  int64_t channels = 0;
  std::vector<double> mean;                  // [C]
  std::vector<std::vector<double>> dirs;     // 3 x [C]
  std::vector<double> var_fraction;          // 3, of total variance
  std::vector<bool> zero_variance;           // 3
};

// Fits on at most max_pixels feature pixels, subsampled uniformly under
// `seed` when the collection is larger. Requires >= 3 pixels total.
PCABasis fit_pca(const std::vector<const TensorF*>& maps, uint64_t seed = 0,
                 int64_t max_pixels = 2000000);

// Projects each pixel of one [C, H, W] map onto the basis and min-max
// normalizes each projection channel over the image to [0, 255]. A
// constant (or variance-flagged) channel renders as mid-gray 128.
Tensor<uint8_t> render_pca_rgb(const TensorF& fmap, const PCABasis& basis);

}  // namespace gregait
