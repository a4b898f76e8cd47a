#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gregait/image.hpp"
#include "gregait/tensor.hpp"

namespace gregait {


// Frozen upstream configuration. The reference geometry is a ViT-S/14:
// 448x224 input, patch 14 -> 32x16 token grid, embed 384, 12 blocks.
// Desk-scale test configs shrink embed_dim; the grid never changes.
struct BackboneSpec {
  std::string provider = "synthetic";  // "synthetic" | "lvm-adapter"
  int64_t num_blocks = 12;
  int64_t embed_dim = 384;
  int64_t patch = 14;
  int64_t input_h = 448;
  int64_t input_w = 224;
  uint64_t seed = 17;
  double noise_sigma = 0.05;
  bool swap_clusters = false;   // test hook: exchange fg/bg cluster centers
  std::string cache_dir;        // lvm-adapter feature root (or $GREGAIT_CACHE_DIR)

  int64_t grid_h() const { return input_h / patch; }
  int64_t grid_w() const { return input_w / patch; }
};

// last block of each of k equal partitions: ceil(i*num_blocks/k), i=1..k
std::vector<int64_t> select_tap_layers(int64_t num_blocks, int64_t k = 4);

// A provider is immutable after construction (frozen contract): extract is
// a pure function of the frame, and param_hash() must not change over the
// provider's lifetime.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string name() const = 0;
  virtual int64_t embed_dim() const = 0;
  virtual int64_t grid_h() const = 0;
  virtual int64_t grid_w() const = 0;
  // four tap-level maps, lowest first, each [E, grid_h, grid_w]. The
  // synthetic provider computes from the frame pixels; the lvm-adapter
  // looks the frame path up in its feature cache.
  virtual std::vector<TensorF> extract(const std::string& frame_path,
                                       const ImageF& frame) const = 0;
  virtual uint64_t param_hash() const = 0;
};

std::unique_ptr<FeatureProvider> make_provider(const BackboneSpec& spec);

std::vector<TensorF> extract_multilevel(const std::string& frame_path,
                                        const ImageF& frame,
                                        const FeatureProvider& provider);

// 2x bilinear upsample of each level, then channel concat in level order:
// four [E, gh, gw] maps -> [4E, 2*gh, 2*gw]
TensorF upsample_concat(const std::vector<TensorF>& levels);

// Per-sequence/per-frame binary blob: one JSON header line
// {"dtype":"f32","shape":[...],"tag":"..."} followed by the little-endian
// float payload in C order.
void write_feature_cache(const std::string& path, const TensorF& t,
                         const std::string& tag);
TensorF read_feature_cache(const std::string& path, std::string* tag = nullptr);

// where the lvm-adapter looks for one frame's cached tap grids
std::string feature_cache_path(const std::string& cache_dir,
                               const std::string& frame_path);

}  // namespace gregait
