#pragma once

#include <cstdint>
#include <string>

#include "gregait/image.hpp"
#include "gregait/manifest.hpp"

namespace gregait {

// Procedurally rendered walking-figure frames addressed by synth:// URIs,
// so manifests need no image files on disk. Identity is encoded in body
// proportions, "view" scales silhouette width (camera azimuth stand-in),
// and "cond" switches both clothing colors and the background theme.

struct SynthFrameDesc {
  int64_t id = 0;
  int64_t view = 0;   // index into width-scale table
  int64_t cond = 0;   // 0 or 1
  int64_t seq = 0;
  int64_t frame = 0;  // gait-cycle position
  int64_t total = 8;  // frames per cycle
  double bright = 0.0;  // additive brightness offset (domain shift), clamped
};

bool synth_uri(const std::string& path);
SynthFrameDesc parse_synth_uri(const std::string& uri);
std::string make_synth_uri(const SynthFrameDesc& d);

ImageF render_synth_frame(const std::string& uri);  // [3,448,224]
ImageF render_synth_frame(const SynthFrameDesc& d);
Tensor<uint8_t> render_synth_mask(const SynthFrameDesc& d);  // [448,224] fg=1

// tight bounding box of the figure: (y0, x0, y1, x1), inclusive
void synth_figure_bbox(const SynthFrameDesc& d, int64_t* y0, int64_t* x0,
                       int64_t* y1, int64_t* x1);

struct SynthDatasetSpec {
  int64_t n_ids = 20;
  int64_t n_views = 4;
  int64_t n_conds = 2;
  int64_t frames = 8;
  int64_t train_ids = 10;    // ids [0, train_ids) form the train split
  int64_t holdout_view = 2;  // probe view, excluded from training entirely
  double bright = 0.0;
  std::string name = "synth";
};

// Train: train ids x non-holdout views x all conds.
// Gallery: test ids x non-holdout views x cond 0.
// Probe: test ids x holdout view x all conds.
DatasetManifest make_synth_manifest(const SynthDatasetSpec& spec);

}  // namespace gregait
