#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gregait/backbone.hpp"
#include "gregait/config.hpp"
#include "gregait/gre.hpp"
#include "gregait/head.hpp"
#include "gregait/manifest.hpp"

namespace gregait {

// Full pipeline above the frozen feature provider: representation
// extractor (optional, see bypass) plus recognition head, with the frame
// loading / feature assembly glue both the trainer and the evaluator use.
class GaitModel {
 public:
  GaitModel(const RunConfig& cfg, int64_t num_classes);

  // [L, 4E, 2*gh, 2*gw] multi-level features for the chosen frames of one
  // sequence; idx empty means all frames
  TensorF sequence_features(const SequenceRecord& rec,
                            const std::vector<int64_t>& idx) const;

  struct ForwardOut {
    Head<float>::Output head;
    double l_rec = 0, l_smo = 0, l_div = 0;
    // foreground fraction of the batch, diagnostic only
    double fg_fraction = 1.0;
  };

  // fc [B*L, 4E, H, W] -> embeddings/logits plus extractor losses
  ForwardOut forward(const TensorF& fc, int64_t b, int64_t l, bool training);
  void backward(const TensorF& g_emb, const TensorF& g_logits);

  ParamRefs<float> params();
  std::vector<BatchNorm2d<float>*> bns();

  const RunConfig& config() const { return cfg_; }
  const FeatureProvider& provider() const { return *provider_; }
  GRE<float>* gre() { return gre_.get(); }
  Head<float>& head() { return *head_; }
  int64_t num_classes() const { return num_classes_; }
  int64_t feat_channels() const { return 4 * provider_->embed_dim(); }

 private:
  RunConfig cfg_;
  int64_t num_classes_;
  std::unique_ptr<FeatureProvider> provider_;
  std::unique_ptr<GRE<float>> gre_;  // null when cfg.bypass_gre
  std::unique_ptr<Head<float>> head_;
};

BackboneSpec backbone_spec_from(const RunConfig& cfg);

}  // namespace gregait
