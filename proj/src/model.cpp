#include "gregait/model.hpp"

namespace gregait {

BackboneSpec backbone_spec_from(const RunConfig& cfg) {
  BackboneSpec spec;
  spec.provider = cfg.provider;
  spec.num_blocks = cfg.num_blocks;
  spec.embed_dim = cfg.embed_dim;
  spec.patch = cfg.patch;
  spec.input_h = cfg.input_h;
  spec.input_w = cfg.input_w;
  spec.seed = cfg.backbone_seed;
  spec.noise_sigma = cfg.noise_sigma;
  spec.cache_dir = cfg.cache_dir;
  return spec;
}

GaitModel::GaitModel(const RunConfig& cfg, int64_t num_classes)
    : cfg_(cfg), num_classes_(num_classes) {
  provider_ = make_provider(backbone_spec_from(cfg));
  if (!cfg.bypass_gre) {
    GREConfig<float> gcfg;
    gcfg.embed = provider_->embed_dim();
    gcfg.c_out = cfg.gre_channels;
    gcfg.c_mid = cfg.gre_mid;
    gcfg.gamma_rec = static_cast<float>(cfg.gamma_rec);
    gcfg.gamma_smo = static_cast<float>(cfg.gamma_smo);
    gcfg.gamma_div = static_cast<float>(cfg.gamma_div);
    gcfg.disable_mask = cfg.disable_mask;
    gcfg.seed = cfg.gre_seed;
    gre_ = std::make_unique<GRE<float>>(gcfg);
  }
  HeadConfig hcfg;
  hcfg.in_channels = cfg.bypass_gre ? feat_channels() : cfg.gre_channels;
  hcfg.widths = {cfg.head_w1, cfg.head_w2, cfg.head_w3, cfg.head_w4};
  hcfg.parts = cfg.parts;
  hcfg.dim = cfg.emb_dim;
  hcfg.num_classes = num_classes;
  hcfg.streams = cfg.streams;
  hcfg.pool = cfg.frame_pool;
  hcfg.seed = cfg.head_seed;
  head_ = std::make_unique<Head<float>>(hcfg);
}

TensorF GaitModel::sequence_features(const SequenceRecord& rec,
                                     const std::vector<int64_t>& idx) const {
  std::vector<int64_t> use = idx;
  if (use.empty()) {
    use.resize(rec.frames.size());
    for (size_t i = 0; i < rec.frames.size(); ++i)
      use[i] = static_cast<int64_t>(i);
  }
  TensorF out;
  for (size_t i = 0; i < use.size(); ++i) {
    const std::string& path = rec.frames[static_cast<size_t>(use[i])];
    ImageF frame = load_frame(path);
    ImageF sized = cfg_.pad_mode == "stretch"
                       ? resize_image(frame, cfg_.input_h, cfg_.input_w)
                       : pad_and_resize(frame, cfg_.input_h, cfg_.input_w);
    TensorF fc =
        upsample_concat(extract_multilevel(path, sized, *provider_));
    if (i == 0)
      out = TensorF({static_cast<int64_t>(use.size()), fc.shape(0),
                     fc.shape(1), fc.shape(2)});
    GG_CHECK(fc.numel() * static_cast<int64_t>(use.size()) == out.numel(),
             "inconsistent feature shapes within a sequence");
    std::copy(fc.data(), fc.data() + fc.numel(),
              out.data() + static_cast<int64_t>(i) * fc.numel());
  }
  return out;
}

GaitModel::ForwardOut GaitModel::forward(const TensorF& fc, int64_t b,
                                         int64_t l, bool training) {
  ForwardOut out;
  if (gre_) {
    auto g = gre_->forward(fc, training);
    out.l_rec = g.l_rec;
    out.l_smo = g.l_smo;
    out.l_div = g.l_div;
    int64_t on = 0;
    for (uint8_t v : g.fg) on += v;
    out.fg_fraction = g.fg.empty() ? 1.0 : static_cast<double>(on) / g.fg.size();
    out.head = head_->forward(g.f_ap, g.f_de, b, l, training);
  } else {
    out.head = head_->forward(fc, fc, b, l, training);
  }
  return out;
}

void GaitModel::backward(const TensorF& g_emb, const TensorF& g_logits) {
  TensorF gx_ap, gx_de;
  head_->backward(g_emb, g_logits, gx_ap, gx_de);
  if (gre_) {
    // unused streams get a zero gradient of the right shape
    if (gx_ap.numel() == 0 && gx_de.numel() > 0) gx_ap = TensorF(gx_de.shape());
    if (gx_de.numel() == 0 && gx_ap.numel() > 0) gx_de = TensorF(gx_ap.shape());
    gre_->backward(gx_ap, gx_de);
  }
}

ParamRefs<float> GaitModel::params() {
  ParamRefs<float> out;
  if (gre_) gre_->collect(out);
  head_->collect(out);
  return out;
}

std::vector<BatchNorm2d<float>*> GaitModel::bns() {
  std::vector<BatchNorm2d<float>*> out;
  if (gre_) gre_->collect_bn(out);
  head_->collect_bn(out);
  return out;
}

}  // namespace gregait
