#include "gregait/head.hpp"

#include <algorithm>
#include <cmath>

namespace gregait {

template <class T>
void CrossSelect<T>::setup(const std::string& name, int64_t c,
                           SplitMix64& rng) {
  c_ = c;
  const int64_t hidden = std::max<int64_t>(c / 4, 4);
  squeeze_.setup(name + ".squeeze", c, hidden, /*bias=*/true, rng);
  excite_a_.setup(name + ".excite_a", hidden, c, /*bias=*/true, rng);
  excite_b_.setup(name + ".excite_b", hidden, c, /*bias=*/true, rng);
}

template <class T>
Tensor<T> CrossSelect<T>::forward(const Tensor<T>& a, const Tensor<T>& b) {
  GG_CHECK(a.same_shape(b), "fusion stream shapes differ");
  a_ = a;
  b_ = b;
  const int64_t n = a.shape(0), hw = a.numel() / (a.shape(0) * c_);
  Tensor<T> s({n, c_});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < c_; ++c) {
      double acc = 0;
      const T* pa = a.data() + (i * c_ + c) * hw;
      const T* pb = b.data() + (i * c_ + c) * hw;
      for (int64_t k = 0; k < hw; ++k) acc += static_cast<double>(pa[k]) + pb[k];
      s(i, c) = static_cast<T>(acc / hw);
    }
  Tensor<T> h = relu_.forward(squeeze_.forward(s));
  Tensor<T> la = excite_a_.forward(h);
  Tensor<T> lb = excite_b_.forward(h);
  wa_ = Tensor<T>({n, c_});
  wb_ = Tensor<T>({n, c_});
  for (int64_t i = 0; i < n * c_; ++i) {
    const T m = std::max(la[i], lb[i]);
    const T ea = std::exp(la[i] - m), eb = std::exp(lb[i] - m);
    wa_[i] = ea / (ea + eb);
    wb_[i] = eb / (ea + eb);
  }
  Tensor<T> y(a.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < c_; ++c) {
      const T va = wa_(i, c), vb = wb_(i, c);
      const int64_t off = (i * c_ + c) * hw;
      for (int64_t k = 0; k < hw; ++k)
        y[off + k] = va * a_[off + k] + vb * b_[off + k];
    }
  return y;
}

template <class T>
void CrossSelect<T>::backward(const Tensor<T>& gy, Tensor<T>& ga,
                              Tensor<T>& gb) {
  const int64_t n = a_.shape(0), hw = a_.numel() / (a_.shape(0) * c_);
  ga = Tensor<T>(a_.shape());
  gb = Tensor<T>(b_.shape());
  Tensor<T> dla({n, c_}), dlb({n, c_});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < c_; ++c) {
      const int64_t off = (i * c_ + c) * hw;
      double dwa = 0, dwb = 0;
      for (int64_t k = 0; k < hw; ++k) {
        ga[off + k] = wa_(i, c) * gy[off + k];
        gb[off + k] = wb_(i, c) * gy[off + k];
        dwa += static_cast<double>(gy[off + k]) * a_[off + k];
        dwb += static_cast<double>(gy[off + k]) * b_[off + k];
      }
      // two-way softmax jacobian
      const double d = static_cast<double>(wa_(i, c)) * wb_(i, c) * (dwa - dwb);
      dla(i, c) = static_cast<T>(d);
      dlb(i, c) = static_cast<T>(-d);
    }
  Tensor<T> gh = excite_a_.backward(dla);
  Tensor<T> gh2 = excite_b_.backward(dlb);
  for (int64_t i = 0; i < gh.numel(); ++i) gh[i] += gh2[i];
  Tensor<T> gs = squeeze_.backward(relu_.backward(gh));
  const T inv = T(1) / static_cast<T>(hw);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < c_; ++c) {
      const T g = gs(i, c) * inv;
      const int64_t off = (i * c_ + c) * hw;
      for (int64_t k = 0; k < hw; ++k) {
        ga[off + k] += g;
        gb[off + k] += g;
      }
    }
}

template <class T>
void CrossSelect<T>::collect(ParamRefs<T>& out) {
  squeeze_.collect(out);
  excite_a_.collect(out);
  excite_b_.collect(out);
}

template <class T>
Head<T>::Head(const HeadConfig& cfg) : cfg_(cfg) {
  GG_CHECK(cfg.streams == "dual" || cfg.streams == "ap" || cfg.streams == "de",
           "unknown stream setting '" << cfg.streams << "'");
  GG_CHECK(cfg.pool == "max" || cfg.pool == "meanmax",
           "unknown frame pooling '" << cfg.pool << "'");
  use_ap_ = cfg.streams != "de";
  use_de_ = cfg.streams != "ap";
  SplitMix64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 0x52ull);
  const auto& w = cfg.widths;
  for (int i = 0; i < 2; ++i) {
    const std::string nm = i == 0 ? "head.b1_ap" : "head.b1_de";
    stem_conv_[i].setup(nm + ".conv", cfg.in_channels, w[0], 1, /*bias=*/false,
                        rng);
    stem_bn_[i].setup(nm + ".bn", w[0]);
    stem_block_[i].setup(nm + ".block", w[0], w[0], 1, rng);
  }
  fuse_.setup("head.fuse", w[0], rng);
  b2_.setup("head.b2", w[0], w[1], 2, rng);
  b3_.setup("head.b3", w[1], w[2], 2, rng);
  b4_.setup("head.b4", w[2], w[3], 1, rng);
  part_fc_.setup("head.part_fc", {cfg.parts, cfg.dim, w[3]});
  {
    const double stddev = std::sqrt(2.0 / static_cast<double>(cfg.dim));
    for (int64_t i = 0; i < part_fc_.w.numel(); ++i)
      part_fc_.w[i] = static_cast<T>(stddev * rng.normal());
  }
  neck_bn_.setup("head.neck_bn", cfg.parts * cfg.dim);
  if (cfg.num_classes > 0) {
    cls_.setup("head.cls", {cfg.parts, cfg.num_classes, cfg.dim});
    const double stddev = std::sqrt(1.0 / static_cast<double>(cfg.dim));
    for (int64_t i = 0; i < cls_.w.numel(); ++i)
      cls_.w[i] = static_cast<T>(stddev * rng.normal());
  }
}

template <class T>
Tensor<T> Head<T>::stem_forward(int which, const Tensor<T>& x, bool training) {
  Tensor<T> h = stem_relu_[which].forward(
      stem_bn_[which].forward(stem_conv_[which].forward(x), training));
  return stem_block_[which].forward(h, training);
}

template <class T>
Tensor<T> Head<T>::stem_backward(int which, const Tensor<T>& g) {
  return stem_conv_[which].backward(stem_bn_[which].backward(
      stem_relu_[which].backward(stem_block_[which].backward(g))));
}

template <class T>
Tensor<T> Head<T>::trunk_forward(const Tensor<T>& fused, int64_t b, int64_t l,
                                 bool training) {
  trunk_out_ = b4_.forward(b3_.forward(b2_.forward(fused, training), training),
                           training);
  const int64_t w4 = cfg_.widths[3];
  fh_ = trunk_out_.shape(2);
  fw_ = trunk_out_.shape(3);
  GG_CHECK(fh_ >= cfg_.parts, "feature height " << fh_ << " smaller than "
                                                << cfg_.parts << " strips");
  const int64_t hw = fh_ * fw_;

  // frame pooling: elementwise max over each sequence's frames, plus the
  // frame mean in the meanmax variant
  pooled_ = Tensor<T>({b, w4, fh_, fw_});
  frame_argmax_.assign(b * w4 * hw, 0);
  for (int64_t i = 0; i < b; ++i)
    for (int64_t c = 0; c < w4; ++c)
      for (int64_t k = 0; k < hw; ++k) {
        T best = trunk_out_[((i * l) * w4 + c) * hw + k];
        int64_t arg = 0;
        for (int64_t f = 1; f < l; ++f) {
          const T v = trunk_out_[((i * l + f) * w4 + c) * hw + k];
          if (v > best) {
            best = v;
            arg = f;
          }
        }
        T out = best;
        if (cfg_.pool == "meanmax") {
          double mean = 0;
          for (int64_t f = 0; f < l; ++f)
            mean += trunk_out_[((i * l + f) * w4 + c) * hw + k];
          out += static_cast<T>(mean / l);
        }
        pooled_[(i * w4 + c) * hw + k] = out;
        frame_argmax_[(i * w4 + c) * hw + k] = arg;
      }

  // horizontal strips: equal heights, the last strip absorbs the remainder
  const int64_t p = cfg_.parts;
  const int64_t base = fh_ / p;
  strip_lo_.assign(p, 0);
  strip_hi_.assign(p, 0);
  for (int64_t s = 0; s < p; ++s) {
    strip_lo_[s] = s * base;
    strip_hi_[s] = s == p - 1 ? fh_ : (s + 1) * base;
  }
  strips_ = Tensor<T>({b, p, w4});
  strip_argmax_.assign(b * w4 * p, 0);
  for (int64_t i = 0; i < b; ++i)
    for (int64_t c = 0; c < w4; ++c)
      for (int64_t s = 0; s < p; ++s) {
        double mean = 0;
        T best = pooled_[(i * w4 + c) * hw + strip_lo_[s] * fw_];
        int64_t arg = strip_lo_[s] * fw_;
        for (int64_t y = strip_lo_[s]; y < strip_hi_[s]; ++y)
          for (int64_t x = 0; x < fw_; ++x) {
            const T v = pooled_[(i * w4 + c) * hw + y * fw_ + x];
            mean += v;
            if (v > best) {
              best = v;
              arg = y * fw_ + x;
            }
          }
        const int64_t cnt = (strip_hi_[s] - strip_lo_[s]) * fw_;
        strips_(i, s, c) = static_cast<T>(mean / cnt) + best;
        strip_argmax_[(i * p + s) * w4 + c] = arg;
      }

  // per-strip embeddings
  emb_pre_ = Tensor<T>({b, p, cfg_.dim});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t s = 0; s < p; ++s)
      for (int64_t d = 0; d < cfg_.dim; ++d) {
        double acc = 0;
        for (int64_t c = 0; c < w4; ++c)
          acc += static_cast<double>(part_fc_.w[(s * cfg_.dim + d) * w4 + c]) *
                 strips_(i, s, c);
        emb_pre_(i, s, d) = static_cast<T>(acc);
      }
  return emb_pre_;
}

template <class T>
Tensor<T> Head<T>::trunk_backward(const Tensor<T>& g_emb) {
  const int64_t b = b_, l = l_, p = cfg_.parts, w4 = cfg_.widths[3];
  const int64_t hw = fh_ * fw_;
  Tensor<T> g_strips({b, p, w4});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t s = 0; s < p; ++s)
      for (int64_t c = 0; c < w4; ++c) {
        double acc = 0;
        for (int64_t d = 0; d < cfg_.dim; ++d) {
          const int64_t wi = (s * cfg_.dim + d) * w4 + c;
          acc += static_cast<double>(g_emb(i, s, d)) * part_fc_.w[wi];
          part_fc_.g[wi] += g_emb(i, s, d) * strips_(i, s, c);
        }
        g_strips(i, s, c) = static_cast<T>(acc);
      }
  Tensor<T> g_pooled({b, w4, fh_, fw_});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t s = 0; s < p; ++s) {
      const int64_t cnt = (strip_hi_[s] - strip_lo_[s]) * fw_;
      for (int64_t c = 0; c < w4; ++c) {
        const T g = g_strips(i, s, c);
        const T gm = g / static_cast<T>(cnt);
        for (int64_t y = strip_lo_[s]; y < strip_hi_[s]; ++y)
          for (int64_t x = 0; x < fw_; ++x)
            g_pooled[(i * w4 + c) * hw + y * fw_ + x] += gm;
        g_pooled[(i * w4 + c) * hw + strip_argmax_[(i * p + s) * w4 + c]] += g;
      }
    }
  Tensor<T> g_trunk({b * l, w4, fh_, fw_});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t c = 0; c < w4; ++c)
      for (int64_t k = 0; k < hw; ++k) {
        const T g = g_pooled[(i * w4 + c) * hw + k];
        const int64_t arg = frame_argmax_[(i * w4 + c) * hw + k];
        g_trunk[((i * l + arg) * w4 + c) * hw + k] += g;
        if (cfg_.pool == "meanmax") {
          const T gm = g / static_cast<T>(l);
          for (int64_t f = 0; f < l; ++f)
            g_trunk[((i * l + f) * w4 + c) * hw + k] += gm;
        }
      }
  return b2_.backward(b3_.backward(b4_.backward(g_trunk)));
}

template <class T>
typename Head<T>::Output Head<T>::forward(const Tensor<T>& x_ap,
                                          const Tensor<T>& x_de, int64_t b,
                                          int64_t l, bool training) {
  GG_CHECK(b >= 1 && l >= 1, "bad sequence grouping");
  b_ = b;
  l_ = l;
  training_ = training;
  Tensor<T> fused;
  if (use_ap_ && use_de_) {
    GG_CHECK(x_ap.shape(0) == b * l && x_de.shape(0) == b * l,
             "stream frame count does not match b*l");
    tap_ap_ = stem_forward(0, x_ap, training);
    tap_de_ = stem_forward(1, x_de, training);
    fused = fuse_.forward(tap_ap_, tap_de_);
  } else if (use_ap_) {
    tap_ap_ = stem_forward(0, x_ap, training);
    fused = tap_ap_;
    tap_de_ = Tensor<T>();
  } else {
    tap_de_ = stem_forward(1, x_de, training);
    fused = tap_de_;
    tap_ap_ = Tensor<T>();
  }
  tap_fused_ = fused;

  Output out;
  out.emb = trunk_forward(fused, b, l, training);
  if (cfg_.num_classes > 0) {
    Tensor<T> flat = out.emb;
    flat.reshape({b, cfg_.parts * cfg_.dim, 1});
    emb_post_ = neck_bn_.forward(flat, training);
    emb_post_.reshape({b, cfg_.parts, cfg_.dim});
    out.logits = Tensor<T>({b, cfg_.parts, cfg_.num_classes});
    for (int64_t i = 0; i < b; ++i)
      for (int64_t s = 0; s < cfg_.parts; ++s)
        for (int64_t k = 0; k < cfg_.num_classes; ++k) {
          double acc = 0;
          for (int64_t d = 0; d < cfg_.dim; ++d)
            acc += static_cast<double>(
                       cls_.w[(s * cfg_.num_classes + k) * cfg_.dim + d]) *
                   emb_post_(i, s, d);
          out.logits(i, s, k) = static_cast<T>(acc);
        }
  }
  return out;
}

template <class T>
void Head<T>::backward(const Tensor<T>& g_emb, const Tensor<T>& g_logits,
                       Tensor<T>& gx_ap, Tensor<T>& gx_de) {
  Tensor<T> g_pre = g_emb;
  if (g_logits.numel() > 0) {
    GG_CHECK(cfg_.num_classes > 0, "classifier gradient without classifier");
    const int64_t b = b_, p = cfg_.parts, k = cfg_.num_classes, d = cfg_.dim;
    Tensor<T> g_post({b, p, d});
    for (int64_t i = 0; i < b; ++i)
      for (int64_t s = 0; s < p; ++s)
        for (int64_t j = 0; j < k; ++j) {
          const T g = g_logits(i, s, j);
          if (g == T(0)) continue;
          for (int64_t t = 0; t < d; ++t) {
            g_post(i, s, t) += g * cls_.w[(s * k + j) * d + t];
            cls_.g[(s * k + j) * d + t] += g * emb_post_(i, s, t);
          }
        }
    g_post.reshape({b, p * d, 1});
    Tensor<T> g_flat = neck_bn_.backward(g_post);
    g_flat.reshape({b, p, d});
    for (int64_t i = 0; i < g_pre.numel(); ++i) g_pre[i] += g_flat[i];
  }
  Tensor<T> g_fused = trunk_backward(g_pre);
  if (use_ap_ && use_de_) {
    Tensor<T> ga, gb;
    fuse_.backward(g_fused, ga, gb);
    gx_ap = stem_backward(0, ga);
    gx_de = stem_backward(1, gb);
  } else if (use_ap_) {
    gx_ap = stem_backward(0, g_fused);
    gx_de = Tensor<T>();
  } else {
    gx_de = stem_backward(1, g_fused);
    gx_ap = Tensor<T>();
  }
}

template <class T>
void Head<T>::taps_gradient(const Tensor<T>& g_emb, Tensor<T>& g_tap_ap,
                            Tensor<T>& g_tap_de, Tensor<T>& g_tap_fused) {
  g_tap_fused = trunk_backward(g_emb);
  if (use_ap_ && use_de_) {
    fuse_.backward(g_tap_fused, g_tap_ap, g_tap_de);
  } else if (use_ap_) {
    g_tap_ap = g_tap_fused;
    g_tap_de = Tensor<T>();
  } else {
    g_tap_de = g_tap_fused;
    g_tap_ap = Tensor<T>();
  }
}

template <class T>
void Head<T>::collect(ParamRefs<T>& out) {
  for (int i = 0; i < 2; ++i) {
    if ((i == 0 && !use_ap_) || (i == 1 && !use_de_)) continue;
    stem_conv_[i].collect(out);
    stem_bn_[i].collect(out);
    stem_block_[i].collect(out);
  }
  if (use_ap_ && use_de_) fuse_.collect(out);
  b2_.collect(out);
  b3_.collect(out);
  b4_.collect(out);
  out.push_back(&part_fc_);
  neck_bn_.collect(out);
  if (cfg_.num_classes > 0) out.push_back(&cls_);
}

template <class T>
void Head<T>::collect_bn(std::vector<BatchNorm2d<T>*>& out) {
  for (int i = 0; i < 2; ++i) {
    if ((i == 0 && !use_ap_) || (i == 1 && !use_de_)) continue;
    out.push_back(&stem_bn_[i]);
    stem_block_[i].collect_bn(out);
  }
  b2_.collect_bn(out);
  b3_.collect_bn(out);
  b4_.collect_bn(out);
  out.push_back(&neck_bn_);
}

template class CrossSelect<float>;
template class CrossSelect<double>;
template class Head<float>;
template class Head<double>;

}  // namespace gregait
