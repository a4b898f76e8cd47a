#include "gregait/gre.hpp"

#include <algorithm>
#include <cmath>

namespace gregait {

void binarize_close(const float* soft, int64_t h, int64_t w, uint8_t* out) {
  std::vector<uint8_t> bin(h * w), dil(h * w);
  for (int64_t i = 0; i < h * w; ++i) bin[i] = soft[i] >= 0.5f ? 1 : 0;
  // dilate: out-of-bounds neighbors count as 0
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int dy = -1; dy <= 1 && !v; ++dy)
        for (int dx = -1; dx <= 1 && !v; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) v = bin[yy * w + xx];
        }
      dil[y * w + x] = v;
    }
  // erode: min over in-bounds neighbors only, so borders see no phantom 0s
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      uint8_t v = 1;
      for (int dy = -1; dy <= 1 && v; ++dy)
        for (int dx = -1; dx <= 1 && v; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w)
            v = std::min(v, dil[yy * w + xx]);
        }
      out[y * w + x] = v;
    }
}

namespace {
double center_score(const uint8_t* m, int64_t h, int64_t w) {
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double sy = h / 4.0, sx = w / 4.0;
  double num = 0, den = 0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      if (m[y * w + x]) {
        const double dy = (y - cy) / sy, dx = (x - cx) / sx;
        num += std::exp(-0.5 * (dy * dy + dx * dx));
        den += 1.0;
      }
  return den > 0 ? num / den : 0.0;
}
}  // namespace

int select_foreground_channel(const uint8_t* m0, const uint8_t* m1, int64_t h,
                              int64_t w) {
  return center_score(m0, h, w) >= center_score(m1, h, w) ? 0 : 1;
}

double diversity_value(const double* p, int64_t c) {
  double v = 0;
  for (int64_t i = 0; i < c; ++i)
    if (p[i] > 0) v += p[i] * std::log(static_cast<double>(c) * p[i]);
  const double hi = std::log(static_cast<double>(c));
  return std::min(std::max(v, 0.0), hi);
}

double mean_pixel_entropy(const TensorF& f_de,
                          const std::vector<uint8_t>& fg) {
  GG_CHECK(f_de.ndim() == 4, "expected [N,C,H,W] map");
  const int64_t n = f_de.shape(0), c = f_de.shape(1);
  const int64_t hw = f_de.shape(2) * f_de.shape(3);
  GG_CHECK(static_cast<int64_t>(fg.size()) == n * hw,
           "foreground mask size mismatch");
  double acc = 0;
  int64_t cnt = 0;
  for (int64_t f = 0; f < n; ++f)
    for (int64_t i = 0; i < hw; ++i) {
      if (!fg[f * hw + i]) continue;
      double hsum = 0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double q = f_de[(f * c + ch) * hw + i];
        if (q > 0) hsum -= q * std::log(q);
      }
      acc += hsum;
      ++cnt;
    }
  return cnt > 0 ? acc / cnt : 0.0;
}

template <class T>
GRE<T>::GRE(const GREConfig<T>& cfg) : cfg_(cfg) {
  GG_CHECK(cfg.c_out >= 2 && cfg.c_out <= 128,
           "representation channel count " << cfg.c_out
                                           << " outside [2, 128]");
  SplitMix64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 0x51ull);
  enc_.setup("gre.mask.enc", cfg.embed, 2, /*bias=*/true, rng);
  dec_.setup("gre.mask.dec", 2, cfg.embed, /*bias=*/true, rng);
  ap_.setup("gre.ap", 4 * cfg.embed, cfg.c_out, /*bias=*/true, rng);
  de1_.setup("gre.de.conv1", 4 * cfg.embed, cfg.c_mid, /*bias=*/false, rng);
  de_bn_.setup("gre.de.bn", cfg.c_mid);
  de2_.setup("gre.de.conv2", cfg.c_mid, cfg.c_out, /*bias=*/true, rng);
}

template <class T>
typename GRE<T>::Output GRE<T>::forward(const Tensor<T>& f_c, bool training) {
  const int64_t e = cfg_.embed;
  GG_CHECK(f_c.ndim() == 4 && f_c.shape(1) == 4 * e,
           "expected [N," << 4 * e << ",H,W] features, got channel dim "
                          << f_c.shape(1));
  n_ = f_c.shape(0);
  h_ = f_c.shape(2);
  w_ = f_c.shape(3);
  const int64_t hw = h_ * w_;
  training_ = training;

  Output out;
  out.fg.assign(n_ * hw, 1);
  out.l_rec = 0;

  if (!cfg_.disable_mask) {
    // deepest level = last E channels of the concatenation
    f4_ = Tensor<T>({n_, e, h_, w_});
    for (int64_t n = 0; n < n_; ++n)
      std::copy(&f_c(n, 3 * e, 0, 0), &f_c(n, 3 * e, 0, 0) + e * hw,
                &f4_(n, 0, 0, 0));
    Tensor<T> logits = enc_.forward(f4_);
    Tensor<T> m = mask_sm_.forward(logits);
    f4_rec_ = dec_.forward(m);
    double se = 0;
    for (int64_t i = 0; i < f4_.numel(); ++i) {
      const double d = static_cast<double>(f4_rec_[i]) - f4_[i];
      se += d * d;
    }
    out.l_rec = se / static_cast<double>(f4_.numel());
    // hard mask per frame; constant downstream of here
    std::vector<float> soft(hw);
    std::vector<uint8_t> b0(hw), b1(hw);
    for (int64_t n = 0; n < n_; ++n) {
      for (int64_t i = 0; i < hw; ++i) soft[i] = static_cast<float>(m[n * 2 * hw + i]);
      binarize_close(soft.data(), h_, w_, b0.data());
      for (int64_t i = 0; i < hw; ++i)
        soft[i] = static_cast<float>(m[n * 2 * hw + hw + i]);
      binarize_close(soft.data(), h_, w_, b1.data());
      const int k = select_foreground_channel(b0.data(), b1.data(), h_, w_);
      const uint8_t* src = k == 0 ? b0.data() : b1.data();
      std::copy(src, src + hw, out.fg.data() + n * hw);
    }
  }
  fg_ = out.fg;
  n_fg_.assign(n_, 0);
  for (int64_t n = 0; n < n_; ++n)
    for (int64_t i = 0; i < hw; ++i) n_fg_[n] += fg_[n * hw + i];

  f_m_ = Tensor<T>({n_, 4 * e, h_, w_});
  for (int64_t n = 0; n < n_; ++n)
    for (int64_t c = 0; c < 4 * e; ++c)
      for (int64_t i = 0; i < hw; ++i)
        f_m_[(n * 4 * e + c) * hw + i] =
            f_c[(n * 4 * e + c) * hw + i] * static_cast<T>(fg_[n * hw + i]);

  out.f_ap = ap_.forward(f_m_);
  Tensor<T> hmid = de_gelu_.forward(de_bn_.forward(de1_.forward(f_m_), training));
  out.f_de = de_sm_.forward(de2_.forward(hmid));

  // smoothness: mean absolute sobel response of f_de over foreground
  const int64_t c = cfg_.c_out;
  sobel_gx_ = Tensor<T>({n_, c, h_, w_});
  sobel_gy_ = Tensor<T>({n_, c, h_, w_});
  double smo = 0;
  for (int64_t n = 0; n < n_; ++n) {
    kernels::sobel_fwd(&out.f_de[n * c * hw], c, h_, w_,
                       &sobel_gx_[n * c * hw], &sobel_gy_[n * c * hw]);
    if (n_fg_[n] == 0) continue;
    double acc = 0;
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i)
        if (fg_[n * hw + i])
          acc += std::abs(static_cast<double>(sobel_gx_[(n * c + ch) * hw + i])) +
                 std::abs(static_cast<double>(sobel_gy_[(n * c + ch) * hw + i]));
    smo += acc / static_cast<double>(c * n_fg_[n]);
  }
  out.l_smo = smo / static_cast<double>(n_);

  // diversity: channel occupancy entropy gap over the foreground
  div_grad_.assign(n_ * c, 0.0);
  double div = 0;
  std::vector<double> s(c), p(c);
  for (int64_t n = 0; n < n_; ++n) {
    if (n_fg_[n] == 0) continue;
    double tot = 0;
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0;
      for (int64_t i = 0; i < hw; ++i)
        if (fg_[n * hw + i]) acc += out.f_de[(n * c + ch) * hw + i];
      s[ch] = acc;
      tot += acc;
    }
    if (tot <= 0) continue;
    for (int64_t ch = 0; ch < c; ++ch) p[ch] = s[ch] / tot;
    div += diversity_value(p.data(), c);
    double plogp = 0;
    for (int64_t ch = 0; ch < c; ++ch)
      if (p[ch] > 0) plogp += p[ch] * std::log(p[ch]);
    for (int64_t ch = 0; ch < c; ++ch) {
      const double pi = std::max(p[ch], 1e-300);
      div_grad_[n * c + ch] = (std::log(pi) - plogp) / tot;
    }
  }
  out.l_div = div / static_cast<double>(n_);

  return out;
}

template <class T>
void GRE<T>::backward(const Tensor<T>& gy_ap, const Tensor<T>& gy_de) {
  const int64_t c = cfg_.c_out;
  const int64_t hw = h_ * w_;

  // appearance path: parameter grads only, inputs are frozen
  (void)ap_.backward(gy_ap);

  // denoise path: head gradient plus the two regularizer gradients
  Tensor<T> g_fde = gy_de;
  for (int64_t n = 0; n < n_; ++n) {
    if (n_fg_[n] == 0) continue;
    const T smo_scale =
        cfg_.gamma_smo / static_cast<T>(c * n_fg_[n] * n_);
    kernels::sobel_bwd_abs(&sobel_gx_[n * c * hw], &sobel_gy_[n * c * hw],
                           &fg_[n * hw], c, h_, w_, smo_scale,
                           &g_fde[n * c * hw]);
    const double div_scale = static_cast<double>(cfg_.gamma_div) / n_;
    for (int64_t ch = 0; ch < c; ++ch) {
      const T g = static_cast<T>(div_scale * div_grad_[n * c + ch]);
      if (g == T(0)) continue;
      for (int64_t i = 0; i < hw; ++i)
        if (fg_[n * hw + i]) g_fde[(n * c + ch) * hw + i] += g;
    }
  }
  (void)de1_.backward(de_bn_.backward(
      de_gelu_.backward(de2_.backward(de_sm_.backward(g_fde)))));

  // mask branch: reconstruction loss only
  if (!cfg_.disable_mask) {
    Tensor<T> g_rec(f4_rec_.shape());
    const double scale =
        2.0 * static_cast<double>(cfg_.gamma_rec) / f4_.numel();
    for (int64_t i = 0; i < f4_.numel(); ++i)
      g_rec[i] = static_cast<T>(scale * (static_cast<double>(f4_rec_[i]) - f4_[i]));
    (void)enc_.backward(mask_sm_.backward(dec_.backward(g_rec)));
  }
}

template <class T>
void GRE<T>::collect_bn(std::vector<BatchNorm2d<T>*>& out) {
  out.push_back(&de_bn_);
}

template <class T>
void GRE<T>::collect(ParamRefs<T>& out) {
  if (!cfg_.disable_mask) {
    enc_.collect(out);
    dec_.collect(out);
  }
  ap_.collect(out);
  de1_.collect(out);
  de_bn_.collect(out);
  de2_.collect(out);
}

template class GRE<float>;
template class GRE<double>;

}  // namespace gregait
