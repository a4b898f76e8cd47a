#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "gregait/gre.hpp"

using namespace gregait;

namespace {

Tensor<double> randn(std::vector<int64_t> shape, SplitMix64& rng,
                     double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

// independent 3x3 all-ones closing used as the oracle
void oracle_close(const std::vector<uint8_t>& in, int64_t h, int64_t w,
                  std::vector<uint8_t>& out) {
  std::vector<uint8_t> dil(h * w, 0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      uint8_t v = 0;  // dilation pads zeros outside
      for (int64_t dy = -1; dy <= 1 && !v; ++dy)
        for (int64_t dx = -1; dx <= 1 && !v; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && in[yy * w + xx]) v = 1;
        }
      dil[y * w + x] = v;
    }
  out.assign(h * w, 0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      uint8_t v = 1;  // erosion: min over in-bounds taps only
      for (int64_t dy = -1; dy <= 1 && v; ++dy)
        for (int64_t dx = -1; dx <= 1 && v; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && !dil[yy * w + xx])
            v = 0;
        }
      out[y * w + x] = v;
    }
}

}  // namespace

TEST_CASE("binarize_close matches an independent closing") {
  SplitMix64 rng(61);
  const int64_t h = 7, w = 6;
  std::vector<float> soft(h * w);
  for (auto& v : soft) v = static_cast<float>(rng.uniform());

  std::vector<uint8_t> thresh(h * w);
  for (int64_t i = 0; i < h * w; ++i) thresh[i] = soft[i] >= 0.5f ? 1 : 0;
  std::vector<uint8_t> want;
  oracle_close(thresh, h, w, want);

  std::vector<uint8_t> got(h * w);
  binarize_close(soft.data(), h, w, got.data());
  CHECK(std::memcmp(got.data(), want.data(), h * w) == 0);
}

TEST_CASE("closing fills a one-pixel hole and keeps an isolated pixel") {
  const int64_t h = 5, w = 5;
  std::vector<float> soft(h * w, 0.9f);
  soft[2 * w + 2] = 0.1f;  // hole in a solid block
  std::vector<uint8_t> out(h * w);
  binarize_close(soft.data(), h, w, out.data());
  CHECK(out[2 * w + 2] == 1);

  std::fill(soft.begin(), soft.end(), 0.1f);
  soft[2 * w + 2] = 0.9f;  // isolated dot survives closing
  binarize_close(soft.data(), h, w, out.data());
  CHECK(out[2 * w + 2] == 1);
  int64_t on = 0;
  for (uint8_t v : out) on += v;
  CHECK(on == 1);
}

TEST_CASE("select_foreground_channel prefers the centered blob") {
  const int64_t h = 9, w = 9;
  std::vector<uint8_t> center(h * w, 0), corner(h * w, 0);
  for (int64_t y = 3; y <= 5; ++y)
    for (int64_t x = 3; x <= 5; ++x) center[y * w + x] = 1;
  for (int64_t y = 0; y <= 2; ++y)
    for (int64_t x = 0; x <= 2; ++x) corner[y * w + x] = 1;

  CHECK(select_foreground_channel(center.data(), corner.data(), h, w) == 0);
  CHECK(select_foreground_channel(corner.data(), center.data(), h, w) == 1);

  // all-zero channels score zero; ties resolve to channel 0
  std::vector<uint8_t> zero(h * w, 0);
  CHECK(select_foreground_channel(zero.data(), zero.data(), h, w) == 0);
  CHECK(select_foreground_channel(center.data(), center.data(), h, w) == 0);
}

TEST_CASE("diversity value: hand example, exact endpoints, clamping") {
  // C=2, p=(1/4, 3/4): 0.25 ln 0.5 + 0.75 ln 1.5
  {
    const double p[] = {0.25, 0.75};
    const double want = 0.25 * std::log(0.5) + 0.75 * std::log(1.5);
    CHECK(diversity_value(p, 2) == doctest::Approx(want).epsilon(1e-14));
  }
  // uniform over a power-of-two C is exactly zero in floating point
  for (int64_t c : {2, 4, 8}) {
    std::vector<double> p(c, 1.0 / double(c));
    CHECK(diversity_value(p.data(), c) == 0.0);
  }
  // one-hot is exactly log C (zero entries skipped)
  for (int64_t c : {2, 4, 8}) {
    std::vector<double> p(c, 0.0);
    p[c / 2] = 1.0;
    CHECK(diversity_value(p.data(), c) == std::log(double(c)));
  }
  // value never leaves [0, log C]
  {
    const double p[] = {0.5 - 1e-18, 0.5 + 1e-18};
    const double v = diversity_value(p, 2);
    CHECK(v >= 0.0);
    CHECK(v <= std::log(2.0));
  }
}

TEST_CASE("mean pixel entropy endpoints") {
  const int64_t n = 1, c = 4, h = 2, w = 2;
  TensorF uni({n, c, h, w});
  uni.fill(0.25f);
  std::vector<uint8_t> fg(h * w, 1);
  CHECK(mean_pixel_entropy(uni, fg) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-6));

  TensorF hot({n, c, h, w});
  for (int64_t p = 0; p < h * w; ++p) hot[0 * h * w + p] = 1.0f;
  CHECK(mean_pixel_entropy(hot, fg) == doctest::Approx(0.0));

  // background pixels are ignored
  std::vector<uint8_t> half(h * w, 0);
  half[0] = 1;
  CHECK(mean_pixel_entropy(uni, half) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("gre forward: shapes, binary mask, softmax denoise output") {
  GREConfig<double> cfg;
  cfg.embed = 4;
  cfg.c_out = 4;
  cfg.c_mid = 8;
  GRE<double> gre(cfg);
  SplitMix64 rng(62);
  Tensor<double> fc = randn({2, 16, 6, 5}, rng);
  auto out = gre.forward(fc, true);

  REQUIRE(out.f_ap.shape() == std::vector<int64_t>({2, 4, 6, 5}));
  REQUIRE(out.f_de.shape() == std::vector<int64_t>({2, 4, 6, 5}));
  REQUIRE(out.fg.size() == 2u * 6u * 5u);
  for (uint8_t v : out.fg) CHECK((v == 0 || v == 1));
  CHECK(std::isfinite(out.l_rec));
  CHECK(std::isfinite(out.l_smo));
  CHECK(std::isfinite(out.l_div));
  CHECK(out.l_rec >= 0.0);
  CHECK(out.l_smo >= 0.0);

  // denoise output is a channel distribution at every pixel
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 30; ++p) {
      double s = 0;
      for (int64_t ch = 0; ch < 4; ++ch) s += out.f_de[(n * 4 + ch) * 30 + p];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }

  // masked appearance features vanish on background pixels
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 30; ++p)
      if (!out.fg[n * 30 + p])
        for (int64_t ch = 0; ch < 4; ++ch)
          CHECK(out.f_ap[(n * 4 + ch) * 30 + p] == 0.0);
}

TEST_CASE("gre smoothness matches an independent recomputation") {
  GREConfig<double> cfg;
  cfg.embed = 4;
  cfg.c_out = 3;
  cfg.c_mid = 8;
  GRE<double> gre(cfg);
  SplitMix64 rng(63);
  Tensor<double> fc = randn({2, 16, 5, 4}, rng);
  auto out = gre.forward(fc, true);

  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  const int64_t h = 5, w = 4, c = 3;
  double total = 0;
  for (int64_t n = 0; n < 2; ++n) {
    int64_t nfg = 0;
    for (int64_t p = 0; p < h * w; ++p) nfg += out.fg[n * h * w + p];
    if (!nfg) continue;
    double acc = 0;
    for (int64_t ch = 0; ch < c; ++ch) {
      auto at = [&](int64_t y, int64_t x) {
        y = std::min(std::max<int64_t>(y, 0), h - 1);
        x = std::min(std::max<int64_t>(x, 0), w - 1);
        return out.f_de[(n * c + ch) * h * w + y * w + x];
      };
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          if (!out.fg[n * h * w + y * w + x]) continue;
          double gx = 0, gy = 0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
              gx += kx[a][b] * at(y + a - 1, x + b - 1);
              gy += ky[a][b] * at(y + a - 1, x + b - 1);
            }
          acc += std::abs(gx) + std::abs(gy);
        }
    }
    total += acc / (double(c) * double(nfg));
  }
  total /= 2.0;
  CHECK(out.l_smo == doctest::Approx(total).epsilon(1e-9));
}

TEST_CASE("gre diversity matches the foreground-aggregated distribution") {
  GREConfig<double> cfg;
  cfg.embed = 4;
  cfg.c_out = 4;
  cfg.c_mid = 8;
  GRE<double> gre(cfg);
  SplitMix64 rng(64);
  Tensor<double> fc = randn({2, 16, 5, 4}, rng);
  auto out = gre.forward(fc, true);

  const int64_t h = 5, w = 4, c = 4;
  double total = 0;
  for (int64_t n = 0; n < 2; ++n) {
    std::vector<double> s(c, 0.0);
    double z = 0;
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t p = 0; p < h * w; ++p)
        if (out.fg[n * h * w + p]) {
          s[ch] += out.f_de[(n * c + ch) * h * w + p];
          z += out.f_de[(n * c + ch) * h * w + p];
        }
    if (z > 0) {
      for (auto& v : s) v /= z;
      total += diversity_value(s.data(), c);
    }
  }
  total /= 2.0;
  CHECK(out.l_div == doctest::Approx(total).epsilon(1e-9));
}

TEST_CASE("gre gradient check: losses and head paths") {
  GREConfig<double> cfg;
  cfg.embed = 3;
  cfg.c_out = 3;
  cfg.c_mid = 6;
  cfg.gamma_rec = 0.7;
  cfg.gamma_smo = 0.05;
  cfg.gamma_div = 0.4;
  cfg.seed = 9;
  GRE<double> gre(cfg);
  SplitMix64 rng(65);
  Tensor<double> fc = randn({2, 12, 4, 4}, rng);
  Tensor<double> r_ap = randn({2, 3, 4, 4}, rng, 0.3);
  Tensor<double> r_de = randn({2, 3, 4, 4}, rng, 0.3);

  auto loss = [&]() {
    auto out = gre.forward(fc, true);
    double L = cfg.gamma_rec * out.l_rec + cfg.gamma_smo * out.l_smo +
               cfg.gamma_div * out.l_div;
    for (int64_t i = 0; i < out.f_ap.numel(); ++i) L += out.f_ap[i] * r_ap[i];
    for (int64_t i = 0; i < out.f_de.numel(); ++i) L += out.f_de[i] * r_de[i];
    return L;
  };

  loss();
  gre.backward(r_ap, r_de);
  ParamRefs<double> ps;
  gre.collect(ps);
  REQUIRE(ps.size() > 0);

  const double eps = 1e-6;
  double worst = 0;
  for (Param<double>* p : ps) {
    for (int64_t i = 0; i < p->w.numel(); ++i) {
      const double save = p->w[i];
      p->w[i] = save + eps;
      const double lp = loss();
      p->w[i] = save - eps;
      const double lm = loss();
      p->w[i] = save;
      const double num = (lp - lm) / (2 * eps);
      const double err =
          std::abs(num - p->g[i]) / std::max(1.0, std::abs(num));
      worst = std::max(worst, err);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("disable_mask: full-frame losses, no mask parameters") {
  GREConfig<double> cfg;
  cfg.embed = 4;
  cfg.c_out = 4;
  cfg.c_mid = 8;
  GREConfig<double> nomask = cfg;
  nomask.disable_mask = true;

  GRE<double> on(cfg), off(nomask);
  SplitMix64 rng(66);
  Tensor<double> fc = randn({1, 16, 5, 5}, rng);

  auto o = off.forward(fc, true);
  CHECK(o.l_rec == 0.0);
  for (uint8_t v : o.fg) CHECK(v == 1);

  ParamRefs<double> ps_on, ps_off;
  on.collect(ps_on);
  off.collect(ps_off);
  CHECK(ps_on.size() == ps_off.size() + 4);  // enc/dec weight+bias dropped
  for (Param<double>* p : ps_off)
    CHECK(p->name.find("mask") == std::string::npos);
}
