#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "gregait/common.hpp"
#include "gregait/kernels.hpp"

using namespace gregait;

namespace {

template <class T>
std::vector<T> rand_vec(int64_t n, SplitMix64& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return v;
}

template <class T>
void check_close(const std::vector<T>& a, const std::vector<T>& b,
                 double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) -
                              static_cast<double>(b[i]));
    const double s = std::max(1.0, std::abs(static_cast<double>(a[i])));
    worst = std::max(worst, d / s);
  }
  CHECK(worst <= tol);
}

template <class T>
constexpr double tol() {
  return std::is_same_v<T, float> ? 2e-5 : 1e-12;
}

}  // namespace

TEST_CASE("conv_out_extent ceil semantics") {
  CHECK(conv_out_extent(4, 1) == 4);
  CHECK(conv_out_extent(4, 2) == 2);
  CHECK(conv_out_extent(5, 2) == 3);
  CHECK(conv_out_extent(7, 2) == 4);
  CHECK(conv_out_extent(1, 2) == 1);
}

TEST_CASE_TEMPLATE("conv1x1 ref == par", T, float, double) {
  SplitMix64 rng(11);
  const int64_t n = 2, ci = 5, co = 3, hw = 7;
  auto x = rand_vec<T>(n * ci * hw, rng);
  auto w = rand_vec<T>(co * ci, rng);
  auto b = rand_vec<T>(co, rng);
  auto gy = rand_vec<T>(n * co * hw, rng);

  std::vector<T> y1(n * co * hw), y2(y1);
  ref::conv1x1_fwd(x.data(), n, ci, hw, w.data(), b.data(), co, y1.data());
  par::conv1x1_fwd(x.data(), n, ci, hw, w.data(), b.data(), co, y2.data());
  check_close(y1, y2, tol<T>());

  // no-bias path
  ref::conv1x1_fwd(x.data(), n, ci, hw, w.data(), (T*)nullptr, co, y1.data());
  par::conv1x1_fwd(x.data(), n, ci, hw, w.data(), (T*)nullptr, co, y2.data());
  check_close(y1, y2, tol<T>());

  std::vector<T> gx1(n * ci * hw, T(0)), gx2(gx1);
  ref::conv1x1_bwd_input(gy.data(), n, co, hw, w.data(), ci, gx1.data());
  par::conv1x1_bwd_input(gy.data(), n, co, hw, w.data(), ci, gx2.data());
  check_close(gx1, gx2, tol<T>());

  std::vector<T> gw1(co * ci, T(0)), gw2(gw1), gb1(co, T(0)), gb2(gb1);
  ref::conv1x1_bwd_params(x.data(), gy.data(), n, ci, co, hw, gw1.data(),
                          gb1.data());
  par::conv1x1_bwd_params(x.data(), gy.data(), n, ci, co, hw, gw2.data(),
                          gb2.data());
  check_close(gw1, gw2, tol<T>());
  check_close(gb1, gb2, tol<T>());
}

TEST_CASE("conv1x1 matches a hand matrix product") {
  // y[o, p] = sum_i w[o,i] x[i,p] + b[o], one sample
  const double x[] = {1, 2, 3, 4, 5, 6};        // ci=2, hw=3
  const double w[] = {1, 0.5, -1, 2};           // co=2
  const double b[] = {0.25, -0.25};
  double y[6];
  ref::conv1x1_fwd(x, 1, 2, 3, w, b, 2, y);
  CHECK(y[0] == doctest::Approx(1 + 0.5 * 4 + 0.25));
  CHECK(y[1] == doctest::Approx(2 + 0.5 * 5 + 0.25));
  CHECK(y[2] == doctest::Approx(3 + 0.5 * 6 + 0.25));
  CHECK(y[3] == doctest::Approx(-1 + 2 * 4 - 0.25));
  CHECK(y[5] == doctest::Approx(-3 + 2 * 6 - 0.25));
}

TEST_CASE_TEMPLATE("conv3x3 ref == par (stride 1 and 2)", T, float, double) {
  SplitMix64 rng(12);
  for (int stride : {1, 2}) {
    const int64_t n = 2, ci = 3, co = 4, h = 5, w = 6;
    const int64_t oh = conv_out_extent(h, stride);
    const int64_t ow = conv_out_extent(w, stride);
    auto x = rand_vec<T>(n * ci * h * w, rng);
    auto wgt = rand_vec<T>(co * ci * 9, rng);
    auto b = rand_vec<T>(co, rng);
    auto gy = rand_vec<T>(n * co * oh * ow, rng);

    std::vector<T> y1(n * co * oh * ow), y2(y1);
    ref::conv3x3_fwd(x.data(), n, ci, h, w, wgt.data(), b.data(), co, stride,
                     y1.data());
    par::conv3x3_fwd(x.data(), n, ci, h, w, wgt.data(), b.data(), co, stride,
                     y2.data());
    check_close(y1, y2, tol<T>());

    std::vector<T> gx1(n * ci * h * w, T(0)), gx2(gx1);
    ref::conv3x3_bwd_input(gy.data(), n, co, wgt.data(), ci, h, w, stride,
                           gx1.data());
    par::conv3x3_bwd_input(gy.data(), n, co, wgt.data(), ci, h, w, stride,
                           gx2.data());
    check_close(gx1, gx2, tol<T>());

    std::vector<T> gw1(co * ci * 9, T(0)), gw2(gw1), gb1(co, T(0)), gb2(gb1);
    ref::conv3x3_bwd_params(x.data(), gy.data(), n, ci, co, h, w, stride,
                            gw1.data(), gb1.data());
    par::conv3x3_bwd_params(x.data(), gy.data(), n, ci, co, h, w, stride,
                            gw2.data(), gb2.data());
    check_close(gw1, gw2, tol<T>());
    check_close(gb1, gb2, tol<T>());
  }
}

TEST_CASE("conv3x3 zero padding: ones kernel counts in-bounds neighbours") {
  // all-ones 3x3 input and single all-ones filter: output = neighbourhood sum
  std::vector<double> x(9, 1.0), wgt(9, 1.0);
  std::vector<double> y(9);
  ref::conv3x3_fwd(x.data(), 1, 1, 3, 3, wgt.data(), (double*)nullptr, 1, 1,
                   y.data());
  CHECK(y[4] == doctest::Approx(9));  // center sees all 9
  CHECK(y[0] == doctest::Approx(4));  // corner sees 4 (zero padded)
  CHECK(y[1] == doctest::Approx(6));  // edge sees 6
}

TEST_CASE_TEMPLATE("bn2d ref == par", T, float, double) {
  SplitMix64 rng(13);
  const int64_t n = 3, c = 4, hw = 6;
  auto x = rand_vec<T>(n * c * hw, rng);
  auto gamma = rand_vec<T>(c, rng, 0.5, 1.5);
  auto beta = rand_vec<T>(c, rng);
  auto gy = rand_vec<T>(n * c * hw, rng);

  std::vector<double> m1(c), v1(c), m2(c), v2(c);
  ref::bn2d_stats(x.data(), n, c, hw, m1.data(), v1.data());
  par::bn2d_stats(x.data(), n, c, hw, m2.data(), v2.data());
  for (int64_t i = 0; i < c; ++i) {
    CHECK(m1[i] == doctest::Approx(m2[i]).epsilon(1e-12));
    CHECK(v1[i] == doctest::Approx(v2[i]).epsilon(1e-12));
  }

  std::vector<double> invstd(c);
  for (int64_t i = 0; i < c; ++i) invstd[i] = 1.0 / std::sqrt(v1[i] + 1e-5);
  std::vector<T> y1(n * c * hw), y2(y1), xh1(y1), xh2(y1);
  ref::bn2d_fwd(x.data(), n, c, hw, m1.data(), invstd.data(), gamma.data(),
                beta.data(), y1.data(), xh1.data());
  par::bn2d_fwd(x.data(), n, c, hw, m1.data(), invstd.data(), gamma.data(),
                beta.data(), y2.data(), xh2.data());
  check_close(y1, y2, tol<T>());
  check_close(xh1, xh2, tol<T>());

  for (bool batch_stats : {true, false}) {
    std::vector<T> gx1(n * c * hw, T(0)), gx2(gx1);
    std::vector<T> gg1(c, T(0)), gg2(gg1), gb1(c, T(0)), gb2(gb1);
    ref::bn2d_bwd(xh1.data(), gy.data(), n, c, hw, gamma.data(), invstd.data(),
                  batch_stats, gx1.data(), gg1.data(), gb1.data());
    par::bn2d_bwd(xh1.data(), gy.data(), n, c, hw, gamma.data(), invstd.data(),
                  batch_stats, gx2.data(), gg2.data(), gb2.data());
    check_close(gx1, gx2, tol<T>());
    check_close(gg1, gg2, tol<T>());
    check_close(gb1, gb2, tol<T>());
  }
}

TEST_CASE("bn2d_stats against direct mean/var") {
  // two samples, one channel, hw=2: values 1,2,3,4
  const double x[] = {1, 2, 3, 4};
  double m, v;
  ref::bn2d_stats(x, 2, 1, 2, &m, &v);
  CHECK(m == doctest::Approx(2.5));
  CHECK(v == doctest::Approx(1.25));  // biased: E[x^2]-E[x]^2
}

TEST_CASE_TEMPLATE("softmax / gelu / relu ref == par", T, float, double) {
  SplitMix64 rng(14);
  const int64_t n = 2, c = 5, hw = 9;
  auto x = rand_vec<T>(n * c * hw, rng, -3, 3);
  auto gy = rand_vec<T>(n * c * hw, rng);

  std::vector<T> y1(x.size()), y2(x.size());
  ref::channel_softmax_fwd(x.data(), n, c, hw, y1.data());
  par::channel_softmax_fwd(x.data(), n, c, hw, y2.data());
  check_close(y1, y2, tol<T>());
  // columns sum to one
  for (int64_t nb = 0; nb < n; ++nb)
    for (int64_t p = 0; p < hw; ++p) {
      double s = 0;
      for (int64_t ch = 0; ch < c; ++ch) s += y1[(nb * c + ch) * hw + p];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }

  std::vector<T> gx1(x.size(), T(0)), gx2(x.size(), T(0));
  ref::channel_softmax_bwd(y1.data(), gy.data(), n, c, hw, gx1.data());
  par::channel_softmax_bwd(y1.data(), gy.data(), n, c, hw, gx2.data());
  check_close(gx1, gx2, tol<T>());

  ref::gelu_fwd(x.data(), x.size(), y1.data());
  par::gelu_fwd(x.data(), x.size(), y2.data());
  check_close(y1, y2, tol<T>());
  ref::gelu_bwd(x.data(), gy.data(), x.size(), gx1.data());
  par::gelu_bwd(x.data(), gy.data(), x.size(), gx2.data());
  check_close(gx1, gx2, tol<T>());

  ref::relu_fwd(x.data(), x.size(), y1.data());
  par::relu_fwd(x.data(), x.size(), y2.data());
  check_close(y1, y2, 0.0);
  ref::relu_bwd(y1.data(), gy.data(), x.size(), gx1.data());
  par::relu_bwd(y1.data(), gy.data(), x.size(), gx2.data());
  check_close(gx1, gx2, 0.0);
}

TEST_CASE("gelu exact values") {
  const double x[] = {0.0, 1.0, -1.0};
  double y[3];
  ref::gelu_fwd(x, 3, y);
  CHECK(y[0] == doctest::Approx(0.0));
  CHECK(y[1] == doctest::Approx(0.5 * (1.0 + std::erf(M_SQRT1_2))));
  CHECK(y[2] == doctest::Approx(-0.5 * (1.0 - std::erf(M_SQRT1_2))));
}

TEST_CASE_TEMPLATE("bilinear ref == par", T, float, double) {
  SplitMix64 rng(15);
  const int64_t c = 3, h = 5, w = 4;
  auto x = rand_vec<T>(c * h * w, rng);
  std::vector<T> y1(c * 2 * h * 2 * w), y2(y1);
  ref::bilinear_up2x(x.data(), c, h, w, y1.data());
  par::bilinear_up2x(x.data(), c, h, w, y2.data());
  check_close(y1, y2, tol<T>());

  const int64_t oh = 7, ow = 9;
  std::vector<T> r1(c * oh * ow), r2(r1);
  ref::bilinear_resize(x.data(), c, h, w, r1.data(), oh, ow);
  par::bilinear_resize(x.data(), c, h, w, r2.data(), oh, ow);
  check_close(r1, r2, tol<T>());
}

TEST_CASE("bilinear_up2x oracle: 2x2 -> 4x4") {
  // half-pixel-centre sampling of [[0,1],[2,3]]
  const double x[] = {0, 1, 2, 3};
  double y[16];
  ref::bilinear_up2x(x, 1, 2, 2, y);
  const double want[16] = {0,   0.25, 0.75, 1,    0.5, 0.75, 1.25, 1.5,
                           1.5, 1.75, 2.25, 2.5,  2,   2.25, 2.75, 3};
  for (int i = 0; i < 16; ++i) CHECK(y[i] == doctest::Approx(want[i]));
}

TEST_CASE("bilinear_resize agrees with up2x and is identity at same size") {
  SplitMix64 rng(16);
  const int64_t c = 2, h = 3, w = 5;
  auto x = rand_vec<double>(c * h * w, rng);
  std::vector<double> up(c * 4 * h * w), rs(up);
  ref::bilinear_up2x(x.data(), c, h, w, up.data());
  ref::bilinear_resize(x.data(), c, h, w, rs.data(), 2 * h, 2 * w);
  check_close(up, rs, 1e-12);

  std::vector<double> same(c * h * w);
  ref::bilinear_resize(x.data(), c, h, w, same.data(), h, w);
  check_close(x, same, 1e-12);
}

TEST_CASE_TEMPLATE("sobel ref == par", T, float, double) {
  SplitMix64 rng(17);
  const int64_t c = 2, h = 6, w = 5;
  auto x = rand_vec<T>(c * h * w, rng);
  std::vector<T> gx1(x.size()), gy1(x.size()), gx2(x.size()), gy2(x.size());
  ref::sobel_fwd(x.data(), c, h, w, gx1.data(), gy1.data());
  par::sobel_fwd(x.data(), c, h, w, gx2.data(), gy2.data());
  check_close(gx1, gx2, tol<T>());
  check_close(gy1, gy2, tol<T>());

  std::vector<uint8_t> fg(h * w, 1);
  fg[3] = 0;
  fg[7] = 0;
  std::vector<T> gin1(x.size(), T(0)), gin2(x.size(), T(0));
  ref::sobel_bwd_abs(gx1.data(), gy1.data(), fg.data(), c, h, w, T(0.37),
                     gin1.data());
  par::sobel_bwd_abs(gx1.data(), gy1.data(), fg.data(), c, h, w, T(0.37),
                     gin2.data());
  check_close(gin1, gin2, tol<T>());
}

TEST_CASE("sobel_fwd oracle: independent convolution, replicate border") {
  SplitMix64 rng(18);
  const int64_t h = 4, w = 4;
  auto x = rand_vec<double>(h * w, rng);
  std::vector<double> gx(h * w), gy(h * w);
  ref::sobel_fwd(x.data(), 1, h, w, gx.data(), gy.data());

  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  auto at = [&](int64_t y, int64_t xx) {
    y = std::min(std::max<int64_t>(y, 0), h - 1);
    xx = std::min(std::max<int64_t>(xx, 0), w - 1);
    return x[y * w + xx];
  };
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xx = 0; xx < w; ++xx) {
      double ax = 0, ay = 0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          ax += kx[a][b] * at(y + a - 1, xx + b - 1);
          ay += ky[a][b] * at(y + a - 1, xx + b - 1);
        }
      CHECK(gx[y * w + xx] == doctest::Approx(ax).epsilon(1e-12));
      CHECK(gy[y * w + xx] == doctest::Approx(ay).epsilon(1e-12));
    }
}

TEST_CASE("sobel on a constant map is zero") {
  std::vector<double> x(5 * 7, 3.25), gx(x.size()), gy(x.size());
  ref::sobel_fwd(x.data(), 1, 5, 7, gx.data(), gy.data());
  for (double v : gx) CHECK(v == 0.0);
  for (double v : gy) CHECK(v == 0.0);
}

TEST_CASE_TEMPLATE("pairwise_part_distance ref == par", T, float, double) {
  SplitMix64 rng(19);
  const int64_t na = 4, nb = 3, parts = 2, dim = 5;
  auto a = rand_vec<T>(na * parts * dim, rng);
  auto b = rand_vec<T>(nb * parts * dim, rng);
  std::vector<T> d1(na * nb), d2(d1);
  ref::pairwise_part_distance(a.data(), na, b.data(), nb, parts, dim,
                              d1.data());
  par::pairwise_part_distance(a.data(), na, b.data(), nb, parts, dim,
                              d2.data());
  check_close(d1, d2, tol<T>());
}

TEST_CASE("pairwise_part_distance: 3-4-5 example, mean over parts") {
  // a = ((0),(0)), b = ((3),(4)): part distances 3 and 4 -> mean 3.5
  const double a[] = {0, 0};
  const double b[] = {3, 4};
  double d;
  ref::pairwise_part_distance(a, 1, b, 1, 2, 1, &d);
  CHECK(d == doctest::Approx(3.5));
}

TEST_CASE("kernel dispatch obeys the execution mode") {
  const Exec saved = exec_mode();
  std::vector<double> x = {-1, 2}, y(2);
  set_exec_mode(Exec::Serial);
  kernels::relu_fwd(x.data(), 2, y.data());
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 2.0);
  set_exec_mode(Exec::Parallel);
  kernels::relu_fwd(x.data(), 2, y.data());
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 2.0);
  set_exec_mode(saved);
}
