#include <cmath>
#include <vector>

#include "doctest.h"
#include "gregait/pca.hpp"

using namespace gregait;

namespace {

// 8-sample Walsh rows: zero-mean, unit-variance, mutually orthogonal
const double kW1[8] = {1, -1, 1, -1, 1, -1, 1, -1};
const double kW2[8] = {1, 1, -1, -1, 1, 1, -1, -1};
const double kW3[8] = {1, 1, 1, 1, -1, -1, -1, -1};

// 3-channel map whose channel covariance is exactly diag(4, 1, 0.25)
TensorF diag_map() {
  TensorF m({3, 2, 4});
  for (int64_t i = 0; i < 8; ++i) {
    m[0 * 8 + i] = static_cast<float>(2.0 * kW1[i]);
    m[1 * 8 + i] = static_cast<float>(1.0 * kW2[i]);
    m[2 * 8 + i] = static_cast<float>(0.5 * kW3[i]);
  }
  return m;
}

}  // namespace

TEST_CASE("pca recovers an exactly diagonal covariance") {
  TensorF m = diag_map();
  std::vector<const TensorF*> maps = {&m};
  PCABasis basis = fit_pca(maps, 0);
  REQUIRE(basis.channels == 3);
  for (int k = 0; k < 3; ++k) CHECK_FALSE(basis.zero_variance[k]);

  // eigenvalue shares of trace 5.25
  CHECK(basis.var_fraction[0] == doctest::Approx(4.0 / 5.25).epsilon(1e-9));
  CHECK(basis.var_fraction[1] == doctest::Approx(1.0 / 5.25).epsilon(1e-9));
  CHECK(basis.var_fraction[2] == doctest::Approx(0.25 / 5.25).epsilon(1e-9));

  // axis-aligned directions with the sign rule: dominant coordinate positive
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < 3; ++c) {
      const double want = (k == c) ? 1.0 : 0.0;
      CHECK(std::abs(basis.dirs[k][c]) == doctest::Approx(want).epsilon(1e-7));
      if (k == c) CHECK(basis.dirs[k][c] > 0.0);
    }
  // mean is zero for the Walsh construction
  for (int c = 0; c < 3; ++c)
    CHECK(basis.mean[c] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("pca directions are orthonormal on random data") {
  SplitMix64 rng(91);
  TensorF m({6, 8, 8});
  for (int64_t i = 0; i < m.numel(); ++i)
    m[i] = static_cast<float>(rng.normal());
  std::vector<const TensorF*> maps = {&m};
  PCABasis b = fit_pca(maps, 1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int64_t c = 0; c < 6; ++c) dot += b.dirs[i][c] * b.dirs[j][c];
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-6));
    }
  // fractions are sorted and in (0, 1]
  CHECK(b.var_fraction[0] >= b.var_fraction[1]);
  CHECK(b.var_fraction[1] >= b.var_fraction[2]);
}

TEST_CASE("pca eigenvalues are invariant under channel rotation") {
  SplitMix64 rng(92);
  const int64_t c = 4, hw = 64;
  TensorF m({c, 8, 8});
  for (int64_t i = 0; i < m.numel(); ++i)
    m[i] = static_cast<float>(rng.normal() * (1.0 + 0.5 * (i % c)));

  // Givens rotation in channels (0,2) by 0.7 and (1,3) by -0.4
  TensorF r({c, 8, 8});
  const double c1 = std::cos(0.7), s1 = std::sin(0.7);
  const double c2 = std::cos(-0.4), s2 = std::sin(-0.4);
  for (int64_t p = 0; p < hw; ++p) {
    const double v0 = m[0 * hw + p], v1 = m[1 * hw + p];
    const double v2 = m[2 * hw + p], v3 = m[3 * hw + p];
    r[0 * hw + p] = static_cast<float>(c1 * v0 - s1 * v2);
    r[2 * hw + p] = static_cast<float>(s1 * v0 + c1 * v2);
    r[1 * hw + p] = static_cast<float>(c2 * v1 - s2 * v3);
    r[3 * hw + p] = static_cast<float>(s2 * v1 + c2 * v3);
  }

  std::vector<const TensorF*> ma = {&m}, mb = {&r};
  PCABasis ba = fit_pca(ma, 2);
  PCABasis bb = fit_pca(mb, 2);
  for (int k = 0; k < 3; ++k)
    CHECK(ba.var_fraction[k] ==
          doctest::Approx(bb.var_fraction[k]).epsilon(1e-6));
}

TEST_CASE("pca flags degenerate variance") {
  TensorF flat({3, 4, 4});
  flat.fill(2.5f);
  std::vector<const TensorF*> maps = {&flat};
  PCABasis b = fit_pca(maps, 3);
  for (int k = 0; k < 3; ++k) CHECK(b.zero_variance[k]);

  // rank-1 data: after the first component the rest are degenerate
  TensorF rank1({3, 2, 4});
  for (int64_t p = 0; p < 8; ++p) {
    rank1[0 * 8 + p] = static_cast<float>(kW1[p]);
    rank1[1 * 8 + p] = static_cast<float>(2.0 * kW1[p]);
    rank1[2 * 8 + p] = static_cast<float>(-kW1[p]);
  }
  std::vector<const TensorF*> m1 = {&rank1};
  PCABasis b1 = fit_pca(m1, 4);
  CHECK_FALSE(b1.zero_variance[0]);
  CHECK(b1.zero_variance[1]);
  CHECK(b1.zero_variance[2]);
  CHECK(b1.var_fraction[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca pools statistics across multiple maps") {
  TensorF a = diag_map();
  TensorF b = diag_map();  // duplicated data: same covariance
  std::vector<const TensorF*> one = {&a};
  std::vector<const TensorF*> two = {&a, &b};
  PCABasis p1 = fit_pca(one, 0);
  PCABasis p2 = fit_pca(two, 0);
  for (int k = 0; k < 3; ++k)
    CHECK(p1.var_fraction[k] == doctest::Approx(p2.var_fraction[k]).epsilon(1e-9));
}

TEST_CASE("render: min-max to rgb bytes, flat channels go mid-gray") {
  TensorF m = diag_map();
  std::vector<const TensorF*> maps = {&m};
  PCABasis basis = fit_pca(maps, 0);
  Tensor<uint8_t> rgb = render_pca_rgb(m, basis);
  REQUIRE(rgb.shape() == std::vector<int64_t>({3, 2, 4}));
  // projections onto +-e_k span the full range: 0 and 255 both present
  for (int ch = 0; ch < 3; ++ch) {
    uint8_t lo = 255, hi = 0;
    for (int64_t p = 0; p < 8; ++p) {
      lo = std::min(lo, rgb[ch * 8 + p]);
      hi = std::max(hi, rgb[ch * 8 + p]);
    }
    CHECK(lo == 0);
    CHECK(hi == 255);
  }

  TensorF flat({3, 2, 4});
  flat.fill(1.0f);
  std::vector<const TensorF*> fm = {&flat};
  PCABasis fb = fit_pca(fm, 0);
  Tensor<uint8_t> gray = render_pca_rgb(flat, fb);
  for (int64_t i = 0; i < gray.numel(); ++i) CHECK(gray[i] == 128);
}
