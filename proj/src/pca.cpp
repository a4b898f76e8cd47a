#include "gregait/pca.hpp"

#include <algorithm>
#include <cmath>

namespace gregait {

namespace {
// largest eigenpair of `cov` (c x c) orthogonal to `prev` via power
// iteration with per-step re-orthogonalization
void power_iteration(const std::vector<double>& cov, int64_t c,
                     const std::vector<std::vector<double>>& prev,
                     SplitMix64& rng, std::vector<double>& v, double& lambda) {
  v.resize(static_cast<size_t>(c));
  for (auto& x : v) x = rng.normal();
  std::vector<double> w(static_cast<size_t>(c));
  lambda = 0;
  for (int it = 0; it < 1000; ++it) {
    // project out the directions already found
    for (const auto& p : prev) {
      double dot = 0;
      for (int64_t i = 0; i < c; ++i) dot += v[i] * p[i];
      for (int64_t i = 0; i < c; ++i) v[i] -= dot * p[i];
    }
    double nrm = 0;
    for (int64_t i = 0; i < c; ++i) nrm += v[i] * v[i];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-30) {  // degenerate start; re-seed
      for (auto& x : v) x = rng.normal();
      continue;
    }
    for (int64_t i = 0; i < c; ++i) v[i] /= nrm;
    for (int64_t i = 0; i < c; ++i) {
      double acc = 0;
      for (int64_t j = 0; j < c; ++j) acc += cov[i * c + j] * v[j];
      w[i] = acc;
    }
    double nl = 0;
    for (int64_t i = 0; i < c; ++i) nl += v[i] * w[i];  // Rayleigh quotient
    const bool converged = std::abs(nl - lambda) <= 1e-13 * std::max(1.0, std::abs(nl));
    lambda = nl;
    double wn = 0;
    for (int64_t i = 0; i < c; ++i) wn += w[i] * w[i];
    wn = std::sqrt(wn);
    if (wn < 1e-30) break;  // v is in the null space; keep current v
    for (int64_t i = 0; i < c; ++i) v[i] = w[i] / wn;
    if (converged && it >= 3) break;
  }
  // final cleanup: orthogonalize and normalize once more
  for (const auto& p : prev) {
    double dot = 0;
    for (int64_t i = 0; i < c; ++i) dot += v[i] * p[i];
    for (int64_t i = 0; i < c; ++i) v[i] -= dot * p[i];
  }
  double nrm = 0;
  for (int64_t i = 0; i < c; ++i) nrm += v[i] * v[i];
  nrm = std::sqrt(nrm);
  if (nrm > 1e-30)
    for (int64_t i = 0; i < c; ++i) v[i] /= nrm;
}

void apply_sign_rule(std::vector<double>& v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0)
    for (auto& x : v) x = -x;
}
}  // namespace

PCABasis fit_pca(const std::vector<const TensorF*>& maps, uint64_t seed,
                 int64_t max_pixels) {
  GG_CHECK(!maps.empty(), "no feature maps to fit");
  const int64_t c = maps[0]->shape(0);
  int64_t total = 0;
  for (const TensorF* m : maps) {
    GG_CHECK(m->ndim() == 3 && m->shape(0) == c,
             "feature maps must share [C,H,W] with equal C");
    total += m->shape(1) * m->shape(2);
  }
  GG_CHECK(total >= 3, "need at least 3 feature pixels, got " << total);

  // uniform pixel subsample across the whole collection
  SplitMix64 rng(seed * 0x9e3779b97f4a7c15ull + 0x9ca7ull);
  std::vector<int64_t> take;
  if (total <= max_pixels) {
    take.resize(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) take[static_cast<size_t>(i)] = i;
  } else {
    take.resize(static_cast<size_t>(max_pixels));
    // sorted reservoir-free pick: evenly spaced with random phase
    const double stride = static_cast<double>(total) / max_pixels;
    const double phase = rng.uniform() * stride;
    for (int64_t i = 0; i < max_pixels; ++i)
      take[static_cast<size_t>(i)] = std::min<int64_t>(
          total - 1, static_cast<int64_t>(phase + stride * i));
  }

  // gather pixels: flat index -> (map, spatial offset)
  const int64_t n = static_cast<int64_t>(take.size());
  std::vector<double> mean(static_cast<size_t>(c), 0.0);
  std::vector<double> px(static_cast<size_t>(n * c));
  {
    int64_t cursor = 0;
    size_t mi = 0;
    int64_t mbase = 0, mhw = maps[0]->shape(1) * maps[0]->shape(2);
    for (int64_t r = 0; r < n; ++r) {
      const int64_t g = take[static_cast<size_t>(r)];
      while (g >= mbase + mhw) {
        mbase += mhw;
        ++mi;
        mhw = maps[mi]->shape(1) * maps[mi]->shape(2);
      }
      const int64_t off = g - mbase;
      const TensorF& m = *maps[mi];
      for (int64_t ch = 0; ch < c; ++ch) {
        const double v = m[ch * mhw + off];
        px[static_cast<size_t>(r * c + ch)] = v;
        mean[static_cast<size_t>(ch)] += v;
      }
      ++cursor;
    }
    (void)cursor;
  }
  for (int64_t ch = 0; ch < c; ++ch) mean[static_cast<size_t>(ch)] /= n;

  std::vector<double> cov(static_cast<size_t>(c * c), 0.0);
  for (int64_t r = 0; r < n; ++r) {
    const double* row = &px[static_cast<size_t>(r * c)];
    for (int64_t i = 0; i < c; ++i) {
      const double xi = row[i] - mean[static_cast<size_t>(i)];
      for (int64_t j = i; j < c; ++j)
        cov[static_cast<size_t>(i * c + j)] +=
            xi * (row[j] - mean[static_cast<size_t>(j)]);
    }
  }
  for (int64_t i = 0; i < c; ++i)
    for (int64_t j = i; j < c; ++j) {
      cov[static_cast<size_t>(i * c + j)] /= n;
      cov[static_cast<size_t>(j * c + i)] = cov[static_cast<size_t>(i * c + j)];
    }
  double trace = 0;
  for (int64_t i = 0; i < c; ++i) trace += cov[static_cast<size_t>(i * c + i)];

  PCABasis basis;
  basis.channels = c;
  basis.mean = mean;
  basis.dirs.assign(3, std::vector<double>(static_cast<size_t>(c), 0.0));
  basis.var_fraction.assign(3, 0.0);
  basis.zero_variance.assign(3, false);
  const double floor = std::max(trace, 1.0) * 1e-12;
  std::vector<std::vector<double>> found;
  std::vector<double> work = cov;  // deflated in place as directions land
  for (int k = 0; k < 3; ++k) {
    if (static_cast<int64_t>(found.size()) >= c) {
      basis.zero_variance[static_cast<size_t>(k)] = true;
      continue;
    }
    std::vector<double> v;
    double lambda = 0;
    power_iteration(work, c, found, rng, v, lambda);
    apply_sign_rule(v);
    basis.dirs[static_cast<size_t>(k)] = v;
    if (lambda <= floor) {
      basis.zero_variance[static_cast<size_t>(k)] = true;
      basis.var_fraction[static_cast<size_t>(k)] = 0.0;
    } else {
      basis.var_fraction[static_cast<size_t>(k)] =
          trace > 0 ? lambda / trace : 0.0;
      // Hotelling deflation: projection alone lets rounding residue of a
      // dominant direction re-amplify when the remainder is (near) rank
      // deficient, so remove it from the matrix as well
      for (int64_t i = 0; i < c; ++i)
        for (int64_t j = 0; j < c; ++j)
          work[static_cast<size_t>(i * c + j)] -=
              lambda * v[static_cast<size_t>(i)] * v[static_cast<size_t>(j)];
    }
    found.push_back(basis.dirs[static_cast<size_t>(k)]);
  }
  return basis;
}

Tensor<uint8_t> render_pca_rgb(const TensorF& fmap, const PCABasis& basis) {
  GG_CHECK(fmap.ndim() == 3 && fmap.shape(0) == basis.channels,
           "feature map channels do not match the basis");
  const int64_t c = basis.channels;
  const int64_t h = fmap.shape(1), w = fmap.shape(2), hw = h * w;
  Tensor<uint8_t> out({3, h, w});
  std::vector<double> proj(static_cast<size_t>(hw));
  for (int k = 0; k < 3; ++k) {
    double lo = 0, hi = 0;
    for (int64_t i = 0; i < hw; ++i) {
      double acc = 0;
      for (int64_t ch = 0; ch < c; ++ch)
        acc += (static_cast<double>(fmap[ch * hw + i]) -
                basis.mean[static_cast<size_t>(ch)]) *
               basis.dirs[static_cast<size_t>(k)][static_cast<size_t>(ch)];
      proj[static_cast<size_t>(i)] = acc;
      if (i == 0 || acc < lo) lo = acc;
      if (i == 0 || acc > hi) hi = acc;
    }
    const double range = hi - lo;
    const bool flat =
        basis.zero_variance[static_cast<size_t>(k)] || range <= 1e-12;
    for (int64_t i = 0; i < hw; ++i) {
      double v = flat ? 128.0
                      : 255.0 * (proj[static_cast<size_t>(i)] - lo) / range;
      v = std::min(255.0, std::max(0.0, std::round(v)));
      out[k * hw + i] = static_cast<uint8_t>(v);
    }
  }
  return out;
}

}  // namespace gregait
