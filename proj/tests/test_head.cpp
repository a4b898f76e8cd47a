#include <cmath>
#include <set>

#include "doctest.h"
#include "gregait/head.hpp"

using namespace gregait;

namespace {

Tensor<double> randn(std::vector<int64_t> shape, SplitMix64& rng,
                     double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

HeadConfig tiny(const std::string& streams, int64_t classes = 0,
                const std::string& pool = "max") {
  HeadConfig cfg;
  cfg.in_channels = 4;
  cfg.widths = {6, 6, 8, 10};
  cfg.parts = 2;
  cfg.dim = 5;
  cfg.num_classes = classes;
  cfg.streams = streams;
  cfg.pool = pool;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("head forward shapes across stream and pooling modes") {
  SplitMix64 rng(81);
  const int64_t b = 2, l = 3, h = 12, w = 8;
  Tensor<double> xa = randn({b * l, 4, h, w}, rng);
  Tensor<double> xd = randn({b * l, 4, h, w}, rng);

  for (const char* streams : {"dual", "ap", "de"}) {
    for (const char* pool : {"max", "meanmax"}) {
      Head<double> head(tiny(streams, 7, pool));
      Tensor<double> empty;
      auto out = head.forward(std::string(streams) == "de" ? empty : xa,
                              std::string(streams) == "ap" ? empty : xd, b, l,
                              true);
      REQUIRE(out.emb.shape() == std::vector<int64_t>({b, 2, 5}));
      REQUIRE(out.logits.shape() == std::vector<int64_t>({b, 2, 7}));
    }
  }

  Head<double> noclass(tiny("dual"));
  auto out = noclass.forward(xa, xd, b, l, false);
  CHECK(out.logits.numel() == 0);
}

TEST_CASE("single-stream heads skip the unused stem and the gate") {
  Head<double> dual(tiny("dual"));
  Head<double> ap(tiny("ap"));
  ParamRefs<double> pd, pa;
  dual.collect(pd);
  ap.collect(pa);
  CHECK(pa.size() < pd.size());
  for (Param<double>* p : pa) {
    CHECK(p->name.find("b1_de") == std::string::npos);
    CHECK(p->name.find("fuse") == std::string::npos);
  }
  std::set<std::string> names;
  for (Param<double>* p : pd) names.insert(p->name);
  CHECK(names.size() == pd.size());  // unique parameter names
}

TEST_CASE("cross-select gate weights are a two-way softmax") {
  SplitMix64 rng(82);
  CrossSelect<double> fuse;
  fuse.setup("f", 6, rng);
  Tensor<double> a = randn({3, 6, 4, 4}, rng);
  Tensor<double> b = randn({3, 6, 4, 4}, rng);
  Tensor<double> y = fuse.forward(a, b);
  REQUIRE(y.same_shape(a));
  const Tensor<double>& wa = fuse.gate_a();
  REQUIRE(wa.shape() == std::vector<int64_t>({3, 6}));
  for (int64_t i = 0; i < wa.numel(); ++i) {
    CHECK(wa[i] > 0.0);
    CHECK(wa[i] < 1.0);
  }
}

TEST_CASE("cross-select gradient check (inputs and parameters)") {
  SplitMix64 rng(83);
  CrossSelect<double> fuse;
  fuse.setup("f", 4, rng);
  Tensor<double> a = randn({2, 4, 3, 3}, rng);
  Tensor<double> b = randn({2, 4, 3, 3}, rng);
  Tensor<double> r = randn({2, 4, 3, 3}, rng);

  auto loss = [&]() {
    Tensor<double> y = fuse.forward(a, b);
    double L = 0;
    for (int64_t i = 0; i < y.numel(); ++i) L += y[i] * r[i];
    return L;
  };
  loss();
  Tensor<double> ga(a.shape()), gb(b.shape());
  fuse.backward(r, ga, gb);

  const double eps = 1e-6;
  auto fd_worst = [&](Tensor<double>& vals, const Tensor<double>& analytic) {
    double worst = 0;
    for (int64_t i = 0; i < vals.numel(); ++i) {
      const double save = vals[i];
      vals[i] = save + eps;
      const double lp = loss();
      vals[i] = save - eps;
      const double lm = loss();
      vals[i] = save;
      const double num = (lp - lm) / (2 * eps);
      worst = std::max(worst,
                       std::abs(num - analytic[i]) / std::max(1.0, std::abs(num)));
    }
    return worst;
  };
  CHECK(fd_worst(a, ga) < 2e-6);
  CHECK(fd_worst(b, gb) < 2e-6);
  ParamRefs<double> ps;
  fuse.collect(ps);
  for (Param<double>* p : ps) CHECK(fd_worst(p->w, p->g) < 2e-6);
}

TEST_CASE("head end-to-end gradient check, dual stream with classifier") {
  SplitMix64 rng(84);
  const int64_t b = 2, l = 2, h = 8, w = 8;
  Head<double> head(tiny("dual", 3));
  Tensor<double> xa = randn({b * l, 4, h, w}, rng);
  Tensor<double> xd = randn({b * l, 4, h, w}, rng);
  Tensor<double> r_emb = randn({b, 2, 5}, rng, 0.5);
  Tensor<double> r_log = randn({b, 2, 3}, rng, 0.5);

  auto loss = [&]() {
    auto out = head.forward(xa, xd, b, l, true);
    double L = 0;
    for (int64_t i = 0; i < out.emb.numel(); ++i) L += out.emb[i] * r_emb[i];
    for (int64_t i = 0; i < out.logits.numel(); ++i)
      L += out.logits[i] * r_log[i];
    return L;
  };
  loss();
  Tensor<double> gxa, gxd;
  head.backward(r_emb, r_log, gxa, gxd);
  REQUIRE(gxa.same_shape(xa));
  REQUIRE(gxd.same_shape(xd));

  // spot-check a subset of input coordinates plus every parameter of the
  // gate and the part projection (full FD across all params runs in the
  // acceptance gate)
  const double eps = 1e-6;
  auto fd_at = [&](Tensor<double>& vals, int64_t i) {
    const double save = vals[i];
    vals[i] = save + eps;
    const double lp = loss();
    vals[i] = save - eps;
    const double lm = loss();
    vals[i] = save;
    return (lp - lm) / (2 * eps);
  };
  SplitMix64 pick(85);
  double worst = 0;
  for (int t = 0; t < 25; ++t) {
    const int64_t i = int64_t(pick.next() % uint64_t(xa.numel()));
    const double na = fd_at(xa, i);
    worst = std::max(worst, std::abs(na - gxa[i]) / std::max(1.0, std::abs(na)));
    const double nd = fd_at(xd, i);
    worst = std::max(worst, std::abs(nd - gxd[i]) / std::max(1.0, std::abs(nd)));
  }
  CHECK(worst < 5e-6);

  ParamRefs<double> ps;
  head.collect(ps);
  double worst_p = 0;
  for (Param<double>* p : ps) {
    if (p->name.find("part_fc") == std::string::npos &&
        p->name.find("fuse") == std::string::npos &&
        p->name.find("cls") == std::string::npos)
      continue;
    for (int64_t i = 0; i < p->w.numel(); i += 3) {
      const double num = fd_at(p->w, i);
      worst_p = std::max(worst_p,
                         std::abs(num - p->g[i]) / std::max(1.0, std::abs(num)));
    }
  }
  CHECK(worst_p < 5e-6);
}

TEST_CASE("frame max pooling picks per-element maxima over frames") {
  // strip pooling happens after the trunk, so probe it through the taps:
  // identical frames pool to the same trunk output as a single frame
  SplitMix64 rng(86);
  const int64_t l = 3, h = 8, w = 8;
  Head<double> head(tiny("ap"));
  Tensor<double> one = randn({1, 4, h, w}, rng);
  Tensor<double> rep({l, 4, h, w});
  for (int64_t f = 0; f < l; ++f)
    for (int64_t i = 0; i < one.numel(); ++i) rep[f * one.numel() + i] = one[i];

  Tensor<double> empty;
  auto out_rep = head.forward(rep, empty, 1, l, false);
  auto out_one = head.forward(one, empty, 1, 1, false);
  REQUIRE(out_rep.emb.same_shape(out_one.emb));
  for (int64_t i = 0; i < out_rep.emb.numel(); ++i)
    CHECK(out_rep.emb[i] == doctest::Approx(out_one.emb[i]).epsilon(1e-12));
}

TEST_CASE("meanmax pooling of identical frames matches mean+max structure") {
  // with identical frames mean == max, so meanmax equals 2x-the-max path
  // only through the strip stage; here we just assert determinism and shape
  SplitMix64 rng(87);
  Head<double> head(tiny("de", 0, "meanmax"));
  Tensor<double> x = randn({4, 4, 8, 8}, rng);
  Tensor<double> empty;
  auto a = head.forward(empty, x, 2, 2, false);
  auto b = head.forward(empty, x, 2, 2, false);
  for (int64_t i = 0; i < a.emb.numel(); ++i) REQUIRE(a.emb[i] == b.emb[i]);
}

TEST_CASE("taps expose the stem/fused activations with matching shapes") {
  SplitMix64 rng(88);
  const int64_t b = 1, l = 2, h = 8, w = 8;
  Head<double> head(tiny("dual"));
  Tensor<double> xa = randn({b * l, 4, h, w}, rng);
  Tensor<double> xd = randn({b * l, 4, h, w}, rng);
  auto out = head.forward(xa, xd, b, l, false);

  const auto& ta = head.tap_b1_ap();
  const auto& td = head.tap_b1_de();
  const auto& tf = head.tap_fused();
  REQUIRE(ta.ndim() == 4);
  REQUIRE(ta.shape(0) == b * l);
  REQUIRE(ta.same_shape(td));
  REQUIRE(ta.same_shape(tf));

  Tensor<double> g_emb(out.emb.shape());
  g_emb.fill(1.0);
  Tensor<double> ga, gd, gf;
  head.taps_gradient(g_emb, ga, gd, gf);
  REQUIRE(ga.same_shape(ta));
  REQUIRE(gd.same_shape(td));
  REQUIRE(gf.same_shape(tf));

  // single-stream head: unused tap gradient comes back empty
  Head<double> ap(tiny("ap"));
  Tensor<double> empty;
  auto out2 = ap.forward(xa, empty, b, l, false);
  Tensor<double> g2(out2.emb.shape());
  g2.fill(1.0);
  Tensor<double> ga2, gd2, gf2;
  ap.taps_gradient(g2, ga2, gd2, gf2);
  CHECK(ga2.numel() > 0);
  CHECK(gd2.numel() == 0);
}

TEST_CASE("strip pooling requires enough rows for the part count") {
  SplitMix64 rng(89);
  HeadConfig cfg = tiny("ap");
  cfg.parts = 16;  // trunk reduces 8x8 far below 16 rows
  Head<double> head(cfg);
  Tensor<double> x = randn({2, 4, 8, 8}, rng);
  Tensor<double> empty;
  CHECK_THROWS(head.forward(x, empty, 1, 2, false));
}
