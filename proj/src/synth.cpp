#include "gregait/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "gregait/common.hpp"

namespace gregait {

namespace {

constexpr int64_t kH = 448, kW = 224;
constexpr double kViewScale[] = {0.55, 0.80, 1.05, 1.30};

struct BodyShape {
  double head_r, torso_w, torso_h, leg_len, leg_w, arm_w, hip_w;
};

// low-discrepancy per-identity proportions: deterministic and well spread
double id_param(int64_t id, int j) {
  static const double mult[] = {0.6180339887, 0.7548776662, 0.5698402910,
                                0.3819660113, 0.8221207400, 0.4655712319,
                                0.2875764400};
  const double v = 0.5 + static_cast<double>(id + 1) * mult[j];
  return v - std::floor(v);
}

BodyShape shape_for(int64_t id) {
  BodyShape s;
  s.head_r = 16.0 + 12.0 * id_param(id, 0);
  s.torso_w = 26.0 + 24.0 * id_param(id, 1);
  s.torso_h = 85.0 + 35.0 * id_param(id, 2);
  s.leg_len = 115.0 + 45.0 * id_param(id, 3);
  s.leg_w = 9.0 + 7.0 * id_param(id, 4);
  s.arm_w = 6.0 + 4.0 * id_param(id, 5);
  s.hip_w = 18.0 + 14.0 * id_param(id, 6);
  return s;
}

struct Capsule {
  double ax, ay, bx, by, r;
};
struct Ellipse {
  double cx, cy, rx, ry;
};

struct Figure {
  Ellipse head, torso;
  Capsule limbs[4];  // two legs, two arms
};

Figure build_figure(const SynthFrameDesc& d) {
  const BodyShape s = shape_for(d.id);
  const double sv = kViewScale[d.view % 4];
  // per-sequence phase offset so replicas of one cell are not identical
  const double seq_shift = SplitMix64(0x5e9 + static_cast<uint64_t>(d.seq)).uniform();
  const double phase =
      2.0 * M_PI * (static_cast<double>(d.frame) + seq_shift) /
      static_cast<double>(std::max<int64_t>(d.total, 1));
  const double bob = 3.0 * std::sin(2.0 * phase);
  const double cx = kW / 2.0;

  Figure f;
  const double head_cy = 72.0 + bob;
  f.head = {cx, head_cy, s.head_r * sv, s.head_r};
  const double torso_cy = head_cy + s.head_r + s.torso_h * 0.55;
  f.torso = {cx, torso_cy, s.torso_w * sv, s.torso_h * 0.62};
  const double hip_y = torso_cy + s.torso_h * 0.5;
  const double swing = 0.38 * std::sin(phase);
  for (int leg = 0; leg < 2; ++leg) {
    const double sign = leg == 0 ? 1.0 : -1.0;
    const double hx = cx + sign * s.hip_w * 0.45 * sv;
    const double ang = sign * swing;
    f.limbs[leg] = {hx, hip_y, hx + std::sin(ang) * s.leg_len * 0.9 * sv,
                    hip_y + std::cos(ang) * s.leg_len,
                    std::max(2.0, s.leg_w * sv)};
  }
  const double sh_y = torso_cy - s.torso_h * 0.45;
  const double arm_len = s.leg_len * 0.72;
  for (int arm = 0; arm < 2; ++arm) {
    const double sign = arm == 0 ? 1.0 : -1.0;
    const double sx = cx + sign * s.torso_w * 0.85 * sv;
    const double ang = -sign * swing * 0.7;
    f.limbs[2 + arm] = {sx, sh_y, sx + std::sin(ang) * arm_len * 0.8 * sv,
                        sh_y + std::cos(ang) * arm_len,
                        std::max(2.0, s.arm_w * sv)};
  }
  return f;
}

bool in_ellipse(const Ellipse& e, double x, double y) {
  const double dx = (x - e.cx) / e.rx, dy = (y - e.cy) / e.ry;
  return dx * dx + dy * dy <= 1.0;
}

bool in_capsule(const Capsule& c, double x, double y) {
  const double vx = c.bx - c.ax, vy = c.by - c.ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((x - c.ax) * vx + (y - c.ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = x - (c.ax + t * vx), dy = y - (c.ay + t * vy);
  return dx * dx + dy * dy <= c.r * c.r;
}

// 0 = background, 1 = body, 2 = head
int classify(const Figure& f, double x, double y) {
  if (in_ellipse(f.head, x, y)) return 2;
  if (in_ellipse(f.torso, x, y)) return 1;
  for (const auto& c : f.limbs)
    if (in_capsule(c, x, y)) return 1;
  return 0;
}

void palette(int64_t cond, double x, double y, bool fg, bool head, float* rgb) {
  if (fg) {
    if (cond == 0) {
      rgb[0] = head ? 0.72f : 0.85f;
      rgb[1] = head ? 0.70f : 0.82f;
      rgb[2] = head ? 0.66f : 0.76f;
    } else {
      rgb[0] = head ? 0.36f : 0.30f;
      rgb[1] = head ? 0.39f : 0.33f;
      rgb[2] = head ? 0.55f : 0.50f;
    }
    return;
  }
  if (cond == 0) {
    // dark bluish checkerboard
    const bool tile = ((static_cast<int64_t>(x) / 28) +
                       (static_cast<int64_t>(y) / 28)) % 2 == 0;
    const float v = tile ? 0.11f : 0.18f;
    rgb[0] = 0.90f * v;
    rgb[1] = v;
    rgb[2] = 1.15f * v;
  } else {
    // warm diagonal stripes
    const bool stripe =
        ((static_cast<int64_t>(x + y) / 12) % 2) == 0;
    const float v = stripe ? 0.52f : 0.58f;
    rgb[0] = 1.08f * v;
    rgb[1] = v;
    rgb[2] = 0.78f * v;
  }
}

}  // namespace

bool synth_uri(const std::string& path) {
  return path.rfind("synth://", 0) == 0;
}

std::string make_synth_uri(const SynthFrameDesc& d) {
  char buf[160];
  if (d.bright != 0.0) {
    std::snprintf(buf, sizeof(buf),
                  "synth://f?id=%lld&view=%lld&cond=%lld&seq=%lld&frame=%lld"
                  "&total=%lld&bright=%.4f",
                  static_cast<long long>(d.id), static_cast<long long>(d.view),
                  static_cast<long long>(d.cond), static_cast<long long>(d.seq),
                  static_cast<long long>(d.frame),
                  static_cast<long long>(d.total), d.bright);
  } else {
    std::snprintf(buf, sizeof(buf),
                  "synth://f?id=%lld&view=%lld&cond=%lld&seq=%lld&frame=%lld"
                  "&total=%lld",
                  static_cast<long long>(d.id), static_cast<long long>(d.view),
                  static_cast<long long>(d.cond), static_cast<long long>(d.seq),
                  static_cast<long long>(d.frame),
                  static_cast<long long>(d.total));
  }
  return buf;
}

SynthFrameDesc parse_synth_uri(const std::string& uri) {
  GG_CHECK(synth_uri(uri), "not a synth:// URI: " << uri);
  const auto q = uri.find('?');
  GG_CHECK(q != std::string::npos, "synth URI missing query: " << uri);
  std::map<std::string, std::string> kv;
  size_t pos = q + 1;
  while (pos < uri.size()) {
    size_t amp = uri.find('&', pos);
    if (amp == std::string::npos) amp = uri.size();
    const std::string pair = uri.substr(pos, amp - pos);
    const auto eq = pair.find('=');
    GG_CHECK(eq != std::string::npos, "bad synth URI field '" << pair << "'");
    kv[pair.substr(0, eq)] = pair.substr(eq + 1);
    pos = amp + 1;
  }
  SynthFrameDesc d;
  for (const auto& [key, val] : kv) {
    if (key == "id") d.id = std::stoll(val);
    else if (key == "view") d.view = std::stoll(val);
    else if (key == "cond") d.cond = std::stoll(val);
    else if (key == "seq") d.seq = std::stoll(val);
    else if (key == "frame") d.frame = std::stoll(val);
    else if (key == "total") d.total = std::stoll(val);
    else if (key == "bright") d.bright = std::stod(val);
    else fail("unknown synth URI key '" + key + "' in " + uri);
  }
  GG_CHECK(d.view >= 0 && d.view < 4, "synth view out of range in " << uri);
  GG_CHECK(d.cond >= 0 && d.cond < 2, "synth cond out of range in " << uri);
  GG_CHECK(d.total >= 1 && d.frame >= 0 && d.frame < d.total,
           "synth frame/total invalid in " << uri);
  return d;
}

ImageF render_synth_frame(const SynthFrameDesc& d) {
  const Figure fig = build_figure(d);
  ImageF img({3, kH, kW});
  float rgb[3];
  for (int64_t y = 0; y < kH; ++y) {
    for (int64_t x = 0; x < kW; ++x) {
      const int cls = classify(fig, static_cast<double>(x) + 0.5,
                               static_cast<double>(y) + 0.5);
      palette(d.cond, static_cast<double>(x), static_cast<double>(y), cls != 0,
              cls == 2, rgb);
      for (int64_t c = 0; c < 3; ++c) {
        img(c, y, x) = std::clamp(rgb[c] + static_cast<float>(d.bright), 0.0f,
                                  1.0f);
      }
    }
  }
  return img;
}

ImageF render_synth_frame(const std::string& uri) {
  return render_synth_frame(parse_synth_uri(uri));
}

Tensor<uint8_t> render_synth_mask(const SynthFrameDesc& d) {
  const Figure fig = build_figure(d);
  Tensor<uint8_t> mask({kH, kW});
  for (int64_t y = 0; y < kH; ++y) {
    for (int64_t x = 0; x < kW; ++x) {
      mask(y, x) = classify(fig, static_cast<double>(x) + 0.5,
                            static_cast<double>(y) + 0.5) != 0
                       ? 1
                       : 0;
    }
  }
  return mask;
}

void synth_figure_bbox(const SynthFrameDesc& d, int64_t* y0, int64_t* x0,
                       int64_t* y1, int64_t* x1) {
  const Tensor<uint8_t> mask = render_synth_mask(d);
  *y0 = kH;
  *x0 = kW;
  *y1 = -1;
  *x1 = -1;
  for (int64_t y = 0; y < kH; ++y) {
    for (int64_t x = 0; x < kW; ++x) {
      if (!mask(y, x)) continue;
      *y0 = std::min(*y0, y);
      *x0 = std::min(*x0, x);
      *y1 = std::max(*y1, y);
      *x1 = std::max(*x1, x);
    }
  }
  GG_CHECK(*y1 >= 0, "empty synth figure");
}

DatasetManifest make_synth_manifest(const SynthDatasetSpec& spec) {
  GG_CHECK(spec.train_ids > 0 && spec.train_ids < spec.n_ids,
           "train_ids must split the identity range");
  GG_CHECK(spec.holdout_view >= 0 && spec.holdout_view < spec.n_views &&
               spec.n_views <= 4,
           "holdout view out of range");
  DatasetManifest m;
  m.dataset = spec.name;
  for (int64_t id = 0; id < spec.n_ids; ++id) {
    const bool train = id < spec.train_ids;
    for (int64_t view = 0; view < spec.n_views; ++view) {
      const bool holdout = view == spec.holdout_view;
      for (int64_t cond = 0; cond < spec.n_conds; ++cond) {
        std::string split;
        if (train) {
          if (holdout) continue;  // held-out view unseen during training
          split = "train";
        } else if (holdout) {
          split = "probe";
        } else {
          if (cond != 0) continue;  // gallery holds the base condition
          split = "gallery";
        }
        SequenceRecord r;
        char idbuf[16], vbuf[16], cbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "%03lld", static_cast<long long>(id));
        std::snprintf(vbuf, sizeof(vbuf), "%lld", static_cast<long long>(view));
        std::snprintf(cbuf, sizeof(cbuf), "C%lld", static_cast<long long>(cond));
        r.id = idbuf;
        r.view = vbuf;
        r.condition = cbuf;
        r.seq = "0";
        r.split = split;
        for (int64_t fr = 0; fr < spec.frames; ++fr) {
          SynthFrameDesc d;
          d.id = id;
          d.view = view;
          d.cond = cond;
          d.seq = 0;
          d.frame = fr;
          d.total = spec.frames;
          d.bright = spec.bright;
          r.frames.push_back(make_synth_uri(d));
        }
        m.entries.push_back(std::move(r));
      }
    }
  }
  return m;
}

}  // namespace gregait
