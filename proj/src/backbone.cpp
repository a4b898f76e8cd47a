#include "gregait/backbone.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gregait/common.hpp"
#include "gregait/kernels.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "cache payloads are little-endian");

namespace gregait {

std::vector<int64_t> select_tap_layers(int64_t num_blocks, int64_t k) {
  GG_CHECK(num_blocks >= k && k >= 1,
           "need at least " << k << " blocks, got " << num_blocks);
  std::vector<int64_t> taps(k);
  for (int64_t i = 1; i <= k; ++i) taps[i - 1] = (i * num_blocks + k - 1) / k;
  return taps;
}

namespace {

// Desk-scale stand-in for a frozen self-supervised model. Token features
// blend a local patch projection (dominant in the lowest tap) with a
// semantic component (dominant in the highest tap) built from two cluster
// centers: foreground tokens pull toward a direction modulated by a global
// silhouette-shape descriptor, background tokens toward a direction
// modulated by local patch color. Additive noise is a pure function of
// patch content, so extraction is deterministic.
class SyntheticProvider final : public FeatureProvider {
 public:
  explicit SyntheticProvider(const BackboneSpec& spec) : spec_(spec) {
    const int64_t e = spec.embed_dim;
    SplitMix64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 1);
    fg_center_ = random_mat(rng, e, 1, 0.9);
    desc_mat_ = random_mat(rng, e, kDescDim, 0.6);
    bg_center_ = random_mat(rng, e, 1, 0.9);
    bg_color_mat_ = random_mat(rng, e, 3, 0.5);
    local_mat_ = random_mat(rng, e, kStatDim, 0.7);
  }

  std::string name() const override { return "synthetic"; }
  int64_t embed_dim() const override { return spec_.embed_dim; }
  int64_t grid_h() const override { return spec_.grid_h(); }
  int64_t grid_w() const override { return spec_.grid_w(); }

  uint64_t param_hash() const override {
    uint64_t h = hash_bytes(fg_center_.data(), fg_center_.size() * 4);
    h = hash_mix(h, hash_bytes(desc_mat_.data(), desc_mat_.size() * 4));
    h = hash_mix(h, hash_bytes(bg_center_.data(), bg_center_.size() * 4));
    h = hash_mix(h, hash_bytes(bg_color_mat_.data(), bg_color_mat_.size() * 4));
    h = hash_mix(h, hash_bytes(local_mat_.data(), local_mat_.size() * 4));
    return h;
  }

  std::vector<TensorF> extract(const std::string& /*frame_path*/,
                               const ImageF& frame) const override {
    const int64_t gh = grid_h(), gw = grid_w();
    GG_CHECK(frame.shape(1) == spec_.input_h && frame.shape(2) == spec_.input_w,
             "frame must be " << spec_.input_h << "x" << spec_.input_w
                              << ", got " << frame.shape(1) << "x"
                              << frame.shape(2));
    GG_CHECK(all_finite(frame), "non-finite frame");
    const int64_t e = spec_.embed_dim;
    const int64_t tokens = gh * gw;

    // per-token patch statistics
    std::vector<float> stats(tokens * kStatDim);
    std::vector<uint64_t> content(tokens);
    token_stats(frame, gh, gw, stats.data(), content.data());

    // background reference = per-channel median over the border ring
    float bg_ref[3];
    border_median(stats.data(), gh, gw, bg_ref);

    // foreground score per token
    std::vector<float> score(tokens);
    for (int64_t t = 0; t < tokens; ++t) {
      const float* s = &stats[t * kStatDim];
      const float d = std::sqrt((s[0] - bg_ref[0]) * (s[0] - bg_ref[0]) +
                                (s[1] - bg_ref[1]) * (s[1] - bg_ref[1]) +
                                (s[2] - bg_ref[2]) * (s[2] - bg_ref[2]));
      score[t] = std::clamp((d - 0.12f) / 0.15f, 0.0f, 1.0f);
    }

    // global silhouette-shape descriptor
    float desc[kDescDim];
    shape_descriptor(score.data(), stats.data(), gh, gw, desc);

    std::vector<TensorF> levels;
    levels.reserve(4);
    std::vector<float> fg_dir(e), bg_dir(e), loc(e);
    for (int64_t li = 0; li < 4; ++li) {
      TensorF f({e, gh, gw});
      const double alpha = 1.0 - static_cast<double>(li) / 3.0;
      for (int64_t t = 0; t < tokens; ++t) {
        const float* s = &stats[t * kStatDim];
        for (int64_t c = 0; c < e; ++c) {
          float fg = fg_center_[c];
          for (int64_t d = 0; d < kDescDim; ++d)
            fg += desc_mat_[c * kDescDim + d] * desc[d];
          float bg = bg_center_[c];
          for (int64_t d = 0; d < 3; ++d)
            bg += bg_color_mat_[c * 3 + d] * s[d];
          if (spec_.swap_clusters) std::swap(fg, bg);
          float sem = score[t] * fg + (1.0f - score[t]) * bg;
          float lv = 0.0f;
          for (int64_t d = 0; d < kStatDim; ++d)
            lv += local_mat_[c * kStatDim + d] * s[d];
          SplitMix64 nrng(hash_mix(
              hash_mix(hash_mix(spec_.seed, static_cast<uint64_t>(li)),
                       static_cast<uint64_t>(t * e + c)),
              content[t]));
          const float noise =
              static_cast<float>(spec_.noise_sigma * nrng.normal());
          f.data()[c * tokens + t] =
              static_cast<float>(alpha) * lv +
              static_cast<float>(1.0 - alpha) * sem + noise;
        }
      }
      levels.push_back(std::move(f));
    }
    return levels;
  }

 private:
  static constexpr int64_t kDescDim = 13;
  static constexpr int64_t kStatDim = 6;  // mean rgb, lum std, |dx|, |dy|

  static std::vector<float> random_mat(SplitMix64& rng, int64_t rows,
                                       int64_t cols, double scale) {
    std::vector<float> m(rows * cols);
    for (auto& v : m) v = static_cast<float>(scale * rng.normal());
    return m;
  }

  void token_stats(const ImageF& frame, int64_t gh, int64_t gw, float* stats,
                   uint64_t* content) const {
    const int64_t p = spec_.patch;
    const int64_t w = spec_.input_w;
    std::vector<uint8_t> patch_bytes(p * p * 3);
    for (int64_t r = 0; r < gh; ++r) {
      for (int64_t c = 0; c < gw; ++c) {
        double mean[3] = {0, 0, 0};
        double lum_sum = 0, lum_sq = 0, dx_sum = 0, dy_sum = 0;
        int64_t bi = 0;
        for (int64_t y = r * p; y < (r + 1) * p; ++y) {
          for (int64_t x = c * p; x < (c + 1) * p; ++x) {
            double lum = 0;
            for (int64_t ch = 0; ch < 3; ++ch) {
              const float v = frame(ch, y, x);
              mean[ch] += v;
              lum += v;
              patch_bytes[bi++] =
                  static_cast<uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
            }
            lum /= 3.0;
            lum_sum += lum;
            lum_sq += lum * lum;
            if (x + 1 < w && x + 1 < (c + 1) * p) {
              double lum_r = (frame(0, y, x + 1) + frame(1, y, x + 1) +
                              frame(2, y, x + 1)) / 3.0;
              dx_sum += std::abs(lum_r - lum);
            }
            if (y + 1 < spec_.input_h && y + 1 < (r + 1) * p) {
              double lum_d = (frame(0, y + 1, x) + frame(1, y + 1, x) +
                              frame(2, y + 1, x)) / 3.0;
              dy_sum += std::abs(lum_d - lum);
            }
          }
        }
        const double n = static_cast<double>(p * p);
        float* s = &stats[(r * gw + c) * kStatDim];
        for (int64_t ch = 0; ch < 3; ++ch)
          s[ch] = static_cast<float>(mean[ch] / n);
        const double lmean = lum_sum / n;
        s[3] = static_cast<float>(std::sqrt(std::max(0.0, lum_sq / n - lmean * lmean)));
        s[4] = static_cast<float>(dx_sum / n);
        s[5] = static_cast<float>(dy_sum / n);
        content[r * gw + c] = hash_bytes(patch_bytes.data(), patch_bytes.size());
      }
    }
  }

  static void border_median(const float* stats, int64_t gh, int64_t gw,
                            float* out3) {
    std::vector<float> vals;
    for (int64_t ch = 0; ch < 3; ++ch) {
      vals.clear();
      for (int64_t r = 0; r < gh; ++r) {
        for (int64_t c = 0; c < gw; ++c) {
          if (r == 0 || c == 0 || r == gh - 1 || c == gw - 1)
            vals.push_back(stats[(r * gw + c) * kStatDim + ch]);
        }
      }
      std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
      out3[ch] = vals[vals.size() / 2];
    }
  }

  // mass, centroid (2), spread (3), row-band masses (4), fg mean rgb (3)
  static void shape_descriptor(const float* score, const float* stats,
                               int64_t gh, int64_t gw, float* desc) {
    double mass = 0, cy = 0, cx = 0;
    for (int64_t r = 0; r < gh; ++r) {
      for (int64_t c = 0; c < gw; ++c) {
        const double s = score[r * gw + c];
        mass += s;
        cy += s * static_cast<double>(r);
        cx += s * static_cast<double>(c);
      }
    }
    std::fill(desc, desc + kDescDim, 0.0f);
    if (mass < 1e-6) return;
    cy /= mass;
    cx /= mass;
    double mu20 = 0, mu02 = 0, mu11 = 0, band[4] = {0, 0, 0, 0};
    double rgb[3] = {0, 0, 0};
    for (int64_t r = 0; r < gh; ++r) {
      for (int64_t c = 0; c < gw; ++c) {
        const double s = score[r * gw + c];
        if (s == 0) continue;
        const double dy = static_cast<double>(r) - cy;
        const double dx = static_cast<double>(c) - cx;
        mu20 += s * dy * dy;
        mu02 += s * dx * dx;
        mu11 += s * dy * dx;
        band[std::min<int64_t>(r * 4 / gh, 3)] += s;
        for (int64_t ch = 0; ch < 3; ++ch)
          rgb[ch] += s * stats[(r * gw + c) * kStatDim + ch];
      }
    }
    desc[0] = static_cast<float>(mass / static_cast<double>(gh * gw));
    desc[1] = static_cast<float>(cy / static_cast<double>(gh));
    desc[2] = static_cast<float>(cx / static_cast<double>(gw));
    desc[3] = static_cast<float>(std::sqrt(mu20 / mass) / static_cast<double>(gh));
    desc[4] = static_cast<float>(std::sqrt(mu02 / mass) / static_cast<double>(gw));
    desc[5] = static_cast<float>(mu11 / (mass * static_cast<double>(gh * gw)));
    for (int64_t b = 0; b < 4; ++b)
      desc[6 + b] = static_cast<float>(band[b] / mass);
    for (int64_t ch = 0; ch < 3; ++ch)
      desc[10 + ch] = static_cast<float>(rgb[ch] / mass);
  }

  BackboneSpec spec_;
  std::vector<float> fg_center_, desc_mat_, bg_center_, bg_color_mat_,
      local_mat_;
};

// Mount point for a real frozen model: token grids are precomputed by an
// external extractor into the cache directory, one file per frame in the
// documented cache format with shape [4, E, gh, gw].
class ExternalFeatureProvider final : public FeatureProvider {
 public:
  explicit ExternalFeatureProvider(const BackboneSpec& spec) : spec_(spec) {
    if (spec_.cache_dir.empty()) {
      const char* env = std::getenv("GREGAIT_CACHE_DIR");
      if (env) spec_.cache_dir = env;
    }
    GG_CHECK(!spec_.cache_dir.empty(),
             "lvm-adapter needs a feature cache directory "
             "(config backbone.cache_dir or $GREGAIT_CACHE_DIR)");
  }

  std::string name() const override { return "lvm-adapter"; }
  int64_t embed_dim() const override { return spec_.embed_dim; }
  int64_t grid_h() const override { return spec_.grid_h(); }
  int64_t grid_w() const override { return spec_.grid_w(); }
  // no in-process parameters: the frozen weights live outside
  uint64_t param_hash() const override { return 0; }

  std::vector<TensorF> extract(const std::string& frame_path,
                               const ImageF& /*frame*/) const override {
    const std::string path = feature_cache_path(spec_.cache_dir, frame_path);
    GG_CHECK(std::filesystem::exists(path),
             "lvm-adapter: no cached features for frame '"
                 << frame_path << "' (expected " << path
                 << "); precompute token grids with your frozen model in the "
                    "documented cache format");
    TensorF packed = read_feature_cache(path);
    GG_CHECK(packed.ndim() == 4 && packed.shape(0) == 4 &&
                 packed.shape(1) == embed_dim() &&
                 packed.shape(2) == grid_h() && packed.shape(3) == grid_w(),
             "lvm-adapter: cached features at " << path << " have wrong shape");
    std::vector<TensorF> levels;
    const int64_t per = packed.size() / 4;
    for (int64_t li = 0; li < 4; ++li) {
      TensorF f({embed_dim(), grid_h(), grid_w()});
      std::memcpy(f.data(), packed.data() + li * per, per * sizeof(float));
      levels.push_back(std::move(f));
    }
    return levels;
  }

 private:
  BackboneSpec spec_;
};

}  // namespace

std::unique_ptr<FeatureProvider> make_provider(const BackboneSpec& spec) {
  GG_CHECK(spec.input_h % spec.patch == 0 && spec.input_w % spec.patch == 0,
           "input " << spec.input_h << "x" << spec.input_w
                    << " not divisible by patch " << spec.patch);
  if (spec.provider == "synthetic")
    return std::make_unique<SyntheticProvider>(spec);
  if (spec.provider == "lvm-adapter")
    return std::make_unique<ExternalFeatureProvider>(spec);
  fail("unknown backbone provider '" + spec.provider +
       "' (use synthetic or lvm-adapter)");
}

std::vector<TensorF> extract_multilevel(const std::string& frame_path,
                                        const ImageF& frame,
                                        const FeatureProvider& provider) {
  auto levels = provider.extract(frame_path, frame);
  GG_CHECK(levels.size() == 4, "provider must emit 4 tap levels");
  for (const auto& f : levels)
    GG_CHECK(all_finite(f), "non-finite feature map from " << provider.name());
  return levels;
}

TensorF upsample_concat(const std::vector<TensorF>& levels) {
  GG_CHECK(levels.size() == 4, "expected 4 levels, got " << levels.size());
  const int64_t e = levels[0].shape(0);
  const int64_t gh = levels[0].shape(1), gw = levels[0].shape(2);
  for (const auto& f : levels) {
    GG_CHECK(f.ndim() == 3 && f.shape(0) == e && f.shape(1) == gh &&
                 f.shape(2) == gw,
             "tap level shape mismatch");
  }
  TensorF out({4 * e, 2 * gh, 2 * gw});
  const int64_t per_ch = 4 * gh * gw;
  for (int64_t li = 0; li < 4; ++li) {
    kernels::bilinear_up2x(levels[li].data(), e, gh, gw,
                           out.data() + li * e * per_ch);
  }
  return out;
}

void write_feature_cache(const std::string& path, const TensorF& t,
                         const std::string& tag) {
  nlohmann::json h;
  h["dtype"] = "f32";
  h["shape"] = t.shape();
  h["tag"] = tag;
  std::ofstream out(path, std::ios::binary);
  GG_CHECK(out, "cannot write feature cache: " << path);
  out << h.dump() << "\n";
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
  GG_CHECK(out.good(), "short write to feature cache: " << path);
}

TensorF read_feature_cache(const std::string& path, std::string* tag) {
  std::ifstream in(path, std::ios::binary);
  GG_CHECK(in, "cannot open feature cache: " << path);
  std::string header;
  std::getline(in, header);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    fail("feature cache " + path + ": bad header: " + e.what());
  }
  GG_CHECK(h.value("dtype", "") == "f32",
           "feature cache " << path << ": unsupported dtype");
  const auto shape = h.at("shape").get<std::vector<int64_t>>();
  if (tag) *tag = h.value("tag", "");
  TensorF t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  GG_CHECK(in.gcount() == static_cast<std::streamsize>(t.size() * sizeof(float)),
           "feature cache " << path << ": truncated payload");
  return t;
}

std::string feature_cache_path(const std::string& cache_dir,
                               const std::string& frame_path) {
  std::string stem;
  for (char c : frame_path)
    stem += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  if (stem.size() > 120) stem = stem.substr(stem.size() - 120);
  char hex[20];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(
                    hash_bytes(frame_path.data(), frame_path.size())));
  return cache_dir + "/" + stem + "." + hex + ".feat";
}

}  // namespace gregait
