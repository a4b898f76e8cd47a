#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gregait {

// Flat run configuration. Every key is scalar; unknown keys in a config
// file are an error so typos cannot silently fall back to defaults.
struct RunConfig {
  // data / frozen feature provider
  std::string manifest;
  std::string provider = "synthetic";  // synthetic | lvm-adapter
  int64_t embed_dim = 384;
  int64_t num_blocks = 12;
  int64_t patch = 14;
  int64_t input_h = 448;
  int64_t input_w = 224;
  uint64_t backbone_seed = 17;
  double noise_sigma = 0.05;
  std::string cache_dir;
  std::string pad_mode = "pad";  // pad (aspect-preserving) | stretch

  // representation extractor
  int64_t gre_channels = 16;
  int64_t gre_mid = 256;
  double gamma_rec = 1.0;
  double gamma_smo = 0.01;
  double gamma_div = 5.0;
  bool disable_mask = false;
  bool bypass_gre = false;
  uint64_t gre_seed = 1;

  // head
  int64_t head_w1 = 64, head_w2 = 64, head_w3 = 128, head_w4 = 256;
  int64_t parts = 16;
  int64_t emb_dim = 256;
  std::string streams = "dual";    // dual | ap | de
  std::string frame_pool = "max";  // max | meanmax

  uint64_t head_seed = 2;

  // optimization
  int64_t iters = 40000;
  double lr = 0.1;
  std::string lr_steps = "15000,25000,30000,35000";
  double lr_gamma = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  bool decay_bn = false;  // apply weight decay to BN scale/shift
  int64_t batch_p = 8, batch_k = 8, batch_l = 8;
  double margin = 0.2;
  uint64_t seed = 1;
  bool deterministic = false;
  int64_t log_every = 10;
  int64_t checkpoint_every = 5000;
  std::string out_dir = "run";
  std::string resume;

  // evaluation
  std::string distance = "mean";  // mean | min | sum over parts
};

// Strict parse: flat JSON object, every key must be known and of the right
// type. `origin` names the source in error messages.
RunConfig parse_config(const std::string& json_text, const std::string& origin);
RunConfig load_config(const std::string& path);

// Canonical JSON (sorted keys) and a stable content hash over it.
std::string config_to_json(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

// "15000,25000,30000,35000" -> sorted iteration thresholds
std::vector<int64_t> parse_lr_steps(const std::string& spec);

// piecewise-constant schedule: base lr scaled by gamma once per threshold
// at or below `iter`
double lr_at(int64_t iter, double base_lr, const std::vector<int64_t>& steps,
             double gamma);

}  // namespace gregait
