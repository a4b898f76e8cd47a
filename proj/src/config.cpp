#include "gregait/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gregait/common.hpp"
#include "json.hpp"

namespace gregait {

using nlohmann::json;

namespace {

// field registry: one row per config key keeps parse/serialize in sync
template <class F>
void for_each_field(RunConfig& c, F&& f) {
  f("manifest", c.manifest);
  f("provider", c.provider);
  f("embed_dim", c.embed_dim);
  f("num_blocks", c.num_blocks);
  f("patch", c.patch);
  f("input_h", c.input_h);
  f("input_w", c.input_w);
  f("backbone_seed", c.backbone_seed);
  f("noise_sigma", c.noise_sigma);
  f("cache_dir", c.cache_dir);
  f("pad_mode", c.pad_mode);
  f("gre_channels", c.gre_channels);
  f("gre_mid", c.gre_mid);
  f("gamma_rec", c.gamma_rec);
  f("gamma_smo", c.gamma_smo);
  f("gamma_div", c.gamma_div);
  f("disable_mask", c.disable_mask);
  f("bypass_gre", c.bypass_gre);
  f("gre_seed", c.gre_seed);
  f("head_w1", c.head_w1);
  f("head_w2", c.head_w2);
  f("head_w3", c.head_w3);
  f("head_w4", c.head_w4);
  f("parts", c.parts);
  f("emb_dim", c.emb_dim);
  f("streams", c.streams);
  f("frame_pool", c.frame_pool);
  f("head_seed", c.head_seed);
  f("iters", c.iters);
  f("lr", c.lr);
  f("lr_steps", c.lr_steps);
  f("lr_gamma", c.lr_gamma);
  f("momentum", c.momentum);
  f("weight_decay", c.weight_decay);
  f("decay_bn", c.decay_bn);
  f("batch_p", c.batch_p);
  f("batch_k", c.batch_k);
  f("batch_l", c.batch_l);
  f("margin", c.margin);
  f("seed", c.seed);
  f("deterministic", c.deterministic);
  f("log_every", c.log_every);
  f("checkpoint_every", c.checkpoint_every);
  f("out_dir", c.out_dir);
  f("resume", c.resume);
  f("distance", c.distance);
}

void assign_field(const json& v, const std::string& key, const std::string& origin,
                  std::string& out) {
  GG_CHECK(v.is_string(), origin << ": key '" << key << "' must be a string");
  out = v.get<std::string>();
}
void assign_field(const json& v, const std::string& key, const std::string& origin,
                  int64_t& out) {
  GG_CHECK(v.is_number_integer(), origin << ": key '" << key
                                          << "' must be an integer");
  out = v.get<int64_t>();
}
void assign_field(const json& v, const std::string& key, const std::string& origin,
                  uint64_t& out) {
  GG_CHECK(v.is_number_integer() && v.get<int64_t>() >= 0,
           origin << ": key '" << key << "' must be a non-negative integer");
  out = v.get<uint64_t>();
}
void assign_field(const json& v, const std::string& key, const std::string& origin,
                  double& out) {
  GG_CHECK(v.is_number(), origin << ": key '" << key << "' must be a number");
  out = v.get<double>();
}
void assign_field(const json& v, const std::string& key, const std::string& origin,
                  bool& out) {
  GG_CHECK(v.is_boolean(), origin << ": key '" << key << "' must be a boolean");
  out = v.get<bool>();
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    fail(origin + ": config is not valid JSON: " + e.what());
  }
  GG_CHECK(j.is_object(), origin << ": config must be a flat JSON object");
  RunConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for_each_field(cfg, [&](const char* key, auto& field) {
      if (it.key() == key) {
        assign_field(it.value(), it.key(), origin, field);
        known = true;
      }
    });
    GG_CHECK(known, origin << ": unknown config key '" << it.key() << "'");
  }
  GG_CHECK(cfg.provider == "synthetic" || cfg.provider == "lvm-adapter",
           origin << ": provider must be synthetic or lvm-adapter");
  GG_CHECK(cfg.streams == "dual" || cfg.streams == "ap" || cfg.streams == "de",
           origin << ": streams must be dual, ap or de");
  GG_CHECK(cfg.frame_pool == "max" || cfg.frame_pool == "meanmax",
           origin << ": frame_pool must be max or meanmax");
  GG_CHECK(cfg.distance == "mean" || cfg.distance == "min" || cfg.distance == "sum",
           origin << ": distance must be mean, min or sum");
  GG_CHECK(cfg.pad_mode == "pad" || cfg.pad_mode == "stretch",
           origin << ": pad_mode must be pad or stretch");
  GG_CHECK(cfg.gre_channels >= 2 && cfg.gre_channels <= 128,
           origin << ": gre_channels outside [2, 128]");
  parse_lr_steps(cfg.lr_steps);  // validates
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  GG_CHECK(in.good(), "cannot open config file " << path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_to_json(const RunConfig& cfg) {
  json j = json::object();
  for_each_field(const_cast<RunConfig&>(cfg),
                 [&](const char* key, auto& field) { j[key] = field; });
  return j.dump();  // nlohmann objects iterate sorted by key
}

uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = config_to_json(cfg);
  return hash_bytes(s.data(), s.size());
}

std::vector<int64_t> parse_lr_steps(const std::string& spec) {
  std::vector<int64_t> steps;
  std::string tok;
  std::stringstream ss(spec);
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    size_t pos = 0;
    int64_t v = 0;
    try {
      v = std::stoll(tok, &pos);
    } catch (const std::exception&) {
      fail("bad lr_steps entry '" + tok + "'");
    }
    GG_CHECK(pos == tok.size() && v >= 0, "bad lr_steps entry '" << tok << "'");
    steps.push_back(v);
  }
  std::sort(steps.begin(), steps.end());
  return steps;
}

double lr_at(int64_t iter, double base_lr, const std::vector<int64_t>& steps,
             double gamma) {
  double lr = base_lr;
  for (int64_t s : steps)
    if (iter >= s) lr *= gamma;
  return lr;
}

}  // namespace gregait
