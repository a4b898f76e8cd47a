#include "gregait/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gregait {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace {
constexpr const char* kMagic = "GGCKPT1";

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

uint64_t parse_hex64(const std::string& s) {
  GG_CHECK(s.size() == 16, "bad 64-bit hex field '" << s << "'");
  return std::stoull(s, nullptr, 16);
}

template <class T>
void write_block(std::ostream& os, const T* p, int64_t n) {
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void read_block(std::istream& is, T* p, int64_t n, const std::string& what) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(T)));
  GG_CHECK(is.good(), "checkpoint truncated while reading " << what);
}
}  // namespace

void save_checkpoint(const std::string& path, GaitModel& model,
                     const SGD<float>& opt, int64_t iteration,
                     uint64_t rng_state, const std::string& train_domain) {
  ParamRefs<float> params = model.params();
  GG_CHECK(params.size() == opt.params().size(),
           "optimizer does not cover the model parameters");
  auto bns = model.bns();

  json meta;
  meta["iteration"] = iteration;
  meta["rng"] = hex64(rng_state);
  meta["num_classes"] = model.num_classes();
  meta["train_domain"] = train_domain;
  meta["config"] = json::parse(config_to_json(model.config()));
  meta["config_hash"] = hex64(config_hash(model.config()));
  json dir = json::array();
  for (const Param<float>* p : params)
    dir.push_back({{"name", p->name}, {"shape", p->w.shape()}});
  meta["params"] = dir;
  json bdir = json::array();
  for (const BatchNorm2d<float>* bn : bns)
    bdir.push_back({{"name", bn->name()},
                    {"c", static_cast<int64_t>(bn->running_mean.size())}});
  meta["bn"] = bdir;

  std::ofstream os(path, std::ios::binary);
  GG_CHECK(os.good(), "cannot write checkpoint " << path);
  os << kMagic << "\n" << meta.dump() << "\n";
  for (const Param<float>* p : params) write_block(os, p->w.data(), p->w.numel());
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& v = opt.velocity()[i];
    GG_CHECK(static_cast<int64_t>(v.size()) == params[i]->w.numel(),
             "velocity buffer size mismatch");
    write_block(os, v.data(), static_cast<int64_t>(v.size()));
  }
  for (const BatchNorm2d<float>* bn : bns) {
    write_block(os, bn->running_mean.data(),
                static_cast<int64_t>(bn->running_mean.size()));
    write_block(os, bn->running_var.data(),
                static_cast<int64_t>(bn->running_var.size()));
  }
  GG_CHECK(os.good(), "write failed for checkpoint " << path);
}

CheckpointMeta load_checkpoint(const std::string& path, GaitModel& model,
                               SGD<float>* opt, bool strict_config) {
  std::ifstream is(path, std::ios::binary);
  GG_CHECK(is.good(), "cannot open checkpoint " << path);
  std::string magic, meta_line;
  std::getline(is, magic);
  GG_CHECK(magic == kMagic, path << " is not a checkpoint file");
  std::getline(is, meta_line);
  json meta;
  try {
    meta = json::parse(meta_line);
  } catch (const std::exception& e) {
    fail(path + ": bad checkpoint meta: " + e.what());
  }

  CheckpointMeta out;
  out.iteration = meta.at("iteration").get<int64_t>();
  out.rng_state = parse_hex64(meta.at("rng").get<std::string>());
  out.cfg_hash = parse_hex64(meta.at("config_hash").get<std::string>());
  if (strict_config)
    GG_CHECK(out.cfg_hash == config_hash(model.config()),
             path << ": checkpoint was written with a different config");

  ParamRefs<float> params = model.params();
  const json& dir = meta.at("params");
  GG_CHECK(dir.size() == params.size(),
           path << ": parameter count mismatch (" << dir.size() << " vs "
                << params.size() << ")");
  for (size_t i = 0; i < params.size(); ++i) {
    GG_CHECK(dir[i].at("name").get<std::string>() == params[i]->name,
             path << ": parameter order mismatch at '" << params[i]->name
                  << "'");
    const auto shape = dir[i].at("shape").get<std::vector<int64_t>>();
    GG_CHECK(shape == params[i]->w.shape(),
             path << ": shape mismatch for '" << params[i]->name << "'");
  }
  auto bns = model.bns();
  const json& bdir = meta.at("bn");
  GG_CHECK(bdir.size() == bns.size(), path << ": norm-layer count mismatch");
  for (size_t i = 0; i < bns.size(); ++i) {
    GG_CHECK(bdir[i].at("name").get<std::string>() == bns[i]->name(),
             path << ": norm-layer order mismatch at '" << bns[i]->name()
                  << "'");
    GG_CHECK(bdir[i].at("c").get<int64_t>() ==
                 static_cast<int64_t>(bns[i]->running_mean.size()),
             path << ": norm-layer width mismatch at '" << bns[i]->name()
                  << "'");
  }

  for (Param<float>* p : params) read_block(is, p->w.data(), p->w.numel(), p->name);
  if (opt) {
    GG_CHECK(opt->params().size() == params.size(),
             "optimizer does not cover the model parameters");
    for (size_t i = 0; i < params.size(); ++i)
      read_block(is, opt->velocity()[i].data(), params[i]->w.numel(),
                 params[i]->name + " momentum");
  } else {
    is.seekg(static_cast<std::streamoff>([&] {
               int64_t n = 0;
               for (Param<float>* p : params) n += p->w.numel();
               return n * static_cast<int64_t>(sizeof(float));
             }()),
             std::ios::cur);
  }
  for (BatchNorm2d<float>* bn : bns) {
    read_block(is, bn->running_mean.data(),
               static_cast<int64_t>(bn->running_mean.size()), bn->name());
    read_block(is, bn->running_var.data(),
               static_cast<int64_t>(bn->running_var.size()), bn->name());
  }
  return out;
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  GG_CHECK(is.good(), "cannot open checkpoint " << path);
  std::string magic, meta_line;
  std::getline(is, magic);
  GG_CHECK(magic == kMagic, path << " is not a checkpoint file");
  std::getline(is, meta_line);
  json meta;
  try {
    meta = json::parse(meta_line);
  } catch (const std::exception& e) {
    fail(path + ": bad checkpoint meta: " + e.what());
  }
  CheckpointHeader h;
  h.config = parse_config(meta.at("config").dump(), path + " (embedded config)");
  h.num_classes = meta.at("num_classes").get<int64_t>();
  h.iteration = meta.at("iteration").get<int64_t>();
  if (meta.contains("train_domain"))
    h.train_domain = meta.at("train_domain").get<std::string>();
  return h;
}

}  // namespace gregait
