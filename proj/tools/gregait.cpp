#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"

#include "gregait/eval.hpp"
#include "gregait/gradcam.hpp"
#include "gregait/pca.hpp"
#include "gregait/synth.hpp"
#include "gregait/trainer.hpp"

namespace fs = std::filesystem;
using namespace gregait;

namespace {

RunConfig config_with_overrides(const std::string& config_path,
                                const std::map<std::string, std::string>& kv) {
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : load_config(config_path);
  if (kv.empty()) return cfg;
  // apply overrides through the strict parser so types/keys are validated
  nlohmann::json base = nlohmann::json::parse(config_to_json(cfg));
  for (const auto& [k, v] : kv) {
    GG_CHECK(base.contains(k), "unknown config key '" << k << "'");
    if (base[k].is_string())
      base[k] = v;
    else
      base[k] = nlohmann::json::parse(v);  // numbers/bools
  }
  return parse_config(base.dump(), "command line");
}

// rebuild a trained model from a checkpoint (parameters + norm stats only)
std::unique_ptr<GaitModel> model_from_checkpoint(const std::string& path,
                                                 CheckpointHeader* hdr_out) {
  CheckpointHeader hdr = read_checkpoint_header(path);
  auto model = std::make_unique<GaitModel>(hdr.config, hdr.num_classes);
  load_checkpoint(path, *model, nullptr);
  if (hdr_out) *hdr_out = hdr;
  return model;
}

const SequenceRecord& find_sequence(const DatasetManifest& m,
                                    const std::string& key) {
  // key: id/condition/view[/seq]
  std::vector<std::string> parts;
  std::string tok;
  std::stringstream ss(key);
  while (std::getline(ss, tok, '/')) parts.push_back(tok);
  GG_CHECK(parts.size() == 3 || parts.size() == 4,
           "sequence key must be id/condition/view[/seq]");
  for (const auto& r : m.entries) {
    if (r.id != parts[0] || r.condition != parts[1] || r.view != parts[2])
      continue;
    if (parts.size() == 4 && r.seq != parts[3]) continue;
    return r;
  }
  fail("sequence '" + key + "' not found in manifest");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  GG_CHECK(os.good(), "cannot write " << path);
  os << text;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::map<std::string, std::string>& overrides) {
  RunConfig cfg = config_with_overrides(config_path, overrides);
  if (!manifest_path.empty()) cfg.manifest = manifest_path;
  GG_CHECK(!cfg.manifest.empty(), "no manifest given (config or --manifest)");
  DatasetManifest manifest = load_manifest(cfg.manifest);
  Trainer trainer(cfg, manifest);
  trainer.run();
  std::cout << "trained " << trainer.iteration() << " iterations -> "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& protocol_path, const std::string& out_prefix,
             bool cross, const std::string& train_domain_flag) {
  CheckpointHeader hdr;
  auto model = model_from_checkpoint(ckpt, &hdr);
  DatasetManifest manifest = load_manifest(manifest_path);
  ProtocolConfig proto = load_protocol(protocol_path);
  EvalReport rep;
  if (cross) {
    const std::string domain =
        !train_domain_flag.empty()
            ? train_domain_flag
            : (!hdr.train_domain.empty() ? hdr.train_domain : "unknown");
    rep = cross_domain_run(*model, domain, manifest, proto);
  } else {
    rep = run_protocol(*model, manifest, proto);
  }
  char idbuf[512];
  std::snprintf(idbuf, sizeof(idbuf), "%s@%lld", ckpt.c_str(),
                static_cast<long long>(hdr.iteration));
  rep.checkpoint_id = idbuf;
  const std::string table = report_table(rep);
  std::cout << table;
  if (!out_prefix.empty()) {
    write_text(out_prefix + ".json", report_to_json(rep) + "\n");
    write_text(out_prefix + ".txt", table);
  }
  return 0;
}

int cmd_extract(const std::string& ckpt, const std::string& manifest_path,
                const std::string& split, const std::string& out_dir) {
  auto model = model_from_checkpoint(ckpt, nullptr);
  DatasetManifest manifest = load_manifest(manifest_path);
  RulePredicate rule;
  if (!split.empty()) rule.splits = {split};
  EvalCoverage cov;
  auto embs = extract_embeddings(manifest, rule, *model, &cov);
  fs::create_directories(out_dir);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& e : embs) {
    const std::string name =
        e.id + "_" + e.condition + "_" + e.view + "_" + e.seq + ".emb";
    write_embedding((fs::path(out_dir) / name).string(), e);
    index.push_back(name);
  }
  write_text((fs::path(out_dir) / "index.json").string(), index.dump(2) + "\n");
  std::cout << "wrote " << embs.size() << " embeddings to " << out_dir << "\n";
  for (const auto& err : cov.errors)
    std::cerr << "extraction failure: " << err << "\n";
  return cov.errors.empty() ? 0 : 1;
}

int cmd_viz_pca(const std::string& ckpt, const std::string& manifest_path,
                const std::string& seq_key, const std::string& out_dir,
                uint64_t seed) {
  auto model = model_from_checkpoint(ckpt, nullptr);
  GG_CHECK(model->gre() != nullptr,
           "checkpoint was trained with the extractor bypassed");
  DatasetManifest manifest = load_manifest(manifest_path);
  const SequenceRecord& rec = find_sequence(manifest, seq_key);
  TensorF fc = model->sequence_features(rec, {});
  const int64_t l = fc.shape(0), ch = fc.shape(1);
  const int64_t h = fc.shape(2), w = fc.shape(3);
  auto gre_out = model->gre()->forward(fc, /*training=*/false);

  // masked features for the f_m rendering
  TensorF fm = fc;
  for (int64_t f = 0; f < l; ++f)
    for (int64_t c = 0; c < ch; ++c)
      for (int64_t i = 0; i < h * w; ++i)
        fm[(f * ch + c) * (h * w) + i] *=
            static_cast<float>(gre_out.fg[f * h * w + i]);

  struct TagMaps {
    const char* tag;
    std::vector<TensorF> maps;
  };
  std::vector<TagMaps> tags(4);
  tags[0].tag = "f_c";
  tags[1].tag = "f_m";
  tags[2].tag = "f_ap";
  tags[3].tag = "f_de";
  for (int64_t f = 0; f < l; ++f) {
    auto slice = [&](const TensorF& t) {
      const int64_t tc = t.shape(1), thw = t.shape(2) * t.shape(3);
      TensorF m({tc, t.shape(2), t.shape(3)});
      std::copy(t.data() + f * tc * thw, t.data() + (f + 1) * tc * thw,
                m.data());
      return m;
    };
    tags[0].maps.push_back(slice(fc));
    tags[1].maps.push_back(slice(fm));
    tags[2].maps.push_back(slice(gre_out.f_ap));
    tags[3].maps.push_back(slice(gre_out.f_de));
  }

  fs::create_directories(out_dir);
  for (const auto& tm : tags) {
    std::vector<const TensorF*> ptrs;
    for (const auto& m : tm.maps) ptrs.push_back(&m);
    PCABasis basis = fit_pca(ptrs, seed);  // one basis per representation
    for (size_t f = 0; f < tm.maps.size(); ++f) {
      Tensor<uint8_t> rgb = render_pca_rgb(tm.maps[f], basis);
      ImageF img({3, rgb.shape(1), rgb.shape(2)});
      for (int64_t i = 0; i < rgb.numel(); ++i)
        img[i] = static_cast<float>(rgb[i]) / 255.0f;
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%02zu.png", tm.tag, f);
      write_png((fs::path(out_dir) / name).string(), img);
    }
  }
  std::cout << "wrote " << 4 * l << " renderings to " << out_dir << "\n";
  return 0;
}

int cmd_viz_cam(const std::string& ckpt, const std::string& manifest_path,
                const std::string& seq_key, const std::string& layer,
                const std::string& out_path) {
  auto model = model_from_checkpoint(ckpt, nullptr);
  DatasetManifest manifest = load_manifest(manifest_path);
  const SequenceRecord& rec = find_sequence(manifest, seq_key);
  TensorF map = grad_cam(*model, rec, layer, model->config().input_h,
                         model->config().input_w);
  write_png_gray(out_path, map);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& manifest_path,
               const std::string& protocol_path, const std::string& axis,
               const std::string& out_dir,
               const std::map<std::string, std::string>& overrides) {
  RunConfig base = config_with_overrides(config_path, overrides);
  if (!manifest_path.empty()) base.manifest = manifest_path;
  GG_CHECK(!base.manifest.empty(), "no manifest given (config or --manifest)");
  DatasetManifest manifest = load_manifest(base.manifest);
  ProtocolConfig proto = load_protocol(protocol_path);

  struct Variant {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Variant> variants;
  auto with = [&](const std::string& name, auto&& edit) {
    RunConfig c = base;
    edit(c);
    variants.push_back({name, std::move(c)});
  };
  if (axis == "denoising") {
    with("full", [](RunConfig&) {});
    with("no-smooth", [](RunConfig& c) { c.gamma_smo = 0; });
    with("no-div", [](RunConfig& c) { c.gamma_div = 0; });
    with("neither", [](RunConfig& c) { c.gamma_smo = 0; c.gamma_div = 0; });
  } else if (axis == "branch") {
    with("dual", [](RunConfig& c) { c.streams = "dual"; });
    with("ap-only", [](RunConfig& c) { c.streams = "ap"; });
    with("de-only", [](RunConfig& c) { c.streams = "de"; });
    with("bypass", [](RunConfig& c) { c.bypass_gre = true; });
  } else if (axis == "mask") {
    with("mask", [](RunConfig&) {});
    with("no-mask", [](RunConfig& c) { c.disable_mask = true; });
  } else if (axis == "pad") {
    with("pad", [](RunConfig& c) { c.pad_mode = "pad"; });
    with("stretch", [](RunConfig& c) { c.pad_mode = "stretch"; });
  } else if (axis == "channels") {
    for (int64_t ch : {4, 8, 16, 32})
      with("C=" + std::to_string(ch),
           [ch](RunConfig& c) { c.gre_channels = ch; });
  } else {
    fail("unknown ablation axis '" + axis +
         "' (denoising|branch|mask|pad|channels)");
  }

  fs::create_directories(out_dir);
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream table;
  table << "axis: " << axis << "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s | %8s | %s\n", "variant", "rank-1",
                "per-condition");
  table << buf;
  for (auto& var : variants) {
    var.cfg.out_dir = (fs::path(out_dir) / var.name).string();
    Trainer trainer(var.cfg, manifest);
    trainer.run();
    EvalReport rep = run_protocol(trainer.model(), manifest, proto);
    rep.checkpoint_id = var.name;
    nlohmann::json row;
    row["variant"] = var.name;
    row["mean_rank1"] = rep.mean_rank1;
    std::string conds;
    for (const auto& c : rep.conditions) {
      row["rank1_" + c.name] = c.rank1;
      std::snprintf(buf, sizeof(buf), "%s=%.2f ", c.name.c_str(), c.rank1);
      conds += buf;
    }
    rows.push_back(std::move(row));
    std::snprintf(buf, sizeof(buf), "%-12s | %8.2f | %s\n", var.name.c_str(),
                  rep.mean_rank1, conds.c_str());
    table << buf;
  }
  const std::string text = table.str();
  std::cout << text;
  write_text((fs::path(out_dir) / "ablation.json").string(),
             rows.dump(2) + "\n");
  write_text((fs::path(out_dir) / "ablation.txt").string(), text);
  return 0;
}

int cmd_make_synth(const SynthDatasetSpec& spec, const std::string& out_path) {
  DatasetManifest m = make_synth_manifest(spec);
  const fs::path parent = fs::path(out_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_manifest(m, out_path);
  std::cout << "wrote " << m.entries.size() << " sequences to " << out_path
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gait representation learning on frozen vision-model features"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, protocol_path, ckpt, out, split;
  std::string seq_key, layer = "head-fused", axis = "denoising";
  std::string train_domain;
  std::vector<std::string> set_kv;
  uint64_t seed = 0;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--set", set_kv,
                    "config override key=value (repeatable)");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config JSON");
  train->add_option("--manifest", manifest_path, "dataset manifest");
  add_overrides(train);

  CLI::App* eval_cmd = app.add_subcommand("eval", "self-domain evaluation");
  eval_cmd->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--manifest", manifest_path, "dataset manifest")
      ->required();
  eval_cmd->add_option("--protocol", protocol_path, "protocol JSON")
      ->required();
  eval_cmd->add_option("--out", out, "report path prefix (.json/.txt)");

  CLI::App* cross = app.add_subcommand("cross-eval",
                                       "zero-shot cross-domain evaluation");
  cross->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  cross->add_option("--manifest", manifest_path, "target-domain manifest")
      ->required();
  cross->add_option("--protocol", protocol_path, "protocol JSON")->required();
  cross->add_option("--out", out, "report path prefix (.json/.txt)");
  cross->add_option("--train-domain", train_domain,
                    "override the stored training domain name");

  CLI::App* extract = app.add_subcommand("extract", "dump embeddings");
  extract->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  extract->add_option("--manifest", manifest_path, "dataset manifest")
      ->required();
  extract->add_option("--split", split, "restrict to one split");
  extract->add_option("--out", out, "output directory")->required();

  CLI::App* vpca = app.add_subcommand("viz-pca",
                                      "render feature maps as RGB images");
  vpca->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  vpca->add_option("--manifest", manifest_path, "dataset manifest")->required();
  vpca->add_option("--sequence", seq_key, "id/condition/view[/seq]")
      ->required();
  vpca->add_option("--out", out, "output directory")->required();
  vpca->add_option("--seed", seed, "pixel subsample seed");

  CLI::App* vcam = app.add_subcommand("viz-cam", "render an activation map");
  vcam->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  vcam->add_option("--manifest", manifest_path, "dataset manifest")->required();
  vcam->add_option("--sequence", seq_key, "id/condition/view[/seq]")
      ->required();
  vcam->add_option("--layer", layer, "head-B1-ap | head-B1-de | head-fused");
  vcam->add_option("--out", out, "output PNG path")->required();

  CLI::App* ablate = app.add_subcommand(
      "ablate", "short trainings along one ablation axis + comparison table");
  ablate->add_option("--axis", axis, "denoising|branch|mask|pad|channels");
  ablate->add_option("--config", config_path, "base config JSON");
  ablate->add_option("--manifest", manifest_path, "dataset manifest");
  ablate->add_option("--protocol", protocol_path, "protocol JSON")->required();
  ablate->add_option("--out", out, "output directory")->required();
  add_overrides(ablate);

  SynthDatasetSpec sspec;
  CLI::App* msynth = app.add_subcommand(
      "make-synth", "write a procedural benchmark manifest");
  msynth->add_option("--ids", sspec.n_ids, "identity count");
  msynth->add_option("--views", sspec.n_views, "view count (<=4)");
  msynth->add_option("--conds", sspec.n_conds, "condition count (<=2)");
  msynth->add_option("--frames", sspec.frames, "frames per sequence");
  msynth->add_option("--train-ids", sspec.train_ids, "train identity count");
  msynth->add_option("--holdout-view", sspec.holdout_view, "probe view");
  msynth->add_option("--bright", sspec.bright, "brightness offset (domain shift)");
  msynth->add_option("--name", sspec.name, "dataset name");
  msynth->add_option("--out", out, "manifest output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage diagnostics
    return 2;
  }

  std::map<std::string, std::string> overrides;
  for (const auto& kv : set_kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "--set expects key=value, got '" << kv << "'\n";
      return 2;
    }
    overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }

  try {
    if (train->parsed())
      return cmd_train(config_path, manifest_path, overrides);
    if (eval_cmd->parsed())
      return cmd_eval(ckpt, manifest_path, protocol_path, out, false, "");
    if (cross->parsed())
      return cmd_eval(ckpt, manifest_path, protocol_path, out, true,
                      train_domain);
    if (extract->parsed()) return cmd_extract(ckpt, manifest_path, split, out);
    if (vpca->parsed())
      return cmd_viz_pca(ckpt, manifest_path, seq_key, out, seed);
    if (vcam->parsed())
      return cmd_viz_cam(ckpt, manifest_path, seq_key, layer, out);
    if (ablate->parsed())
      return cmd_ablate(config_path, manifest_path, protocol_path, axis, out,
                        overrides);
    if (msynth->parsed()) return cmd_make_synth(sspec, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
