#include "gregait/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace gregait {

std::string stats_to_jsonl(const StepStats& s) {
  nlohmann::json j;
  j["iter"] = s.iter;
  j["lr"] = s.lr;
  j["L_tri"] = s.l_tri;
  j["L_ce"] = s.l_ce;
  j["L_rec"] = s.l_rec;
  j["L_smo"] = s.l_smo;
  j["L_div"] = s.l_div;
  j["L_total"] = s.l_total;
  return j.dump();
}

Trainer::Trainer(const RunConfig& cfg, const DatasetManifest& manifest)
    : cfg_(cfg), manifest_(manifest), rng_(cfg.seed) {
  if (cfg.deterministic) set_exec_mode(Exec::Serial);
  const auto ids = manifest_.train_ids();
  GG_CHECK(!ids.empty(), "manifest has no train split");
  model_ = std::make_unique<GaitModel>(cfg, static_cast<int64_t>(ids.size()));
  opt_ = std::make_unique<SGD<float>>(model_->params(), cfg.momentum,
                                      cfg.weight_decay, cfg.decay_bn);
  lr_steps_ = parse_lr_steps(cfg.lr_steps);
}

StepStats Trainer::step() {
  const double lr = lr_at(iter_, cfg_.lr, lr_steps_, cfg_.lr_gamma);
  BatchSpec spec{cfg_.batch_p, cfg_.batch_k, cfg_.batch_l};
  const std::vector<BatchItem> batch = sample_batch(manifest_, spec, rng_.next());
  const int64_t b = static_cast<int64_t>(batch.size());
  const int64_t l = cfg_.batch_l;

  TensorF fc;
  std::vector<int> labels(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    const BatchItem& item = batch[static_cast<size_t>(i)];
    labels[static_cast<size_t>(i)] = static_cast<int>(item.label);
    TensorF seq = model_->sequence_features(*item.record, item.frame_indices);
    if (i == 0)
      fc = TensorF({b * l, seq.shape(1), seq.shape(2), seq.shape(3)});
    GG_CHECK(seq.shape(0) == l, "sequence feature count != batch_l");
    std::copy(seq.data(), seq.data() + seq.numel(),
              fc.data() + i * seq.numel());
  }

  opt_->zero_grad();
  auto fwd = model_->forward(fc, b, l, /*training=*/true);
  auto tri = batch_all_triplet(fwd.head.emb, labels,
                               static_cast<float>(cfg_.margin));
  auto ce = part_cross_entropy(fwd.head.logits, labels);
  LossWeights w{cfg_.gamma_rec, cfg_.gamma_smo, cfg_.gamma_div};
  StepStats stats;
  stats.iter = iter_;
  stats.lr = lr;
  stats.l_tri = tri.loss;
  stats.l_ce = ce.loss;
  stats.l_rec = fwd.l_rec;
  stats.l_smo = fwd.l_smo;
  stats.l_div = fwd.l_div;
  stats.l_total =
      combined_loss(tri.loss, ce.loss, fwd.l_rec, fwd.l_smo, fwd.l_div, w);
  stats.active_triplets = tri.active;
  stats.fg_fraction = fwd.fg_fraction;

  model_->backward(tri.grad, ce.grad);
  opt_->step(lr);
  ++iter_;
  return stats;
}

void Trainer::run() {
  namespace fs = std::filesystem;
  fs::create_directories(cfg_.out_dir);
  if (!cfg_.resume.empty()) resume(cfg_.resume);
  std::ofstream log(fs::path(cfg_.out_dir) / "train_log.jsonl",
                    iter_ > 0 ? std::ios::app : std::ios::trunc);
  GG_CHECK(log.good(), "cannot open training log in " << cfg_.out_dir);
  while (iter_ < cfg_.iters) {
    StepStats s = step();
    if (cfg_.log_every > 0 &&
        (s.iter % cfg_.log_every == 0 || s.iter + 1 == cfg_.iters)) {
      log << stats_to_jsonl(s) << "\n";
      log.flush();
    }
    if (cfg_.checkpoint_every > 0 && iter_ % cfg_.checkpoint_every == 0 &&
        iter_ < cfg_.iters) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.ggckpt",
                    static_cast<long long>(iter_));
      save((fs::path(cfg_.out_dir) / name).string());
    }
  }
  save((fs::path(cfg_.out_dir) / "ckpt_final.ggckpt").string());
}

void Trainer::save(const std::string& path) {
  save_checkpoint(path, *model_, *opt_, iter_, rng_.state, manifest_.dataset);
}

void Trainer::resume(const std::string& path) {
  CheckpointMeta meta = load_checkpoint(path, *model_, opt_.get());
  iter_ = meta.iteration;
  rng_.state = meta.rng_state;
}

}  // namespace gregait
