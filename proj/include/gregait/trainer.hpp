#pragma once

#include <memory>
#include <string>

#include "gregait/checkpoint.hpp"
#include "gregait/losses.hpp"
#include "gregait/model.hpp"
#include "gregait/optim.hpp"
#include "gregait/sampler.hpp"

namespace gregait {

struct StepStats {
  int64_t iter = 0;  // 0-based index of the step just taken
  double lr = 0;
  double l_tri = 0, l_ce = 0, l_rec = 0, l_smo = 0, l_div = 0, l_total = 0;
  int64_t active_triplets = 0;
  double fg_fraction = 0;
};

std::string stats_to_jsonl(const StepStats& s);

class Trainer {
 public:
  Trainer(const RunConfig& cfg, const DatasetManifest& manifest);

  // one optimization step; advances the iteration counter
  StepStats step();

  // full loop: JSONL log + periodic and final checkpoints under out_dir
  void run();

  void save(const std::string& path);
  // restores parameters, momentum, norm stats, sampler rng and iteration
  void resume(const std::string& path);

  GaitModel& model() { return *model_; }
  SGD<float>& optimizer() { return *opt_; }
  int64_t iteration() const { return iter_; }
  uint64_t rng_state() const { return rng_.state; }
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  RunConfig cfg_;
  DatasetManifest manifest_;
  std::unique_ptr<GaitModel> model_;
  std::unique_ptr<SGD<float>> opt_;
  SplitMix64 rng_;
  std::vector<int64_t> lr_steps_;
  int64_t iter_ = 0;
};

}  // namespace gregait
