#pragma once

#include <cstdint>
#include <string>

#include "gregait/model.hpp"
#include "gregait/optim.hpp"

namespace gregait {

// Single-file checkpoint: a magic line, one JSON meta line (iteration,
// config + its hash, sampler rng state, tensor directory), then the raw
// little-endian payload in directory order. Parameters and momentum
// buffers are float32, normalization running stats are float64, so a
// save/load/save cycle is byte-identical.
struct CheckpointMeta {
  int64_t iteration = 0;
  uint64_t rng_state = 0;
  uint64_t cfg_hash = 0;
};

void save_checkpoint(const std::string& path, GaitModel& model,
                     const SGD<float>& opt, int64_t iteration,
                     uint64_t rng_state, const std::string& train_domain = "");

// Restores into an already-built model/optimizer of the same architecture;
// tensor names and shapes must match exactly. With strict_config the stored
// config hash must equal the model's.
CheckpointMeta load_checkpoint(const std::string& path, GaitModel& model,
                               SGD<float>* opt, bool strict_config = true);

// Meta header only — enough to rebuild the model before a full load.
struct CheckpointHeader {
  RunConfig config;
  int64_t num_classes = 0;
  int64_t iteration = 0;
  std::string train_domain;
};
CheckpointHeader read_checkpoint_header(const std::string& path);

}  // namespace gregait
