#pragma once

#include <cstdint>
#include <vector>

#include "gregait/manifest.hpp"

namespace gregait {

// identity-balanced batch: p identities x k sequences x l frames
struct BatchSpec {
  int64_t p = 8;
  int64_t k = 8;
  int64_t l = 8;
};

struct BatchItem {
  const SequenceRecord* record = nullptr;
  int64_t label = 0;  // class index = position in sorted train id list
  std::vector<int64_t> frame_indices;
};

// Deterministic given seed. Picks p distinct train identities, k sequences
// per identity (with replacement only when the identity has fewer than k),
// and l frames per sequence at uniformly spaced positions with a random
// phase (repeating frames when the sequence is shorter than l).
std::vector<BatchItem> sample_batch(const DatasetManifest& manifest,
                                    const BatchSpec& spec, uint64_t rng_seed);

std::vector<int64_t> subsample_frame_indices(int64_t total, int64_t l,
                                             uint64_t rng_seed);

}  // namespace gregait
