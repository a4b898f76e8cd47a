#include "gregait/sampler.hpp"

#include <algorithm>
#include <map>

#include "gregait/common.hpp"

namespace gregait {

std::vector<int64_t> subsample_frame_indices(int64_t total, int64_t l,
                                             uint64_t rng_seed) {
  GG_CHECK(total >= 1 && l >= 1, "empty sequence");
  std::vector<int64_t> idx(l);
  if (total >= l) {
    SplitMix64 rng(rng_seed);
    const double stride = static_cast<double>(total) / static_cast<double>(l);
    const double start = rng.uniform() * stride;
    for (int64_t j = 0; j < l; ++j) {
      idx[j] = std::min<int64_t>(
          static_cast<int64_t>(start + stride * static_cast<double>(j)),
          total - 1);
    }
  } else {
    // shorter sequence: spread repeats evenly, no randomness needed
    for (int64_t j = 0; j < l; ++j) idx[j] = j * total / l;
  }
  return idx;
}

std::vector<BatchItem> sample_batch(const DatasetManifest& manifest,
                                    const BatchSpec& spec, uint64_t rng_seed) {
  GG_CHECK(spec.p >= 2 && spec.k >= 2 && spec.l >= 1,
           "batch spec needs p>=2, k>=2, l>=1 (got p=" << spec.p
                                                       << " k=" << spec.k
                                                       << " l=" << spec.l << ")");
  // group train sequences per identity, in stable sorted order
  std::map<std::string, std::vector<const SequenceRecord*>> by_id;
  for (const auto& e : manifest.entries)
    if (e.split == "train") by_id[e.id].push_back(&e);
  GG_CHECK(static_cast<int64_t>(by_id.size()) >= spec.p,
           "need " << spec.p << " train identities, manifest has "
                   << by_id.size());
  std::vector<std::string> ids;
  for (auto& [id, seqs] : by_id) {
    std::sort(seqs.begin(), seqs.end(),
              [](const SequenceRecord* a, const SequenceRecord* b) {
                return std::tie(a->condition, a->view, a->seq) <
                       std::tie(b->condition, b->view, b->seq);
              });
    ids.push_back(id);
  }

  SplitMix64 rng(rng_seed);
  // partial Fisher-Yates for the first p identities
  std::vector<int64_t> order(ids.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  for (int64_t i = 0; i < spec.p; ++i) {
    const int64_t j =
        i + static_cast<int64_t>(rng.next() %
                                 static_cast<uint64_t>(order.size() - i));
    std::swap(order[i], order[j]);
  }

  std::vector<BatchItem> batch;
  batch.reserve(spec.p * spec.k);
  for (int64_t pi = 0; pi < spec.p; ++pi) {
    const int64_t id_idx = order[pi];
    const auto& seqs = by_id[ids[id_idx]];
    const int64_t count = static_cast<int64_t>(seqs.size());
    std::vector<int64_t> picks(spec.k);
    if (count >= spec.k) {
      std::vector<int64_t> sidx(count);
      for (int64_t i = 0; i < count; ++i) sidx[i] = i;
      for (int64_t i = 0; i < spec.k; ++i) {
        const int64_t j =
            i + static_cast<int64_t>(rng.next() %
                                     static_cast<uint64_t>(count - i));
        std::swap(sidx[i], sidx[j]);
        picks[i] = sidx[i];
      }
    } else {
      for (int64_t i = 0; i < spec.k; ++i)
        picks[i] = static_cast<int64_t>(rng.next() %
                                        static_cast<uint64_t>(count));
    }
    for (int64_t ki = 0; ki < spec.k; ++ki) {
      BatchItem item;
      item.record = seqs[picks[ki]];
      item.label = id_idx;
      item.frame_indices = subsample_frame_indices(
          static_cast<int64_t>(item.record->frames.size()), spec.l, rng.next());
      batch.push_back(std::move(item));
    }
  }
  return batch;
}

}  // namespace gregait
