#pragma once

#include <vector>

#include "gregait/tensor.hpp"

namespace gregait {

// Batch-all triplet loss over per-part embeddings [N, P, D] with integer
// labels. Per part: Euclidean distances, every (anchor, positive, negative)
// combination, hinge at the margin, mean over the triplets with a strictly
// positive term (0 if none); the part values are averaged. grad matches emb.
template <class T>
struct TripletOut {
  double loss = 0;
  int64_t active = 0;  // hinge-positive triplet count, summed over parts
  Tensor<T> grad;
};

template <class T>
TripletOut<T> batch_all_triplet(const Tensor<T>& emb,
                                const std::vector<int>& labels, T margin);

// Mean softmax cross-entropy over parts and samples for logits [N, P, K].
template <class T>
struct CrossEntropyOut {
  double loss = 0;
  Tensor<T> grad;
};

template <class T>
CrossEntropyOut<T> part_cross_entropy(const Tensor<T>& logits,
                                      const std::vector<int>& labels);

// Weighted total of the five training objectives. Any non-finite component
// aborts with the component's name.
struct LossWeights {
  double rec = 1.0;
  double smo = 0.01;
  double div = 5.0;
};

double combined_loss(double tri, double ce, double rec, double smo, double div,
                     const LossWeights& w);

}  // namespace gregait
