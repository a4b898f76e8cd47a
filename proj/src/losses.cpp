#include "gregait/losses.hpp"

#include <cmath>
#include <string>

namespace gregait {

template <class T>
TripletOut<T> batch_all_triplet(const Tensor<T>& emb,
                                const std::vector<int>& labels, T margin) {
  GG_CHECK(emb.ndim() == 3, "triplet expects [N,P,D] embeddings");
  const int64_t n = emb.shape(0), p = emb.shape(1), d = emb.shape(2);
  GG_CHECK(static_cast<int64_t>(labels.size()) == n,
           "label count does not match batch");
  TripletOut<T> out;
  out.grad = Tensor<T>({n, p, d});

  std::vector<double> dist(n * n);
  std::vector<double> dcoef(n * n);
  double total = 0;
  for (int64_t s = 0; s < p; ++s) {
    for (int64_t i = 0; i < n; ++i) {
      dist[i * n + i] = 0;
      for (int64_t j = i + 1; j < n; ++j) {
        double acc = 0;
        for (int64_t k = 0; k < d; ++k) {
          const double diff =
              static_cast<double>(emb(i, s, k)) - emb(j, s, k);
          acc += diff * diff;
        }
        dist[i * n + j] = dist[j * n + i] = std::sqrt(acc);
      }
    }
    // batch-all: sum the positive hinge terms, then mean over them
    double sum = 0;
    int64_t cnt = 0;
    for (int64_t a = 0; a < n; ++a)
      for (int64_t i = 0; i < n; ++i) {
        if (i == a || labels[i] != labels[a]) continue;
        for (int64_t j = 0; j < n; ++j) {
          if (labels[j] == labels[a]) continue;
          const double t = dist[a * n + i] - dist[a * n + j] + margin;
          if (t > 0) {
            sum += t;
            ++cnt;
          }
        }
      }
    if (cnt == 0) continue;
    total += sum / cnt;
    out.active += cnt;
    const double coef = 1.0 / (static_cast<double>(cnt) * p);
    std::fill(dcoef.begin(), dcoef.end(), 0.0);
    for (int64_t a = 0; a < n; ++a)
      for (int64_t i = 0; i < n; ++i) {
        if (i == a || labels[i] != labels[a]) continue;
        for (int64_t j = 0; j < n; ++j) {
          if (labels[j] == labels[a]) continue;
          if (dist[a * n + i] - dist[a * n + j] + margin > 0) {
            dcoef[a * n + i] += coef;
            dcoef[a * n + j] -= coef;
          }
        }
      }
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        const double c = dcoef[i * n + j];
        if (c == 0 || dist[i * n + j] <= 0) continue;  // 0-distance: flat
        const double inv = c / dist[i * n + j];
        for (int64_t k = 0; k < d; ++k) {
          const double u =
              inv * (static_cast<double>(emb(i, s, k)) - emb(j, s, k));
          out.grad(i, s, k) += static_cast<T>(u);
          out.grad(j, s, k) -= static_cast<T>(u);
        }
      }
  }
  out.loss = total / p;
  return out;
}

template <class T>
CrossEntropyOut<T> part_cross_entropy(const Tensor<T>& logits,
                                      const std::vector<int>& labels) {
  GG_CHECK(logits.ndim() == 3, "cross entropy expects [N,P,K] logits");
  const int64_t n = logits.shape(0), p = logits.shape(1), k = logits.shape(2);
  GG_CHECK(static_cast<int64_t>(labels.size()) == n,
           "label count does not match batch");
  CrossEntropyOut<T> out;
  out.grad = Tensor<T>({n, p, k});
  const double scale = 1.0 / (static_cast<double>(n) * p);
  double total = 0;
  std::vector<double> prob(k);
  for (int64_t i = 0; i < n; ++i) {
    GG_CHECK(labels[i] >= 0 && labels[i] < k,
             "label " << labels[i] << " outside [0," << k << ")");
    for (int64_t s = 0; s < p; ++s) {
      double mx = logits(i, s, 0);
      for (int64_t j = 1; j < k; ++j)
        mx = std::max(mx, static_cast<double>(logits(i, s, j)));
      double z = 0;
      for (int64_t j = 0; j < k; ++j) {
        prob[j] = std::exp(static_cast<double>(logits(i, s, j)) - mx);
        z += prob[j];
      }
      for (int64_t j = 0; j < k; ++j) prob[j] /= z;
      total -= std::log(prob[labels[i]]);
      for (int64_t j = 0; j < k; ++j)
        out.grad(i, s, j) = static_cast<T>(
            scale * (prob[j] - (j == labels[i] ? 1.0 : 0.0)));
    }
  }
  out.loss = total * scale;
  return out;
}

double combined_loss(double tri, double ce, double rec, double smo, double div,
                     const LossWeights& w) {
  const char* names[5] = {"triplet", "cross-entropy", "reconstruction",
                          "smoothness", "diversity"};
  const double vals[5] = {tri, ce, rec, smo, div};
  for (int i = 0; i < 5; ++i)
    GG_CHECK(std::isfinite(vals[i]),
             "loss component '" << names[i] << "' is not finite");
  return tri + ce + w.rec * rec + w.smo * smo + w.div * div;
}

template TripletOut<float> batch_all_triplet(const Tensor<float>&,
                                             const std::vector<int>&, float);
template TripletOut<double> batch_all_triplet(const Tensor<double>&,
                                              const std::vector<int>&, double);
template CrossEntropyOut<float> part_cross_entropy(const Tensor<float>&,
                                                   const std::vector<int>&);
template CrossEntropyOut<double> part_cross_entropy(const Tensor<double>&,
                                                    const std::vector<int>&);

}  // namespace gregait
