#pragma once

#include <vector>

#include "gregait/layers.hpp"

namespace gregait {

// SGD with classical momentum: v = mu*v + (g + wd*w); w -= lr*v.
// Decay is skipped for parameters flagged decay=false (the normalization
// scales/shifts) unless decay_all overrides that.
template <class T>
class SGD {
 public:
  SGD(ParamRefs<T> params, double momentum, double weight_decay,
      bool decay_all = false)
      : params_(std::move(params)),
        momentum_(momentum),
        weight_decay_(weight_decay),
        decay_all_(decay_all) {
    velocity_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i)
      velocity_[i].assign(static_cast<size_t>(params_[i]->w.numel()), T(0));
  }

  void zero_grad() {
    for (Param<T>* p : params_) p->g.zero();
  }

  void step(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
      Param<T>& p = *params_[i];
      const bool decay = decay_all_ || p.decay;
      const T wd = decay ? static_cast<T>(weight_decay_) : T(0);
      const T mu = static_cast<T>(momentum_);
      const T eta = static_cast<T>(lr);
      T* v = velocity_[i].data();
      for (int64_t k = 0; k < p.w.numel(); ++k) {
        const T g = p.g[k] + wd * p.w[k];
        v[k] = mu * v[k] + g;
        p.w[k] -= eta * v[k];
      }
    }
  }

  const ParamRefs<T>& params() const { return params_; }
  std::vector<std::vector<T>>& velocity() { return velocity_; }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  ParamRefs<T> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_, weight_decay_;
  bool decay_all_;
};

}  // namespace gregait
