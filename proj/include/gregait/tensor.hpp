#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "gregait/common.hpp"

namespace gregait {

// Dense row-major N-d array. Intentionally small: shape + contiguous
// storage + indexed access; the kernels operate on raw pointers.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    int64_t n = 1;
    for (int64_t d : shape_) {
      GG_CHECK(d >= 0, "negative tensor dimension");
      n *= d;
    }
    data_.assign(static_cast<size_t>(n), T(0));
    rebuild_strides();
  }
  Tensor(std::initializer_list<int64_t> shape)
      : Tensor(std::vector<int64_t>(shape)) {}

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t shape(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t size() const { return numel(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& operator()(int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator()(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  T& operator()(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * strides_[0] + j)];
  }
  const T& operator()(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * strides_[0] + j)];
  }
  T& operator()(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>(i * strides_[0] + j * strides_[1] + k)];
  }
  const T& operator()(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>(i * strides_[0] + j * strides_[1] + k)];
  }
  T& operator()(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data_[static_cast<size_t>(i * strides_[0] + j * strides_[1] +
                                     k * strides_[2] + l)];
  }
  const T& operator()(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data_[static_cast<size_t>(i * strides_[0] + j * strides_[1] +
                                     k * strides_[2] + l)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void reshape(std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    GG_CHECK(n == numel(), "reshape changes element count");
    shape_ = std::move(shape);
    rebuild_strides();
  }

  static Tensor full(std::vector<int64_t> shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

 private:
  void rebuild_strides() {
    strides_.assign(shape_.size(), 1);
    if (shape_.empty()) return;
    // strides_[i] = product of dims after i; last entry unused as 1
    for (int i = static_cast<int>(shape_.size()) - 2; i >= 0; --i)
      strides_[static_cast<size_t>(i)] =
          strides_[static_cast<size_t>(i) + 1] * shape_[static_cast<size_t>(i) + 1];
    // shift so strides_[k] pairs with index k in operator()
    std::vector<int64_t> s(shape_.size() - 1);
    for (size_t i = 0; i + 1 < shape_.size(); ++i) s[i] = strides_[i];
    strides_ = std::move(s);
  }

  std::vector<int64_t> shape_;
  std::vector<int64_t> strides_;  // strides for all but the last axis
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <class T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  return true;
}

}  // namespace gregait
