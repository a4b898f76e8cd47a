#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gregait/kernels.hpp"
#include "gregait/tensor.hpp"

// Small Caffe-flavored layer set: each layer owns its parameters and the
// forward caches its backward needs. backward() accumulates into the
// parameter .g buffers (the trainer zeroes them once per step) and returns
// the input gradient.

namespace gregait {

template <class T>
struct Param {
  std::string name;
  Tensor<T> w;
  Tensor<T> g;
  bool decay = true;  // weight decay applies (off for BN scale/shift)

  void setup(std::string n, std::vector<int64_t> shape, bool dec = true) {
    name = std::move(n);
    w = Tensor<T>(shape);
    g = Tensor<T>(std::move(shape));
    decay = dec;
  }
};

template <class T>
using ParamRefs = std::vector<Param<T>*>;

template <class T>
void init_conv_weight(Param<T>& p, int64_t fan_out, SplitMix64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_out));
  for (int64_t i = 0; i < p.w.numel(); ++i)
    p.w[i] = static_cast<T>(stddev * rng.normal());
}

namespace detail {
// trailing spatial extent of an [N, C, ...] activation
inline int64_t trailing_hw(const std::vector<int64_t>& shape) {
  int64_t hw = 1;
  for (size_t i = 2; i < shape.size(); ++i) hw *= shape[i];
  return hw;
}
}  // namespace detail

template <class T>
class Conv1x1 {
 public:
  void setup(const std::string& name, int64_t ci, int64_t co, bool bias,
             SplitMix64& rng) {
    ci_ = ci;
    co_ = co;
    has_bias_ = bias;
    w.setup(name + ".w", {co, ci});
    init_conv_weight(w, co, rng);
    if (bias) b.setup(name + ".b", {co});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    GG_CHECK(x.ndim() >= 2 && x.shape(1) == ci_,
             w.name << ": expected " << ci_ << " input channels, got "
                    << x.shape(1));
    x_ = x;
    auto oshape = x.shape();
    oshape[1] = co_;
    Tensor<T> y(oshape);
    kernels::conv1x1_fwd(x.data(), x.shape(0), ci_, detail::trailing_hw(x.shape()),
                         w.w.data(), has_bias_ ? b.w.data() : nullptr, co_,
                         y.data());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int64_t n = x_.shape(0);
    const int64_t hw = detail::trailing_hw(x_.shape());
    kernels::conv1x1_bwd_params(x_.data(), gy.data(), n, ci_, co_, hw,
                                w.g.data(), has_bias_ ? b.g.data() : nullptr);
    Tensor<T> gx(x_.shape());
    kernels::conv1x1_bwd_input(gy.data(), n, co_, hw, w.w.data(), ci_,
                               gx.data());
    return gx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&w);
    if (has_bias_) out.push_back(&b);
  }

  Param<T> w, b;

 private:
  int64_t ci_ = 0, co_ = 0;
  bool has_bias_ = true;
  Tensor<T> x_;
};

template <class T>
class Conv3x3 {
 public:
  void setup(const std::string& name, int64_t ci, int64_t co, int stride,
             bool bias, SplitMix64& rng) {
    ci_ = ci;
    co_ = co;
    stride_ = stride;
    has_bias_ = bias;
    w.setup(name + ".w", {co, ci, 3, 3});
    init_conv_weight(w, co * 9, rng);
    if (bias) b.setup(name + ".b", {co});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    GG_CHECK(x.ndim() == 4 && x.shape(1) == ci_,
             w.name << ": expected [N," << ci_ << ",H,W]");
    x_ = x;
    const int64_t oh = conv_out_extent(x.shape(2), stride_);
    const int64_t ow = conv_out_extent(x.shape(3), stride_);
    Tensor<T> y({x.shape(0), co_, oh, ow});
    kernels::conv3x3_fwd(x.data(), x.shape(0), ci_, x.shape(2), x.shape(3),
                         w.w.data(), has_bias_ ? b.w.data() : nullptr, co_,
                         stride_, y.data());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    kernels::conv3x3_bwd_params(x_.data(), gy.data(), x_.shape(0), ci_, co_,
                                x_.shape(2), x_.shape(3), stride_, w.g.data(),
                                has_bias_ ? b.g.data() : nullptr);
    Tensor<T> gx(x_.shape());
    kernels::conv3x3_bwd_input(gy.data(), x_.shape(0), co_, w.w.data(), ci_,
                               x_.shape(2), x_.shape(3), stride_, gx.data());
    return gx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&w);
    if (has_bias_) out.push_back(&b);
  }

  Param<T> w, b;

 private:
  int64_t ci_ = 0, co_ = 0;
  int stride_ = 1;
  bool has_bias_ = true;
  Tensor<T> x_;
};

template <class T>
class BatchNorm2d {
 public:
  void setup(const std::string& name, int64_t c) {
    c_ = c;
    name_ = name;
    gamma.setup(name + ".gamma", {c}, /*decay=*/false);
    beta.setup(name + ".beta", {c}, /*decay=*/false);
    gamma.w.fill(T(1));
    running_mean.assign(c, 0.0);
    running_var.assign(c, 1.0);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    GG_CHECK(x.ndim() >= 2 && x.shape(1) == c_,
             gamma.name << ": expected " << c_ << " channels");
    const int64_t n = x.shape(0);
    const int64_t hw = detail::trailing_hw(x.shape());
    std::vector<double> mean(c_), var(c_);
    if (training) {
      kernels::bn2d_stats(x.data(), n, c_, hw, mean.data(), var.data());
      const double m = static_cast<double>(n * hw);
      const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
      for (int64_t c = 0; c < c_; ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
        running_var[c] =
            (1.0 - momentum) * running_var[c] + momentum * var[c] * unbias;
      }
    } else {
      mean = running_mean;
      var = running_var;
    }
    invstd_.resize(c_);
    for (int64_t c = 0; c < c_; ++c) invstd_[c] = 1.0 / std::sqrt(var[c] + eps);
    used_batch_stats_ = training;
    n_ = n;
    xhat_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    kernels::bn2d_fwd(x.data(), n, c_, hw, mean.data(), invstd_.data(),
                      gamma.w.data(), beta.w.data(), y.data(), xhat_.data());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int64_t hw = detail::trailing_hw(xhat_.shape());
    Tensor<T> gx(xhat_.shape());
    kernels::bn2d_bwd(xhat_.data(), gy.data(), n_, c_, hw, gamma.w.data(),
                      invstd_.data(), used_batch_stats_, gx.data(),
                      gamma.g.data(), beta.g.data());
    return gx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  const std::string& name() const { return name_; }

  Param<T> gamma, beta;
  std::vector<double> running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

 private:
  std::string name_;
  int64_t c_ = 0, n_ = 0;
  Tensor<T> xhat_;
  std::vector<double> invstd_;
  bool used_batch_stats_ = false;
};

template <class T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = Tensor<T>(x.shape());
    kernels::relu_fwd(x.data(), x.numel(), y_.data());
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(y_.shape());
    kernels::relu_bwd(y_.data(), gy.data(), y_.numel(), gx.data());
    return gx;
  }

 private:
  Tensor<T> y_;
};

template <class T>
class GELU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.shape());
    kernels::gelu_fwd(x.data(), x.numel(), y.data());
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(x_.shape());
    kernels::gelu_bwd(x_.data(), gy.data(), x_.numel(), gx.data());
    return gx;
  }

 private:
  Tensor<T> x_;
};

template <class T>
class ChannelSoftmax {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = Tensor<T>(x.shape());
    kernels::channel_softmax_fwd(x.data(), x.shape(0), x.shape(1),
                                 detail::trailing_hw(x.shape()), y_.data());
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(y_.shape());
    kernels::channel_softmax_bwd(y_.data(), gy.data(), y_.shape(0), y_.shape(1),
                                 detail::trailing_hw(y_.shape()), gx.data());
    return gx;
  }
  const Tensor<T>& cached() const { return y_; }

 private:
  Tensor<T> y_;
};

// Strided spatial subsampling; with a following 1x1 conv this is exactly a
// strided 1x1 convolution (the residual downsample path).
template <class T>
class Subsample {
 public:
  explicit Subsample(int stride = 2) : stride_(stride) {}
  void set_stride(int s) { stride_ = s; }

  Tensor<T> forward(const Tensor<T>& x) {
    GG_CHECK(x.ndim() == 4, "subsample expects [N,C,H,W]");
    in_shape_ = x.shape();
    const int64_t oh = conv_out_extent(x.shape(2), stride_);
    const int64_t ow = conv_out_extent(x.shape(3), stride_);
    Tensor<T> y({x.shape(0), x.shape(1), oh, ow});
    for (int64_t n = 0; n < x.shape(0); ++n)
      for (int64_t c = 0; c < x.shape(1); ++c)
        for (int64_t y0 = 0; y0 < oh; ++y0)
          for (int64_t x0 = 0; x0 < ow; ++x0)
            y(n, c, y0, x0) = x(n, c, y0 * stride_, x0 * stride_);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape_);
    for (int64_t n = 0; n < gy.shape(0); ++n)
      for (int64_t c = 0; c < gy.shape(1); ++c)
        for (int64_t y0 = 0; y0 < gy.shape(2); ++y0)
          for (int64_t x0 = 0; x0 < gy.shape(3); ++x0)
            gx(n, c, y0 * stride_, x0 * stride_) = gy(n, c, y0, x0);
    return gx;
  }

 private:
  int stride_ = 2;
  std::vector<int64_t> in_shape_;
};

// Fully connected layer as a 1x1 conv with a unit spatial extent.
template <class T>
class Linear {
 public:
  void setup(const std::string& name, int64_t ci, int64_t co, bool bias,
             SplitMix64& rng) {
    conv_.setup(name, ci, co, bias, rng);
  }
  // x [N, Ci] -> [N, Co]
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> xs = x;
    xs.reshape({x.shape(0), x.shape(1), 1});
    Tensor<T> y = conv_.forward(xs);
    y.reshape({y.shape(0), y.shape(1)});
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gys = gy;
    gys.reshape({gy.shape(0), gy.shape(1), 1});
    Tensor<T> gx = conv_.backward(gys);
    gx.reshape({gx.shape(0), gx.shape(1)});
    return gx;
  }
  void collect(ParamRefs<T>& out) { conv_.collect(out); }
  Param<T>& weight() { return conv_.w; }

 private:
  Conv1x1<T> conv_;
};

// conv-bn-relu-conv-bn residual block with an optional projection shortcut
template <class T>
class BasicBlock {
 public:
  void setup(const std::string& name, int64_t cin, int64_t cout, int stride,
             SplitMix64& rng) {
    stride_ = stride;
    proj_ = stride != 1 || cin != cout;
    conv1_.setup(name + ".conv1", cin, cout, stride, /*bias=*/false, rng);
    bn1_.setup(name + ".bn1", cout);
    conv2_.setup(name + ".conv2", cout, cout, 1, /*bias=*/false, rng);
    bn2_.setup(name + ".bn2", cout);
    if (proj_) {
      sub_.set_stride(stride);
      proj_conv_.setup(name + ".proj", cin, cout, /*bias=*/false, rng);
      proj_bn_.setup(name + ".proj_bn", cout);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x), training));
    h = bn2_.forward(conv2_.forward(h), training);
    Tensor<T> sc;
    if (proj_) {
      Tensor<T> s = sub_.forward(x);
      const auto sshape = s.shape();
      s.reshape({sshape[0], sshape[1], sshape[2] * sshape[3]});
      Tensor<T> p = proj_conv_.forward(s);
      p.reshape({sshape[0], h.shape(1), sshape[2], sshape[3]});
      sc = proj_bn_.forward(p, training);
    } else {
      sc = x;
    }
    GG_CHECK(h.same_shape(sc), "residual shape mismatch");
    Tensor<T> sum(h.shape());
    for (int64_t i = 0; i < h.numel(); ++i) sum[i] = h[i] + sc[i];
    return relu_out_.forward(sum);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gsum = relu_out_.backward(gy);
    Tensor<T> gx_main =
        conv1_.backward(bn1_.backward(relu1_.backward(
            conv2_.backward(bn2_.backward(gsum)))));
    if (proj_) {
      Tensor<T> gp = proj_bn_.backward(gsum);
      const auto pshape = gp.shape();
      gp.reshape({pshape[0], pshape[1], pshape[2] * pshape[3]});
      Tensor<T> gs = proj_conv_.backward(gp);
      gs.reshape({pshape[0], gs.shape(1), pshape[2], pshape[3]});
      Tensor<T> gsc = sub_.backward(gs);
      for (int64_t i = 0; i < gx_main.numel(); ++i) gx_main[i] += gsc[i];
    } else {
      for (int64_t i = 0; i < gx_main.numel(); ++i) gx_main[i] += gsum[i];
    }
    return gx_main;
  }

  void collect(ParamRefs<T>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
    if (proj_) {
      proj_conv_.collect(out);
      proj_bn_.collect(out);
    }
  }

  void collect_bn(std::vector<BatchNorm2d<T>*>& out) {
    out.push_back(&bn1_);
    out.push_back(&bn2_);
    if (proj_) out.push_back(&proj_bn_);
  }

 private:
  int stride_ = 1;
  bool proj_ = false;
  Conv3x3<T> conv1_, conv2_;
  BatchNorm2d<T> bn1_, bn2_;
  ReLU<T> relu1_, relu_out_;
  Subsample<T> sub_;
  Conv1x1<T> proj_conv_;
  BatchNorm2d<T> proj_bn_;
};

}  // namespace gregait
