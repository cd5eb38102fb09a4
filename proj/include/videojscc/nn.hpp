// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Minimal trainable layer set used by the transmission pipeline: 2-D
// convolutions, transposed convolutions, ReLU and residual blocks, plus Adam.
// Layers cache what backward needs only when a forward pass runs in training
// mode, so inference on a shared const model is side-effect free.

#ifndef VIDEOJSCC_NN_HPP
#define VIDEOJSCC_NN_HPP

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "videojscc/rng.hpp"
#include "videojscc/tensor.hpp"

namespace videojscc {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// Named view of one parameter tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

namespace detail {

/// Gathers k*k patches on a (gh x gw) output grid with stride s and padding p
/// into a [(C*k*k) x (gh*gw)] column matrix. Out-of-image taps read as zero.
template <typename T>
void im2col(const T* img, int C, int H, int W, int k, int s, int p, int gh, int gw, T* cols) {
  const std::int64_t grid = static_cast<std::int64_t>(gh) * gw;
  for (int c = 0; c < C; ++c) {
    const T* plane = img + static_cast<std::int64_t>(c) * H * W;
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        T* row = cols + ((static_cast<std::int64_t>(c) * k + u) * k + v) * grid;
        for (int i = 0; i < gh; ++i) {
          const int y = i * s - p + u;
          T* dst = row + static_cast<std::int64_t>(i) * gw;
          if (y < 0 || y >= H) {
            std::fill(dst, dst + gw, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::int64_t>(y) * W;
          for (int j = 0; j < gw; ++j) {
            const int x = j * s - p + v;
            dst[j] = (x >= 0 && x < W) ? src[x] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds columns back into a C x H x W image.
template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int k, int s, int p, int gh, int gw, T* img) {
  const std::int64_t grid = static_cast<std::int64_t>(gh) * gw;
  for (int c = 0; c < C; ++c) {
    T* plane = img + static_cast<std::int64_t>(c) * H * W;
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        const T* row = cols + ((static_cast<std::int64_t>(c) * k + u) * k + v) * grid;
        for (int i = 0; i < gh; ++i) {
          const int y = i * s - p + u;
          if (y < 0 || y >= H) continue;
          T* dst = plane + static_cast<std::int64_t>(y) * W;
          const T* src = row + static_cast<std::int64_t>(i) * gw;
          for (int j = 0; j < gw; ++j) {
            const int x = j * s - p + v;
            if (x >= 0 && x < W) dst[x] += src[j];
          }
        }
      }
    }
  }
}

inline int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }
inline int deconv_out_dim(int in, int k, int s, int p, int op) { return (in - 1) * s - 2 * p + k + op; }

}  // namespace detail

/// 2-D convolution, NCHW, square kernel.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad) {
    weight_ = Tensor<T>({out_ch, in_ch * k * k});
    bias_ = Tensor<T>({out_ch});
    wgrad_ = Tensor<T>({out_ch, in_ch * k * k});
    bgrad_ = Tensor<T>({out_ch});
  }

  void init(std::mt19937_64& rng) {
    const double stddev = std::sqrt(2.0 / (in_ch_ * k_ * k_));
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::int64_t i = 0; i < weight_.numel(); ++i) weight_[i] = static_cast<T>(dist(rng));
    bias_.fill(T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int oh = detail::conv_out_dim(H, k_, stride_, pad_);
    const int ow = detail::conv_out_dim(W, k_, stride_, pad_);
    Tensor<T> y({N, out_ch_, oh, ow});
    std::vector<T> cols(static_cast<std::size_t>(in_ch_) * k_ * k_ * oh * ow);
    ConstMatMap<T> wm(weight_.data(), out_ch_, in_ch_ * k_ * k_);
    for (int n = 0; n < N; ++n) {
      detail::im2col(x.data() + x.index4(n, 0, 0, 0), in_ch_, H, W, k_, stride_, pad_, oh, ow, cols.data());
      ConstMatMap<T> cm(cols.data(), in_ch_ * k_ * k_, oh * ow);
      MatMap<T> ym(y.data() + y.index4(n, 0, 0, 0), out_ch_, oh * ow);
      ym.noalias() = wm * cm;
      for (int c = 0; c < out_ch_; ++c) ym.row(c).array() += bias_[c];
    }
    if (train) cached_in_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T>& x = cached_in_;
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int oh = gy.dim(2), ow = gy.dim(3);
    Tensor<T> gx(x.shape());
    std::vector<T> cols(static_cast<std::size_t>(in_ch_) * k_ * k_ * oh * ow);
    std::vector<T> gcols(cols.size());
    ConstMatMap<T> wm(weight_.data(), out_ch_, in_ch_ * k_ * k_);
    MatMap<T> gwm(wgrad_.data(), out_ch_, in_ch_ * k_ * k_);
    for (int n = 0; n < N; ++n) {
      detail::im2col(x.data() + x.index4(n, 0, 0, 0), in_ch_, H, W, k_, stride_, pad_, oh, ow, cols.data());
      ConstMatMap<T> cm(cols.data(), in_ch_ * k_ * k_, oh * ow);
      ConstMatMap<T> gym(gy.data() + gy.index4(n, 0, 0, 0), out_ch_, oh * ow);
      gwm.noalias() += gym * cm.transpose();
      MatMap<T> gcm(gcols.data(), in_ch_ * k_ * k_, oh * ow);
      gcm.noalias() = wm.transpose() * gym;
      detail::col2im_add(gcols.data(), in_ch_, H, W, k_, stride_, pad_, oh, ow, gx.data() + gx.index4(n, 0, 0, 0));
      for (int c = 0; c < out_ch_; ++c) bgrad_[c] += gym.row(c).sum();
    }
    return gx;
  }

  void register_params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight_, &wgrad_});
    out.push_back({prefix + ".bias", &bias_, &bgrad_});
  }

  std::int64_t param_count() const { return weight_.numel() + bias_.numel(); }
  int out_channels() const { return out_ch_; }

 private:
  int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  Tensor<T> weight_, bias_, wgrad_, bgrad_;
  Tensor<T> cached_in_;
};

/// Transposed 2-D convolution (fractionally-strided). Output spatial size is
/// (in-1)*s - 2p + k + op; an optional target size crops the result so every
/// ceil-division done by a stride-2 convolution can be inverted exactly.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int k, int stride, int pad, int out_pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad), out_pad_(out_pad) {
    weight_ = Tensor<T>({in_ch, out_ch * k * k});
    bias_ = Tensor<T>({out_ch});
    wgrad_ = Tensor<T>({in_ch, out_ch * k * k});
    bgrad_ = Tensor<T>({out_ch});
  }

  void init(std::mt19937_64& rng) {
    const double stddev = std::sqrt(2.0 / (in_ch_ * k_ * k_));
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::int64_t i = 0; i < weight_.numel(); ++i) weight_[i] = static_cast<T>(dist(rng));
    bias_.fill(T(0));
  }

  /// target_h/target_w <= natural output size; 0 means no cropping.
  Tensor<T> forward(const Tensor<T>& x, bool train, int target_h = 0, int target_w = 0) {
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int full_h = detail::deconv_out_dim(H, k_, stride_, pad_, out_pad_);
    const int full_w = detail::deconv_out_dim(W, k_, stride_, pad_, out_pad_);
    const int oh = target_h > 0 ? target_h : full_h;
    const int ow = target_w > 0 ? target_w : full_w;
    Tensor<T> yfull({N, out_ch_, full_h, full_w});
    std::vector<T> cols(static_cast<std::size_t>(out_ch_) * k_ * k_ * H * W);
    ConstMatMap<T> wm(weight_.data(), in_ch_, out_ch_ * k_ * k_);
    for (int n = 0; n < N; ++n) {
      ConstMatMap<T> xm(x.data() + x.index4(n, 0, 0, 0), in_ch_, H * W);
      MatMap<T> cm(cols.data(), out_ch_ * k_ * k_, H * W);
      cm.noalias() = wm.transpose() * xm;
      detail::col2im_add(cols.data(), out_ch_, full_h, full_w, k_, stride_, pad_, H, W,
                         yfull.data() + yfull.index4(n, 0, 0, 0));
      MatMap<T> ym(yfull.data() + yfull.index4(n, 0, 0, 0), out_ch_, full_h * full_w);
      for (int c = 0; c < out_ch_; ++c) ym.row(c).array() += bias_[c];
    }
    if (train) {
      cached_in_ = x;
      cached_full_h_ = full_h;
      cached_full_w_ = full_w;
    }
    if (oh == full_h && ow == full_w) return yfull;
    Tensor<T> y({N, out_ch_, oh, ow});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < out_ch_; ++c)
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) y.at(n, c, i, j) = yfull.at(n, c, i, j);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy_in) {
    const Tensor<T>& x = cached_in_;
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    // Re-pad the gradient if the forward output was cropped.
    Tensor<T> gy = gy_in;
    if (gy_in.dim(2) != cached_full_h_ || gy_in.dim(3) != cached_full_w_) {
      gy = Tensor<T>({N, out_ch_, cached_full_h_, cached_full_w_});
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < out_ch_; ++c)
          for (int i = 0; i < gy_in.dim(2); ++i)
            for (int j = 0; j < gy_in.dim(3); ++j) gy.at(n, c, i, j) = gy_in.at(n, c, i, j);
    }
    Tensor<T> gx(x.shape());
    std::vector<T> gcols(static_cast<std::size_t>(out_ch_) * k_ * k_ * H * W);
    ConstMatMap<T> wm(weight_.data(), in_ch_, out_ch_ * k_ * k_);
    MatMap<T> gwm(wgrad_.data(), in_ch_, out_ch_ * k_ * k_);
    for (int n = 0; n < N; ++n) {
      detail::im2col(gy.data() + gy.index4(n, 0, 0, 0), out_ch_, cached_full_h_, cached_full_w_, k_, stride_, pad_, H,
                     W, gcols.data());
      ConstMatMap<T> gcm(gcols.data(), out_ch_ * k_ * k_, H * W);
      ConstMatMap<T> xm(x.data() + x.index4(n, 0, 0, 0), in_ch_, H * W);
      gwm.noalias() += xm * gcm.transpose();
      MatMap<T> gxm(gx.data() + gx.index4(n, 0, 0, 0), in_ch_, H * W);
      gxm.noalias() = wm * gcm;
      ConstMatMap<T> gym(gy.data() + gy.index4(n, 0, 0, 0), out_ch_, cached_full_h_ * cached_full_w_);
      for (int c = 0; c < out_ch_; ++c) bgrad_[c] += gym.row(c).sum();
    }
    return gx;
  }

  void register_params(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight_, &wgrad_});
    out.push_back({prefix + ".bias", &bias_, &bgrad_});
  }

  std::int64_t param_count() const { return weight_.numel() + bias_.numel(); }

 private:
  int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0, out_pad_ = 0;
  Tensor<T> weight_, bias_, wgrad_, bgrad_;
  Tensor<T> cached_in_;
  int cached_full_h_ = 0, cached_full_w_ = 0;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    if (train) cached_in_ = x;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.shape());
    for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] = cached_in_[i] > T(0) ? gy[i] : T(0);
    return gx;
  }

 private:
  Tensor<T> cached_in_;
};

/// Two channel-preserving 3x3 convolutions with a pointwise ReLU between
/// them and an identity skip.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  explicit ResBlock(int channels) : conv1_(channels, channels, 3, 1, 1), conv2_(channels, channels, 3, 1, 1) {}

  void init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = conv2_.forward(relu_.forward(conv1_.forward(x, train), train), train);
    y += x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = conv1_.backward(relu_.backward(conv2_.backward(gy)));
    gx += gy;
    return gx;
  }

  void register_params(ParamList<T>& out, const std::string& prefix) {
    conv1_.register_params(out, prefix + ".conv1");
    conv2_.register_params(out, prefix + ".conv2");
  }

  std::int64_t param_count() const { return conv1_.param_count() + conv2_.param_count(); }

 private:
  Conv2d<T> conv1_, conv2_;
  ReLU<T> relu_;
};

/// Adam with bias correction. The learning rate is supplied per step so the
/// cosine schedule stays outside the optimizer.
template <typename T>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const ParamList<T>& params) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.value->shape());
      v_.emplace_back(p.value->shape());
    }
    step_ = 0;
  }

  void step(const ParamList<T>& params, double lr) {
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& w = *params[i].value;
      Tensor<T>& g = *params[i].grad;
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::int64_t j = 0; j < w.numel(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
        const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        w[j] -= static_cast<T>(lr * (mj / c1) / (std::sqrt(vj / c2) + eps_));
      }
    }
  }

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }

  /// Moment tensors exposed by name so checkpoints can resume bit-exactly.
  void register_state(const ParamList<T>& params, ParamList<T>& out) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.push_back({"opt.m." + params[i].name, &m_[i], &m_[i]});
      out.push_back({"opt.v." + params[i].name, &v_[i], &v_[i]});
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (const auto& p : params) p.grad->fill(T(0));
}

}  // namespace videojscc

#endif  // VIDEOJSCC_NN_HPP
