// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Entropy model and explicit-length variable-length coding.
//
// A small hyperprior autoencoder maps the feature decomposition to a
// quantized integer bottleneck (the transmitted side information) and back to
// a per-element Gaussian scale sigma. Because the keep/drop mask is computed
// from sigma alone, transmitter and receiver rebuild the exact same mask from
// the side information; no index list ever travels.

#ifndef VIDEOJSCC_ENTROPY_VLC_HPP
#define VIDEOJSCC_ENTROPY_VLC_HPP

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "videojscc/core_types.hpp"
#include "videojscc/errors.hpp"
#include "videojscc/nn.hpp"

namespace videojscc {

/// Lower bound keeping the Gaussian scale strictly positive.
inline constexpr double kSigmaFloor = 1e-6;

/// Per-element importance scores in bits, shaped like the decomposition.
template <typename T>
struct EntropyMap {
  Tensor<T> common;      // [1, C, h, w]
  Tensor<T> individual;  // [N, C, h, w]

  std::int64_t element_count() const { return common.numel() + individual.numel(); }
  T flat_get(std::int64_t i) const { return i < common.numel() ? common[i] : individual[i - common.numel()]; }
};

/// Quantized entropy-model bottleneck; the only side information transmitted.
struct SideInfo {
  Tensor<std::int32_t> hyper_code;  // [M, Ch, hh, wh] with M = N+1 maps
  std::int64_t cost_symbols() const { return hyper_code.numel(); }
};

/// Boolean keep/drop mask over the flat [common | individual] element order.
struct KeepMask {
  std::vector<std::uint8_t> keep;
  std::int64_t kept_count = 0;
  std::int64_t common_numel = 0;  // elements [0, common_numel) address the common map

  std::int64_t kept_in_common() const {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < common_numel; ++i) n += keep[static_cast<std::size_t>(i)];
    return n;
  }
};

namespace detail {

inline double log2_gauss_nll(double w, double sigma) {
  // -log2 p(w; 0, sigma) for the Gaussian density.
  constexpr double half_log2_2pi = 1.3257480647361593;  // 0.5*log2(2*pi)
  const double s2 = sigma * sigma;
  return std::log2(sigma) + half_log2_2pi + (w * w) / (2.0 * s2) / std::numbers::ln2;
}

/// Differential entropy of a zero-mean Gaussian with scale sigma, in bits.
inline double gaussian_entropy_bits(double sigma) {
  constexpr double half_log2_2pi_e = 2.047095585180641;  // 0.5*log2(2*pi*e)
  return half_log2_2pi_e + std::log2(sigma);
}

}  // namespace detail

/// Hyperprior autoencoder: three stride-2 convolutions down to the integer
/// bottleneck, three transposed convolutions back up to a sigma per feature
/// element. Inputs are the decomposition maps stacked along the batch axis.
template <typename T>
class EntropyCodec {
 public:
  EntropyCodec() = default;
  EntropyCodec(int feature_ch, int hyper_ch)
      : feature_ch_(feature_ch),
        hyper_ch_(hyper_ch),
        enc1_(feature_ch, hyper_ch, 3, 2, 1),
        enc2_(hyper_ch, hyper_ch, 3, 2, 1),
        enc3_(hyper_ch, hyper_ch, 3, 2, 1),
        dec1_(hyper_ch, hyper_ch, 3, 2, 1, 1),
        dec2_(hyper_ch, hyper_ch, 3, 2, 1, 1),
        dec3_(hyper_ch, feature_ch, 3, 2, 1, 1) {}

  void init(std::mt19937_64& rng) {
    enc1_.init(rng);
    enc2_.init(rng);
    enc3_.init(rng);
    dec1_.init(rng);
    dec2_.init(rng);
    dec3_.init(rng);
  }

  /// Encodes stacked feature maps [M,C,h,w] to the continuous bottleneck.
  Tensor<T> encode(const Tensor<T>& stack, bool train) {
    Tensor<T> z = relu1_.forward(enc1_.forward(stack, train), train);
    z = relu2_.forward(enc2_.forward(z, train), train);
    return enc3_.forward(z, train);
  }

  /// Decodes a (de)quantized bottleneck back to sigma, cropping each upsample
  /// stage so the encoder's ceil-halving is inverted exactly.
  Tensor<T> decode_sigma(const Tensor<T>& code, int target_h, int target_w, bool train) {
    const int h1 = (target_h + 1) / 2;   // size after enc1
    const int w1 = (target_w + 1) / 2;
    const int h2 = (h1 + 1) / 2;         // size after enc2
    const int w2 = (w1 + 1) / 2;
    Tensor<T> x = relu3_.forward(dec1_.forward(code, train, h2, w2), train);
    x = relu4_.forward(dec2_.forward(x, train, h1, w1), train);
    x = dec3_.forward(x, train, target_h, target_w);
    if (train) cached_raw_ = x;
    Tensor<T> sigma(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) sigma[i] = static_cast<T>(kSigmaFloor + softplus(x[i]));
    return sigma;
  }

  /// Backpropagates a gradient w.r.t. sigma through decoder, bottleneck noise
  /// (identity) and encoder; returns the gradient w.r.t. the input stack.
  Tensor<T> backward(const Tensor<T>& gsigma) {
    Tensor<T> g(gsigma.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      g[i] = gsigma[i] * static_cast<T>(sigmoid(static_cast<double>(cached_raw_[i])));
    }
    g = dec1_.backward(relu3_.backward(dec2_.backward(relu4_.backward(dec3_.backward(g)))));
    return enc1_.backward(relu1_.backward(enc2_.backward(relu2_.backward(enc3_.backward(g)))));
  }

  void register_params(ParamList<T>& out, const std::string& prefix) {
    enc1_.register_params(out, prefix + ".enc1");
    enc2_.register_params(out, prefix + ".enc2");
    enc3_.register_params(out, prefix + ".enc3");
    dec1_.register_params(out, prefix + ".dec1");
    dec2_.register_params(out, prefix + ".dec2");
    dec3_.register_params(out, prefix + ".dec3");
  }

  std::int64_t param_count() const {
    return enc1_.param_count() + enc2_.param_count() + enc3_.param_count() + dec1_.param_count() +
           dec2_.param_count() + dec3_.param_count();
  }

  int hyper_channels() const { return hyper_ch_; }

  static double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
  }
  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

 private:
  int feature_ch_ = 0, hyper_ch_ = 0;
  Conv2d<T> enc1_, enc2_, enc3_;
  ConvTranspose2d<T> dec1_, dec2_, dec3_;
  ReLU<T> relu1_, relu2_, relu3_, relu4_;
  Tensor<T> cached_raw_;
};

/// Round-to-nearest-even quantization of the bottleneck.
template <typename T>
Tensor<std::int32_t> quantize_code(const Tensor<T>& z) {
  Tensor<std::int32_t> q(z.shape());
  for (std::int64_t i = 0; i < z.numel(); ++i) {
    q[i] = static_cast<std::int32_t>(std::nearbyint(static_cast<double>(z[i])));
  }
  return q;
}

/// Importance of each element: -log2 of its Gaussian likelihood, floored at
/// zero. High score = poorly predicted by the prior = informative.
template <typename T>
EntropyMap<T> importance(const FeatureDecomposition<T>& decomp, const Tensor<T>& sigma) {
  if (sigma.numel() != decomp.element_count()) throw ShapeError("importance: sigma shape mismatch");
  EntropyMap<T> map;
  map.common = Tensor<T>(decomp.common.shape());
  map.individual = Tensor<T>(decomp.individual.shape());
  for (std::int64_t i = 0; i < decomp.element_count(); ++i) {
    const double s = static_cast<double>(sigma[i]);
    if (!(s > 0.0)) throw RangeError("importance: sigma must be strictly positive");
    const double score = std::max(0.0, detail::log2_gauss_nll(static_cast<double>(decomp.flat_get(i)), s));
    if (i < map.common.numel())
      map.common[i] = static_cast<T>(score);
    else
      map.individual[i - map.common.numel()] = static_cast<T>(score);
  }
  return map;
}

/// Ranking scores used for mask construction. Unlike `importance` these
/// depend on sigma only, so the receiver reproduces them from side info
/// alone. Floored at zero like every entropy map.
template <typename T>
EntropyMap<T> mask_scores(const Tensor<T>& sigma, std::int64_t common_numel) {
  EntropyMap<T> map;
  map.common = Tensor<T>({static_cast<int>(common_numel)});
  map.individual = Tensor<T>({static_cast<int>(sigma.numel() - common_numel)});
  for (std::int64_t i = 0; i < sigma.numel(); ++i) {
    const double s = static_cast<double>(sigma[i]);
    if (!(s > 0.0)) throw RangeError("mask_scores: sigma must be strictly positive");
    const double score = std::max(0.0, detail::gaussian_entropy_bits(s));
    if (i < common_numel)
      map.common[i] = static_cast<T>(score);
    else
      map.individual[i - common_numel] = static_cast<T>(score);
  }
  return map;
}

/// Keeps exactly `budget_symbols` elements with the highest scores, ranked
/// jointly across the common and all individual maps. Ties break toward the
/// lower flat index, so the mask is a deterministic function of its inputs.
template <typename T>
KeepMask build_mask(const EntropyMap<T>& emap, std::int64_t budget_symbols) {
  const std::int64_t total = emap.element_count();
  if (budget_symbols < 0 || budget_symbols > total)
    throw RangeError("build_mask: budget " + std::to_string(budget_symbols) + " outside [0, " +
                     std::to_string(total) + "]");
  KeepMask mask;
  mask.common_numel = emap.common.numel();
  mask.keep.assign(static_cast<std::size_t>(total), 0);
  mask.kept_count = budget_symbols;
  if (budget_symbols == 0) return mask;
  if (budget_symbols == total) {
    std::fill(mask.keep.begin(), mask.keep.end(), 1);
    return mask;
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + budget_symbols, order.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     const T sa = emap.flat_get(a), sb = emap.flat_get(b);
                     return sa > sb || (sa == sb && a < b);
                   });
  for (std::int64_t i = 0; i < budget_symbols; ++i) mask.keep[static_cast<std::size_t>(order[i])] = 1;
  return mask;
}

/// Kept elements of the decomposition, gathered per map in ascending flat
/// index order: one vector per frame plus the common vector.
template <typename T>
struct PackedFeatures {
  std::vector<std::vector<T>> individual;  // N vectors
  std::vector<T> common;
};

template <typename T>
PackedFeatures<T> pack(const FeatureDecomposition<T>& decomp, const KeepMask& mask) {
  if (static_cast<std::int64_t>(mask.keep.size()) != decomp.element_count() ||
      mask.common_numel != decomp.common.numel())
    throw ShapeError("pack: mask does not match decomposition");
  PackedFeatures<T> out;
  for (std::int64_t i = 0; i < decomp.common.numel(); ++i) {
    if (mask.keep[static_cast<std::size_t>(i)]) out.common.push_back(decomp.common[i]);
  }
  const int n_frames = decomp.frame_count();
  const std::int64_t per_frame = decomp.individual.numel() / std::max(1, n_frames);
  out.individual.resize(static_cast<std::size_t>(n_frames));
  for (int n = 0; n < n_frames; ++n) {
    for (std::int64_t j = 0; j < per_frame; ++j) {
      const std::int64_t flat = decomp.common.numel() + n * per_frame + j;
      if (mask.keep[static_cast<std::size_t>(flat)])
        out.individual[static_cast<std::size_t>(n)].push_back(decomp.individual[n * per_frame + j]);
    }
  }
  return out;
}

/// Assembles the on-air symbol stream: s_1..s_N carry the per-frame kept
/// elements, s_{N+1} carries the side info followed by the kept common
/// elements. Sum of lengths is the exact symbol budget.
template <typename T>
SymbolStream<T> assemble_stream(const PackedFeatures<T>& packed, const SideInfo& side) {
  SymbolStream<T> stream;
  for (const auto& v : packed.individual) {
    stream.vectors.push_back(v);
    stream.lengths.push_back(static_cast<std::int64_t>(v.size()));
  }
  std::vector<T> tail;
  tail.reserve(static_cast<std::size_t>(side.cost_symbols()) + packed.common.size());
  for (std::int64_t i = 0; i < side.hyper_code.numel(); ++i) tail.push_back(static_cast<T>(side.hyper_code[i]));
  tail.insert(tail.end(), packed.common.begin(), packed.common.end());
  stream.vectors.push_back(std::move(tail));
  stream.lengths.push_back(static_cast<std::int64_t>(stream.vectors.back().size()));
  return stream;
}

/// Scatters received symbols back to full feature dimension. Dropped
/// positions take the Gaussian prior mean, zero.
template <typename T>
FeatureDecomposition<T> unpack(const SymbolStream<T>& stream, const KeepMask& mask,
                               const std::vector<int>& common_shape, const std::vector<int>& individual_shape) {
  FeatureDecomposition<T> decomp;
  decomp.common = Tensor<T>(common_shape);
  decomp.individual = Tensor<T>(individual_shape);
  if (static_cast<std::int64_t>(mask.keep.size()) != decomp.element_count())
    throw FramingError("unpack: mask size does not match feature dimensions");
  const int n_frames = individual_shape[0];
  if (static_cast<int>(stream.vectors.size()) != n_frames + 1)
    throw FramingError("unpack: expected " + std::to_string(n_frames + 1) + " vectors, got " +
                       std::to_string(stream.vectors.size()));
  const std::int64_t per_frame = decomp.individual.numel() / std::max(1, n_frames);
  for (int n = 0; n < n_frames; ++n) {
    const auto& v = stream.vectors[static_cast<std::size_t>(n)];
    std::size_t cursor = 0;
    for (std::int64_t j = 0; j < per_frame; ++j) {
      const std::int64_t flat = decomp.common.numel() + n * per_frame + j;
      if (mask.keep[static_cast<std::size_t>(flat)]) {
        if (cursor >= v.size()) throw FramingError("unpack: frame vector shorter than mask");
        decomp.individual[n * per_frame + j] = v[cursor++];
      }
    }
    if (cursor != v.size()) throw FramingError("unpack: frame vector longer than mask");
  }
  const auto& tail = stream.vectors.back();
  const std::int64_t kept_common = mask.kept_in_common();
  const std::int64_t side_count = static_cast<std::int64_t>(tail.size()) - kept_common;
  if (side_count < 0) throw FramingError("unpack: common vector shorter than mask");
  std::size_t cursor = static_cast<std::size_t>(side_count);
  for (std::int64_t i = 0; i < decomp.common.numel(); ++i) {
    if (mask.keep[static_cast<std::size_t>(i)]) decomp.common[i] = tail[cursor++];
  }
  return decomp;
}

/// Differentiable rate surrogate in bits: sum over elements of the floored
/// Gaussian negative log-likelihood. During training a uniform [-1/2,1/2]
/// perturbation stands in for quantization; pass nullptr for the exact value.
/// When gradient buffers are supplied, d(bits)/dw and d(bits)/dsigma are
/// accumulated into them.
template <typename T>
double rate_loss(const FeatureDecomposition<T>& decomp, const Tensor<T>& sigma, std::mt19937_64* rng,
                 FeatureDecomposition<T>* gw = nullptr, Tensor<T>* gsigma = nullptr) {
  if (sigma.numel() != decomp.element_count()) throw ShapeError("rate_loss: sigma shape mismatch");
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double bits = 0.0;
  for (std::int64_t i = 0; i < decomp.element_count(); ++i) {
    const double s = static_cast<double>(sigma[i]);
    const double w = static_cast<double>(decomp.flat_get(i)) + (rng != nullptr ? u(*rng) : 0.0);
    const double nll = detail::log2_gauss_nll(w, s);
    if (nll <= 0.0) continue;
    bits += nll;
    if (gw != nullptr) gw->flat_add(i, static_cast<T>(w / (s * s) / std::numbers::ln2));
    if (gsigma != nullptr) (*gsigma)[i] += static_cast<T>((1.0 / s - (w * w) / (s * s * s)) / std::numbers::ln2);
  }
  return bits;
}

}  // namespace videojscc

#endif  // VIDEOJSCC_ENTROPY_VLC_HPP
