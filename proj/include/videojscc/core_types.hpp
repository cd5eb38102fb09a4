// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Shared vocabulary of the transmission pipeline: groups of pictures, feature
// tensors, the common/individual feature split, symbol streams and bandwidth
// accounting. All types are immutable value objects once constructed.

#ifndef VIDEOJSCC_CORE_TYPES_HPP
#define VIDEOJSCC_CORE_TYPES_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "videojscc/errors.hpp"
#include "videojscc/tensor.hpp"

namespace videojscc {

/// Spatial downsampling factor of the transmit path (one stride-2 stage in
/// the latent transform, three in the feature encoder). Frame sides must be
/// divisible by it.
inline constexpr int kSpatialFactor = 16;

struct GopDims {
  int frames = 0;  // N
  int height = 0;  // H
  int width = 0;   // W

  /// Per-frame source dimension m = 3*H*W.
  std::int64_t frame_dim() const { return static_cast<std::int64_t>(3) * height * width; }
  /// Total source dimension N*m; the denominator of the bandwidth ratio.
  std::int64_t total_dim() const { return static_cast<std::int64_t>(frames) * frame_dim(); }
};

/// A group of pictures: N frames of [3,H,W] intensities in [0,1].
template <typename T>
struct VideoGop {
  Tensor<T> frames;  // [N, 3, H, W]

  GopDims dims() const { return {frames.dim(0), frames.dim(2), frames.dim(3)}; }
};

/// One common feature map shared by the whole group plus one individual
/// (residual) map per frame. common + individual[n] reproduces the encoder
/// output for frame n exactly.
template <typename T>
struct FeatureDecomposition {
  Tensor<T> common;      // [1, C, h, w]
  Tensor<T> individual;  // [N, C, h, w]

  int frame_count() const { return individual.dim(0); }
  std::int64_t element_count() const { return common.numel() + individual.numel(); }

  /// Flat element order used everywhere a joint ranking or mask is involved:
  /// all common elements first, then individual frames in order.
  T flat_get(std::int64_t i) const { return i < common.numel() ? common[i] : individual[i - common.numel()]; }
  void flat_add(std::int64_t i, T v) {
    if (i < common.numel())
      common[i] += v;
    else
      individual[i - common.numel()] += v;
  }
};

/// Variable-length channel-input vectors for one group: per-frame individual
/// symbols s_1..s_N followed by the side-info + common vector s_{N+1}.
/// `lengths[n]` is the symbol count k_n charged against the budget.
template <typename T>
struct SymbolStream {
  std::vector<std::vector<T>> vectors;  // N+1 entries
  std::vector<std::int64_t> lengths;    // N+1 entries, lengths[n] == vectors[n].size()

  std::int64_t total_symbols() const {
    std::int64_t s = 0;
    for (auto l : lengths) s += l;
    return s;
  }
};

/// Symbol budget derived from a target channel bandwidth ratio.
struct BandwidthBudget {
  double target_cbr = 0.0;
  std::int64_t total_symbols = 0;

  static BandwidthBudget from_cbr(double cbr, const GopDims& dims) {
    if (dims.frames <= 0 || dims.height <= 0 || dims.width <= 0)
      throw ShapeError("bandwidth budget needs a non-degenerate GOP");
    if (!(cbr > 0.0)) throw RangeError("target CBR must be positive");
    BandwidthBudget b;
    b.target_cbr = cbr;
    // Tiny epsilon so ratios that are mathematically integral do not lose a
    // symbol to floating-point representation of the grid value.
    b.total_symbols = static_cast<std::int64_t>(std::floor(cbr * static_cast<double>(dims.total_dim()) + 1e-9));
    return b;
  }

  static BandwidthBudget from_symbols(std::int64_t symbols, const GopDims& dims) {
    BandwidthBudget b;
    b.total_symbols = symbols;
    b.target_cbr = static_cast<double>(symbols) / static_cast<double>(dims.total_dim());
    return b;
  }
};

/// Channel bandwidth ratio of a stream over a GOP: transmitted symbols
/// divided by the total source dimension N*3*H*W. One channel use is one
/// real-valued symbol.
template <typename T>
double compute_cbr(const SymbolStream<T>& stream, const GopDims& dims) {
  if (dims.frames <= 0 || dims.height <= 0 || dims.width <= 0)
    throw ShapeError("compute_cbr: zero-dimension GOP");
  for (std::size_t n = 0; n < stream.vectors.size(); ++n) {
    if (static_cast<std::int64_t>(stream.vectors[n].size()) != stream.lengths[n])
      throw FramingError("compute_cbr: vector length disagrees with recorded k_n");
  }
  return static_cast<double>(stream.total_symbols()) / static_cast<double>(dims.total_dim());
}

/// Checks that raw intensities form a well-shaped GOP: 4-D [N,3,H,W], all
/// values in [0,1], sides divisible by the transmit path downsampling.
template <typename T>
VideoGop<T> validate_gop(const Tensor<T>& raw) {
  if (raw.rank() != 4) throw ShapeError("GOP must be 4-dimensional [N,3,H,W], got " + raw.shape_str());
  const int n = raw.dim(0), c = raw.dim(1), h = raw.dim(2), w = raw.dim(3);
  if (n < 1) throw ShapeError("GOP needs at least one frame");
  if (c != 3) throw ShapeError("GOP frames must have 3 channels, got " + std::to_string(c));
  if (h % kSpatialFactor != 0 || w % kSpatialFactor != 0) {
    std::ostringstream os;
    os << "frame sides must be divisible by " << kSpatialFactor << ", got " << h << "x" << w;
    throw ShapeError(os.str());
  }
  for (std::int64_t i = 0; i < raw.numel(); ++i) {
    const double v = static_cast<double>(raw[i]);
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream os;
      os << "pixel intensity " << v << " outside [0,1] at flat index " << i;
      throw RangeError(os.str());
    }
  }
  return VideoGop<T>{raw};
}

}  // namespace videojscc

#endif  // VIDEOJSCC_CORE_TYPES_HPP
