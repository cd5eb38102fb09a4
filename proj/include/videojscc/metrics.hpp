// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Distortion and quality measurement: MSE, PSNR, multi-scale SSIM and the
// -10*log10(1-d) decibel convention for the latter. All math runs in double
// regardless of the frame scalar type.

#ifndef VIDEOJSCC_METRICS_HPP
#define VIDEOJSCC_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "videojscc/errors.hpp"
#include "videojscc/tensor.hpp"

namespace videojscc {

/// Gaussian window used for SSIM statistics: 11 taps, sigma 1.5.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;  // on the [0,1] intensity range
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Standard five MS-SSIM scale exponents.
inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Largest scale count M <= 5 such that the coarsest scale still fits one
/// 11-tap window.
inline int ms_ssim_scales_for(int height, int width) {
  int m = 0;
  int side = std::min(height, width);
  while (m < 5 && side >= kSsimWindow) {
    ++m;
    side /= 2;
  }
  return m;
}

template <typename T>
double mse(const Tensor<T>& x, const Tensor<T>& y) {
  if (!x.same_shape(y)) throw ShapeError("mse: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  if (x.numel() == 0) throw ShapeError("mse: empty input");
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(x.numel());
}

/// 10*log10(1/MSE) on [0,1] intensities; identical frames give +infinity.
inline double psnr_from_mse(double m) {
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y) {
  return psnr_from_mse(mse(x, y));
}

/// -10*log10(1-d); d == 1 gives +infinity.
inline double ms_ssim_db(double d) {
  if (d >= 1.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(1.0 - d);
}

namespace detail {

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * w + j]; }
};

inline std::vector<double> gaussian_taps() {
  std::vector<double> taps(kSsimWindow);
  const int half = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - half;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

/// Valid-mode separable Gaussian filter.
inline Plane gauss_filter(const Plane& p) {
  const auto taps = gaussian_taps();
  const int oh = p.h - kSsimWindow + 1;
  const int ow = p.w - kSsimWindow + 1;
  Plane tmp{oh, p.w, std::vector<double>(static_cast<std::size_t>(oh) * p.w)};
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < p.w; ++j) {
      double acc = 0.0;
      for (int t = 0; t < kSsimWindow; ++t) acc += taps[static_cast<std::size_t>(t)] * p.at(i + t, j);
      tmp.at(i, j) = acc;
    }
  }
  Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int t = 0; t < kSsimWindow; ++t) acc += taps[static_cast<std::size_t>(t)] * tmp.at(i, j + t);
      out.at(i, j) = acc;
    }
  }
  return out;
}

/// 2x2 average pooling; odd trailing row/column dropped.
inline Plane downsample2(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int i = 0; i < out.h; ++i) {
    for (int j = 0; j < out.w; ++j) {
      out.at(i, j) = 0.25 * (p.at(2 * i, 2 * j) + p.at(2 * i, 2 * j + 1) + p.at(2 * i + 1, 2 * j) +
                             p.at(2 * i + 1, 2 * j + 1));
    }
  }
  return out;
}

struct ScaleStats {
  double mean_cs = 0.0;
  double mean_lum = 0.0;
};

inline ScaleStats ssim_scale_stats(const Plane& x, const Plane& y) {
  Plane x2 = x, y2 = y, xy = x;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    x2.v[i] = x.v[i] * x.v[i];
    y2.v[i] = y.v[i] * y.v[i];
    xy.v[i] = x.v[i] * y.v[i];
  }
  const Plane mx = gauss_filter(x);
  const Plane my = gauss_filter(y);
  const Plane mxx = gauss_filter(x2);
  const Plane myy = gauss_filter(y2);
  const Plane mxy = gauss_filter(xy);
  double cs_acc = 0.0, lum_acc = 0.0;
  for (std::size_t i = 0; i < mx.v.size(); ++i) {
    const double mu_x = mx.v[i], mu_y = my.v[i];
    const double var_x = mxx.v[i] - mu_x * mu_x;
    const double var_y = myy.v[i] - mu_y * mu_y;
    const double cov = mxy.v[i] - mu_x * mu_y;
    cs_acc += (2.0 * cov + kSsimC2) / (var_x + var_y + kSsimC2);
    lum_acc += (2.0 * mu_x * mu_y + kSsimC1) / (mu_x * mu_x + mu_y * mu_y + kSsimC1);
  }
  const double n = static_cast<double>(mx.v.size());
  return {cs_acc / n, lum_acc / n};
}

}  // namespace detail

/// Multi-scale SSIM of one frame pair [C,H,W], per Wang et al.: the
/// contrast-structure term enters at every scale, luminance only at the
/// coarsest. Channels are evaluated independently and averaged. With fewer
/// than five feasible scales the leading standard weights are renormalized.
/// Returns the value in [0,1]; `scales_out`, when non-null, reports M.
template <typename T>
double ms_ssim(const Tensor<T>& x, const Tensor<T>& y, int* scales_out = nullptr) {
  if (!x.same_shape(y)) throw ShapeError("ms_ssim: shape mismatch");
  if (x.rank() != 3) throw ShapeError("ms_ssim: expected one frame [C,H,W], got " + x.shape_str());
  const int channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int m = ms_ssim_scales_for(h, w);
  if (m < 1) throw ShapeError("ms_ssim: frame too small for one 11x11 window");
  if (scales_out != nullptr) *scales_out = m;

  double weight_sum = 0.0;
  for (int j = 0; j < m; ++j) weight_sum += kMsSsimWeights[j];

  double channel_acc = 0.0;
  for (int c = 0; c < channels; ++c) {
    detail::Plane px{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
    detail::Plane py = px;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        px.at(i, j) = static_cast<double>(x[(static_cast<std::int64_t>(c) * h + i) * w + j]);
        py.at(i, j) = static_cast<double>(y[(static_cast<std::int64_t>(c) * h + i) * w + j]);
      }
    }
    double value = 1.0;
    for (int scale = 0; scale < m; ++scale) {
      if (scale > 0) {
        px = detail::downsample2(px);
        py = detail::downsample2(py);
      }
      const auto stats = detail::ssim_scale_stats(px, py);
      const double wj = kMsSsimWeights[scale] / weight_sum;
      value *= std::pow(std::max(0.0, stats.mean_cs), wj);
      if (scale == m - 1) value *= std::pow(std::max(0.0, stats.mean_lum), wj);
    }
    channel_acc += value;
  }
  return channel_acc / channels;
}

/// Quality summary for one transmitted GOP. The GOP-level figure is the mean
/// of the per-frame figures.
struct QualityReport {
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  double ms_ssim_db = 0.0;
  double cbr = 0.0;
  double snr_db = 0.0;
  int ms_ssim_scales = 0;
  std::vector<double> per_frame_psnr_db;
  std::vector<double> per_frame_ms_ssim;
};

/// Per-frame metrics over [N,3,H,W] stacks, aggregated by the mean.
template <typename T>
QualityReport measure_quality(const Tensor<T>& reference, const Tensor<T>& reconstruction, double cbr,
                              double snr_db) {
  if (!reference.same_shape(reconstruction)) throw ShapeError("measure_quality: shape mismatch");
  QualityReport q;
  q.cbr = cbr;
  q.snr_db = snr_db;
  const int n = reference.dim(0);
  double psnr_acc = 0.0, ssim_acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Tensor<T> xf = reference.slice0(i, i + 1).reshaped({reference.dim(1), reference.dim(2), reference.dim(3)});
    const Tensor<T> yf =
        reconstruction.slice0(i, i + 1).reshaped({reference.dim(1), reference.dim(2), reference.dim(3)});
    const double p = psnr(xf, yf);
    const double s = ms_ssim(xf, yf, &q.ms_ssim_scales);
    q.per_frame_psnr_db.push_back(p);
    q.per_frame_ms_ssim.push_back(s);
    psnr_acc += p;
    ssim_acc += s;
  }
  q.psnr_db = psnr_acc / n;
  q.ms_ssim = ssim_acc / n;
  q.ms_ssim_db = videojscc::ms_ssim_db(q.ms_ssim);
  return q;
}

}  // namespace videojscc

#endif  // VIDEOJSCC_METRICS_HPP
