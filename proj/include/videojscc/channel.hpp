// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Power normalization and the noisy-channel transfer function. AWGN is the
// only noisy kind; identity stands in for a perfect channel.

#ifndef VIDEOJSCC_CHANNEL_HPP
#define VIDEOJSCC_CHANNEL_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "videojscc/errors.hpp"
#include "videojscc/rng.hpp"

namespace videojscc {

enum class ChannelKind { awgn, identity };

struct ChannelConfig {
  ChannelKind kind = ChannelKind::awgn;
  double snr_db = 10.0;
  std::uint64_t seed = 0;
};

inline ChannelKind channel_kind_from_string(const std::string& s) {
  if (s == "awgn") return ChannelKind::awgn;
  if (s == "identity") return ChannelKind::identity;
  throw ConfigError("unknown channel kind '" + s + "' (expected awgn or identity)");
}

/// Noise variance for unit signal power: sigma^2 = 10^(-snr_db/10).
inline double noise_variance(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

/// Scales s by sqrt(k)/||s|| so average per-symbol power is exactly 1.
/// Throws for empty input; all-zero input throws in strict mode, otherwise
/// transmits silence (all zeros) and reports it via `degenerate`.
template <typename T>
std::vector<T> power_normalize(const std::vector<T>& s, bool strict = true, bool* degenerate = nullptr) {
  if (s.empty()) throw RangeError("power_normalize: empty symbol vector");
  long double sq = 0.0L;
  for (const T& v : s) sq += static_cast<long double>(v) * static_cast<long double>(v);
  if (degenerate != nullptr) *degenerate = false;
  if (sq == 0.0L) {
    if (strict) throw RangeError("power_normalize: all-zero symbol vector");
    if (degenerate != nullptr) *degenerate = true;
    return std::vector<T>(s.size(), T(0));
  }
  const long double scale = std::sqrt(static_cast<long double>(s.size()) / sq);
  std::vector<T> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<T>(s[i] * scale);
  return out;
}

/// Applies the channel transfer function to a normalized vector. AWGN adds
/// iid Gaussian noise with variance 10^(-snr/10); identity passes through.
/// One fresh generator per transmission, seeded from cfg.seed.
template <typename T>
std::vector<T> transmit(const std::vector<T>& s_norm, const ChannelConfig& cfg) {
  if (cfg.kind == ChannelKind::identity) return s_norm;
  if (!std::isfinite(cfg.snr_db)) throw RangeError("transmit: SNR must be finite");
  const double sigma = std::sqrt(noise_variance(cfg.snr_db));
  std::mt19937_64 rng = make_rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<T> out(s_norm.size());
  for (std::size_t i = 0; i < s_norm.size(); ++i) out[i] = static_cast<T>(s_norm[i] + noise(rng));
  return out;
}

}  // namespace videojscc

#endif  // VIDEOJSCC_CHANNEL_HPP
