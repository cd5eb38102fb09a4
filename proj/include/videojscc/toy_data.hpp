// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Synthetic clip generator: smooth gradient backgrounds, moving shapes with
// shared motion, and a static corner patch. Enough temporal structure to
// exercise the common/individual feature split, small enough for quick
// desk-scale training runs.

#ifndef VIDEOJSCC_TOY_DATA_HPP
#define VIDEOJSCC_TOY_DATA_HPP

#include <cstdint>
#include <string>

#include "videojscc/tensor.hpp"

namespace videojscc {

struct ToyDatasetSpec {
  int clips = 12;
  int frames_per_clip = 8;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 7;
};

/// Renders one clip [frames,3,H,W] deterministically from (seed, clip index).
Tensor<float> render_toy_clip(const ToyDatasetSpec& spec, int clip_index);

/// Writes clips and a manifest under `dir`; returns the manifest path.
std::string make_toy_dataset(const std::string& dir, const ToyDatasetSpec& spec);

}  // namespace videojscc

#endif  // VIDEOJSCC_TOY_DATA_HPP
