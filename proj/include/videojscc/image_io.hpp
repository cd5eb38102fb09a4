// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Frame I/O. Frames live on disk as binary PPM (P6), 8-bit RGB; in memory
// they are [3,H,W] float tensors with intensities in [0,1].

#ifndef VIDEOJSCC_IMAGE_IO_HPP
#define VIDEOJSCC_IMAGE_IO_HPP

#include <string>
#include <vector>

#include "videojscc/tensor.hpp"

namespace videojscc {

Tensor<float> read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor<float>& frame);

/// All .ppm files in a directory, lexicographically sorted (temporal order).
std::vector<std::string> list_frame_files(const std::string& clip_dir);

/// Loads frames [begin, begin+count) of a clip directory into [count,3,H,W].
Tensor<float> read_clip_frames(const std::string& clip_dir, int begin, int count);

}  // namespace videojscc

#endif  // VIDEOJSCC_IMAGE_IO_HPP
