// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#include "videojscc/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "videojscc/errors.hpp"

namespace fs = std::filesystem;

namespace videojscc {

namespace {

// Skips whitespace and '#' comment lines between PPM header tokens.
int read_header_int(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw SchemaError("truncated PPM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

Tensor<float> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open image: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw SchemaError("not a binary PPM (P6) file: " + path);
  const int w = read_header_int(in);
  const int h = read_header_int(in);
  const int maxval = read_header_int(in);
  if (w <= 0 || h <= 0 || maxval != 255) throw SchemaError("unsupported PPM header in " + path);
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw SchemaError("truncated PPM payload in " + path);
  Tensor<float> frame({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = (static_cast<std::size_t>(y) * w + x) * 3;
      for (int c = 0; c < 3; ++c) frame.raw()[(static_cast<std::size_t>(c) * h + y) * w + x] = buf[p + c] / 255.0f;
    }
  }
  return frame;
}

void write_ppm(const std::string& path, const Tensor<float>& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("write_ppm expects [3,H,W], got " + frame.shape_str());
  const int h = frame.dim(1), w = frame.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SchemaError("cannot open image for writing: " + path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = (static_cast<std::size_t>(y) * w + x) * 3;
      for (int c = 0; c < 3; ++c) {
        const float v = frame.raw()[(static_cast<std::size_t>(c) * h + y) * w + x];
        const int q = static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        buf[p + c] = static_cast<unsigned char>(q);
      }
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw SchemaError("failed writing image: " + path);
}

std::vector<std::string> list_frame_files(const std::string& clip_dir) {
  std::vector<std::string> files;
  if (!fs::is_directory(clip_dir)) throw ConfigError("clip directory does not exist: " + clip_dir);
  for (const auto& entry : fs::directory_iterator(clip_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Tensor<float> read_clip_frames(const std::string& clip_dir, int begin, int count) {
  const auto files = list_frame_files(clip_dir);
  if (begin < 0 || begin + count > static_cast<int>(files.size()))
    throw ConfigError("clip " + clip_dir + " has " + std::to_string(files.size()) + " frames, requested [" +
                      std::to_string(begin) + ", " + std::to_string(begin + count) + ")");
  Tensor<float> frames;
  for (int i = 0; i < count; ++i) {
    Tensor<float> f = read_ppm(files[static_cast<std::size_t>(begin + i)]);
    if (i == 0) {
      frames = Tensor<float>({count, 3, f.dim(1), f.dim(2)});
    } else if (f.dim(1) != frames.dim(2) || f.dim(2) != frames.dim(3)) {
      throw ShapeError("frames of clip " + clip_dir + " disagree on dimensions");
    }
    frames.set_slice0(i, f.reshaped({1, 3, f.dim(1), f.dim(2)}));
  }
  return frames;
}

}  // namespace videojscc
