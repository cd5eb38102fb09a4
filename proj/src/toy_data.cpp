// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#include "videojscc/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "videojscc/image_io.hpp"
#include "videojscc/rng.hpp"

namespace fs = std::filesystem;

namespace videojscc {

namespace {

struct Shape {
  double cx, cy;        // center at frame 0
  double vx, vy;        // pixels per frame
  double radius;
  float color[3];
  bool disk;            // disk or axis-aligned square
};

float smoothstep_edge(double dist, double radius) {
  // soft 1.5-pixel edge so shapes are not pure step functions
  const double t = std::clamp((radius - dist) / 1.5 + 0.5, 0.0, 1.0);
  return static_cast<float>(t * t * (3.0 - 2.0 * t));
}

}  // namespace

Tensor<float> render_toy_clip(const ToyDatasetSpec& spec, int clip_index) {
  std::mt19937_64 rng = make_rng(derive_seed(spec.seed, 0x70beefull, static_cast<std::uint64_t>(clip_index)));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const int h = spec.height, w = spec.width, n = spec.frames_per_clip;

  // Background gradient: random orientation and two endpoint colors.
  float c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = static_cast<float>(0.15 + 0.5 * uni(rng));
    c1[c] = static_cast<float>(0.3 + 0.6 * uni(rng));
  }
  const double angle = 2.0 * 3.14159265358979 * uni(rng);
  const double gx = std::cos(angle), gy = std::sin(angle);
  // The whole background drifts slowly: shared motion across the scene.
  const double bg_vx = (uni(rng) - 0.5) * 2.0;
  const double bg_vy = (uni(rng) - 0.5) * 2.0;

  std::vector<Shape> shapes;
  const int n_shapes = 2 + static_cast<int>(uni(rng) * 2.0);
  for (int s = 0; s < n_shapes; ++s) {
    Shape sh;
    sh.cx = uni(rng) * w;
    sh.cy = uni(rng) * h;
    sh.vx = (uni(rng) - 0.5) * 4.0;
    sh.vy = (uni(rng) - 0.5) * 4.0;
    sh.radius = (0.08 + 0.12 * uni(rng)) * std::min(h, w);
    for (int c = 0; c < 3; ++c) sh.color[c] = static_cast<float>(0.1 + 0.8 * uni(rng));
    sh.disk = uni(rng) < 0.6;
    shapes.push_back(sh);
  }

  // Static corner patch, identical in every frame of the clip.
  const int patch = std::max(4, std::min(h, w) / 8);
  float patch_color[3];
  for (int c = 0; c < 3; ++c) patch_color[c] = static_cast<float>(0.2 + 0.7 * uni(rng));

  Tensor<float> clip({n, 3, h, w});
  for (int f = 0; f < n; ++f) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double xf = x + bg_vx * f, yf = y + bg_vy * f;
        const double t = 0.5 + 0.5 * std::sin(2.0 * 3.14159265358979 * (gx * xf / w + gy * yf / h));
        float px[3];
        for (int c = 0; c < 3; ++c) px[c] = static_cast<float>((1.0 - t) * c0[c] + t * c1[c]);
        for (const Shape& sh : shapes) {
          const double sx = sh.cx + sh.vx * f, sy = sh.cy + sh.vy * f;
          const double dx = x - sx, dy = y - sy;
          const double dist = sh.disk ? std::sqrt(dx * dx + dy * dy) : std::max(std::abs(dx), std::abs(dy));
          const float a = smoothstep_edge(dist, sh.radius);
          if (a > 0.0f)
            for (int c = 0; c < 3; ++c) px[c] = (1.0f - a) * px[c] + a * sh.color[c];
        }
        if (y >= h - patch && x >= w - patch)
          for (int c = 0; c < 3; ++c) px[c] = patch_color[c];
        for (int c = 0; c < 3; ++c) clip.at(f, c, y, x) = std::clamp(px[c], 0.0f, 1.0f);
      }
    }
  }
  return clip;
}

std::string make_toy_dataset(const std::string& dir, const ToyDatasetSpec& spec) {
  fs::create_directories(dir);
  const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
  std::ofstream manifest(manifest_path, std::ios::trunc);
  for (int i = 0; i < spec.clips; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03d", i);
    const fs::path clip_dir = fs::path(dir) / name;
    fs::create_directories(clip_dir);
    const Tensor<float> clip = render_toy_clip(spec, i);
    for (int f = 0; f < spec.frames_per_clip; ++f) {
      char frame_name[32];
      std::snprintf(frame_name, sizeof(frame_name), "frame_%03d.ppm", f);
      write_ppm((clip_dir / frame_name).string(),
                clip.slice0(f, f + 1).reshaped({3, spec.height, spec.width}));
    }
    manifest << name << "\n";
  }
  return manifest_path;
}

}  // namespace videojscc
