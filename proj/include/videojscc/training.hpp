// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// End-to-end optimization with in-loop channel noise: cosine-annealed Adam,
// random GOP crops, per-step symbol budgets sampled from a CBR grid, and
// bit-exact resumable checkpoints.

#ifndef VIDEOJSCC_TRAINING_HPP
#define VIDEOJSCC_TRAINING_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "videojscc/core_types.hpp"
#include "videojscc/model.hpp"

namespace videojscc {

struct TrainConfig {
  ModelConfig model;

  double lambda_rd = 8192.0;  // rate-distortion tradeoff weight
  double beta_rate = 0.01;    // weight of the differentiable rate surrogate
  double lr_init = 1e-4;
  int batch_size = 32;
  int epochs = 0;             // used when steps == 0: one epoch visits every clip once
  int steps = 0;              // total optimizer steps
  int crop = 256;             // square crop side, divisible by 16
  int gop_size = 6;
  double snr_train_db = 10.0;
  std::uint64_t seed = 1;

  std::vector<double> cbr_grid = {0.005, 0.010, 0.015, 0.020, 0.025};
  int holdout_clips = 1;      // trailing manifest clips reserved for evaluation
  int eval_every = 250;       // held-out PSNR cadence (0 = never)
  int checkpoint_every = 0;   // periodic checkpoint cadence (0 = final only)
  std::string out_dir = "train_out";

  void validate() const;
  /// Resolved optimizer step count (steps, or epochs * clips / batch).
  int total_steps(int usable_clips) const;
};

struct ClipInfo {
  std::string dir;
  int frame_count = 0;
  int height = 0;
  int width = 0;
};

/// Plain-text manifest: one clip directory per line (relative entries are
/// resolved against the manifest's directory). Clips shorter than the GOP
/// size are skipped with a warning at load time.
class ClipManifest {
 public:
  static ClipManifest load(const std::string& manifest_path, int min_frames,
                           std::vector<std::string>* warnings = nullptr);
  /// Builds a manifest over explicit clip directories (no file needed).
  static ClipManifest from_dirs(const std::vector<std::string>& clip_dirs, int min_frames,
                                std::vector<std::string>* warnings = nullptr);

  const std::vector<ClipInfo>& clips() const { return clips_; }
  bool empty() const { return clips_.empty(); }

  /// Frames of clip i, cached in memory after the first access.
  const Tensor<float>& clip_frames(std::size_t i) const;

 private:
  std::vector<ClipInfo> clips_;
  mutable std::vector<Tensor<float>> cache_;
};

/// Cosine annealing: lr_init at step 0, 0 at step == total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, double lr_init);

/// Training objective: lambda * (realized_cbr + beta * rate_bits / (N*m)) +
/// MSE(gop, gop_hat). The realized CBR is constant under a fixed budget and
/// contributes no gradient; the rate surrogate trains the entropy model.
template <typename T>
double loss(const Tensor<T>& gop, const Tensor<T>& gop_hat, double realized_cbr, double rate_bits,
            double lambda_rd, double beta_rate) {
  const GopDims dims{gop.dim(0), gop.dim(2), gop.dim(3)};
  return lambda_rd * (realized_cbr + beta_rate * rate_bits / static_cast<double>(dims.total_dim())) +
         mse(gop, gop_hat);
}

/// Samples a batch [B, gop_size, 3, crop, crop]: uniform clip, uniform start
/// frame, one shared crop window per GOP.
Tensor<float> sample_batch(const ClipManifest& manifest, const TrainConfig& cfg, std::uint64_t seed,
                           int usable_clips);

struct TrainLogRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double mse = 0.0;
  double rate_bits = 0.0;
};

struct TrainResult {
  std::unique_ptr<Model<float>> model;
  std::vector<TrainLogRow> log;
  std::string checkpoint_path;  // final checkpoint
  double final_holdout_psnr_db = 0.0;
};

/// Runs the full optimization; writes train_log.csv, eval.csv and
/// checkpoint files under cfg.out_dir. `resume_from`, when set, must be a
/// checkpoint with optimizer state; the continued run reproduces the
/// trajectory the uninterrupted run would have taken.
TrainResult train(const ClipManifest& manifest, const TrainConfig& cfg,
                  const std::optional<std::string>& resume_from = std::nullopt);

/// Held-out reconstruction quality: first GOP of each held-out clip at the
/// given CBR/SNR, averaged.
double evaluate_holdout_psnr(Model<float>& model, const ClipManifest& manifest, const TrainConfig& cfg,
                             double cbr, double snr_db, std::uint64_t seed);

}  // namespace videojscc

#endif  // VIDEOJSCC_TRAINING_HPP
